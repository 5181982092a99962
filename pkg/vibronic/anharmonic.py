import math
from typing import Final

import numpy as np
from loguru import logger
from scipy.optimize import brentq, root

from .errors import ArgumentError, DesignError
from .models import SquidCircuit, TaylorExpansion

VALIDITY_WINDOW: Final = 0.9
DESIGN_TOLERANCE: Final = 1e-6
SCAN_POINTS: Final = 4001

# (L/L_J, Phi/phi0) of the reference family of potential curves
CURVE_FAMILY: Final = ((0.0, 0.0), (0.5, 0.0), (0.7, -math.pi / 2), (0.9, -math.pi / 4))


def potential_derivative(circuit: SquidCircuit, phi, order: int = 0):
    """d^n V / d phi^n of V = -E_J cos((phi - Phi)/phi0) + phi^2 / 2L, n = 0..4."""
    phi = np.asarray(phi, dtype=float)
    theta = (phi - circuit.phi_ext) / circuit.phi0
    scale = circuit.ej / circuit.phi0**order
    match order:
        case 0:
            return -circuit.ej * np.cos(theta) + phi**2 / (2 * circuit.l)
        case 1:
            return scale * np.sin(theta) + phi / circuit.l
        case 2:
            return scale * np.cos(theta) + 1.0 / circuit.l
        case 3:
            return -scale * np.sin(theta)
        case 4:
            return -scale * np.cos(theta)
    raise ArgumentError(f"derivative order {order} is not available")


def _seed(circuit: SquidCircuit) -> float:
    ratio = circuit.l_over_lj
    if 1.0 + ratio == 0.0:
        return circuit.phi_ext
    return circuit.phi_ext * ratio / (1.0 + ratio)


def _polish(circuit: SquidCircuit, phi: float) -> float:
    for _ in range(3):
        curvature = float(potential_derivative(circuit, phi, 2))
        if curvature <= 0:
            break
        phi -= float(potential_derivative(circuit, phi, 1)) / curvature
    return phi


def find_minimum(circuit: SquidCircuit) -> float:
    """
    Local minimum of the circuit potential closest to Phi / (1 + L_J/L).
    For |L/L_J| < 1 the potential is convex and the minimum is unique.
    """
    ratio = circuit.l_over_lj
    phi0 = circuit.phi0
    if circuit.ej == 0:
        return 0.0
    gradient = lambda phi: float(potential_derivative(circuit, phi, 1))  # noqa: E731

    if abs(ratio) < 1:
        if circuit.phi_ext == 0:
            return 0.0
        half_width = (abs(ratio) + 0.1) * phi0
        phi = brentq(gradient, -half_width, half_width, xtol=1e-15 * phi0, rtol=1e-15)
        return _polish(circuit, phi)

    seed = _seed(circuit)
    grid = np.linspace(seed - math.pi * phi0, seed + math.pi * phi0, SCAN_POINTS)
    values = potential_derivative(circuit, grid, 1)
    crossings = np.nonzero((values[:-1] < 0) & (values[1:] >= 0))[0]
    if crossings.size == 0:
        raise DesignError(f"no minimum within pi*phi0 of the seed {seed:.6g}")
    best = crossings[np.argmin(np.abs(grid[crossings] - seed))]
    if values[best + 1] == 0:
        return float(grid[best + 1])
    phi = brentq(gradient, grid[best], grid[best + 1], xtol=1e-15 * phi0, rtol=1e-15)
    return _polish(circuit, phi)


def leading_order_ratios(circuit: SquidCircuit) -> tuple[float, float]:
    """Stiff-inductor estimates of c3/c2 and c4/c2 in Taylor normalisation."""
    ratio = circuit.l_over_lj
    phi0_sq = circuit.phi0**2
    if 1.0 + ratio == 0.0:
        return math.nan, -ratio / (12 * phi0_sq)
    return (
        circuit.phi_ext * ratio / (3 * (1 + ratio) * phi0_sq),
        -ratio / (12 * phi0_sq),
    )


def taylor_coefficients(circuit: SquidCircuit) -> TaylorExpansion:
    phi_min = find_minimum(circuit)
    c2 = float(potential_derivative(circuit, phi_min, 2)) / 2
    if c2 <= 0:
        raise DesignError(f"stationary point {phi_min:.6g} is not a proper minimum")
    return TaylorExpansion(
        phi_min=phi_min,
        c2=c2,
        c3=float(potential_derivative(circuit, phi_min, 3)) / 6,
        c4=float(potential_derivative(circuit, phi_min, 4)) / 24,
        leading_order=leading_order_ratios(circuit),
    )


def potential_curve(circuit: SquidCircuit, phi_grid) -> np.ndarray:
    phi_grid = np.asarray(phi_grid, dtype=float)
    if not np.all(np.isfinite(phi_grid)):
        raise ArgumentError("phi grid must be finite")
    return potential_derivative(circuit, phi_grid, 0)


def _design_seed(t3: float, t4: float, phi0: float) -> tuple[float, float]:
    # exact for Phi = 0, first order in Phi otherwise
    denominator = 1.0 + 12.0 * phi0**2 * t4
    if denominator == 0:
        raise DesignError("target c4/c2 = -1/(12 phi0^2) needs an infinite junction")
    ratio = -12.0 * phi0**2 * t4 / denominator
    if ratio == 0:
        if t3 != 0:
            raise DesignError("c3 cannot be tuned without a junction (c4/c2 = 0)", abs(t3))
        return 0.0, 0.0
    return ratio, 3.0 * t3 * (1.0 + ratio) ** 2 * phi0**2 / ratio


def design_anharmonicity(
    target_c3_over_c2: float, target_c4_over_c2: float, phi0: float = 1.0, l: float = 1.0  # noqa: E741
) -> SquidCircuit:
    """
    Circuit whose Taylor ratios c3/c2 and c4/c2 at the minimum equal the
    targets. The leading-order inversion seeds a root search on the exact
    coefficients.
    """
    t3, t4 = float(target_c3_over_c2), float(target_c4_over_c2)
    ratio, phi_ext = _design_seed(t3, t4, phi0)
    if abs(ratio) > VALIDITY_WINDOW:
        raise DesignError(
            f"targets need |L/L_J| = {abs(ratio):.3f} beyond the validity window {VALIDITY_WINDOW}",
        )
    if ratio == 0:
        return SquidCircuit.from_ratio(0.0, 0.0, phi0, l)

    def residual(x: np.ndarray) -> np.ndarray:
        try:
            expansion = taylor_coefficients(SquidCircuit.from_ratio(x[0], x[1] * phi0, phi0, l))
        except DesignError:
            return np.array([1e3, 1e3])
        r3, r4 = expansion.ratios
        return np.array([r3 - t3, r4 - t4]) * phi0**2

    solution = root(residual, np.array([ratio, phi_ext / phi0]), method="hybr", tol=1e-14)
    best = float(np.abs(residual(solution.x)).max()) / phi0**2
    ratio, phi_ext = float(solution.x[0]), float(solution.x[1] * phi0)
    if abs(ratio) > VALIDITY_WINDOW:
        raise DesignError(
            f"refinement left the validity window (L/L_J = {ratio:.4f})", best
        )
    scale = max(abs(t3), abs(t4), 1e-3 / phi0**2)
    if best > DESIGN_TOLERANCE * scale:
        raise DesignError(f"refinement did not converge: {solution.message}", best)

    logger.info(f"designed L/L_J={ratio:.9g}, Phi={phi_ext:.9g}, residual {best:.2e}")
    return SquidCircuit.from_ratio(ratio, phi_ext, phi0, l)
