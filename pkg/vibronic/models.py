import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

from .errors import ArgumentError, ModelError, NumericalError
from .utils import symmetric_power, symplectic_form

SYMMETRY_TOLERANCE = 1e-12
PSD_TOLERANCE = 1e-10
KERNEL_THRESHOLD = 1e-9
UNCERTAINTY_TOLERANCE = 1e-10
SYMPLECTIC_TOLERANCE = 1e-9

Profile = Literal["linear", "smooth", "step"]
Integrator = Literal["magnus4", "midpoint"]
PlanMode = Literal["force-field", "normal-mode"]
DriveConvention = Literal["literal", "centered"]


def _as_matrix(value, name: str) -> np.ndarray:
    matrix = np.array(value, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ArgumentError(f"{name} must be a square matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ArgumentError(f"{name} has non-finite entries")
    return matrix


def _as_vector(value, name: str, size: int) -> np.ndarray:
    vector = np.array(value, dtype=float).reshape(-1)
    if vector.shape != (size,):
        raise ArgumentError(f"{name} must have {size} entries, got {vector.size}")
    if not np.all(np.isfinite(vector)):
        raise ArgumentError(f"{name} has non-finite entries")
    return vector


def _is_symmetric(matrix: np.ndarray, tolerance: float = SYMMETRY_TOLERANCE) -> bool:
    scale = max(np.linalg.norm(matrix), 1e-300)
    return np.linalg.norm(matrix - matrix.T) <= tolerance * scale


def _freeze(*arrays: np.ndarray) -> None:
    for array in arrays:
        if array is not None:
            array.setflags(write=False)


@dataclass(frozen=True, eq=False)
class ForceField:
    """Harmonic force field of one electronic configuration (molecular units)."""

    masses: np.ndarray
    hessian: np.ndarray
    equilibrium: np.ndarray
    label: str = "initial"

    def __post_init__(self):
        masses = np.array(self.masses, dtype=float).reshape(-1)
        hessian = _as_matrix(self.hessian, "hessian")
        n = masses.size
        if hessian.shape != (n, n):
            raise ModelError(
                f"hessian shape {hessian.shape} does not match {n} masses"
            )
        equilibrium = _as_vector(self.equilibrium, "equilibrium", n)
        if n == 0 or np.any(masses <= 0) or not np.all(np.isfinite(masses)):
            raise ModelError("masses must be finite and strictly positive")
        if not _is_symmetric(hessian):
            raise ModelError("hessian is not symmetric")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "hessian", 0.5 * (hessian + hessian.T))
        object.__setattr__(self, "equilibrium", equilibrium)
        _freeze(self.masses, self.hessian, self.equilibrium)

        weighted = self.mass_weighted_hessian
        lowest = np.linalg.eigvalsh(weighted).min()
        if lowest < -PSD_TOLERANCE * max(np.linalg.norm(weighted, 2), 1e-300):
            raise ModelError(
                f"mass-weighted hessian of '{self.label}' is not positive "
                f"semi-definite (lowest eigenvalue {lowest:.3e})"
            )

    @property
    def dimension(self) -> int:
        return self.masses.size

    @cached_property
    def mass_weighted_hessian(self) -> np.ndarray:
        inv_sqrt = 1.0 / np.sqrt(self.masses)
        weighted = inv_sqrt[:, None] * self.hessian * inv_sqrt[None, :]
        return 0.5 * (weighted + weighted.T)


@dataclass(frozen=True, eq=False)
class NormalModes:
    frequencies: np.ndarray
    modes: np.ndarray
    kernel_dim: int

    @property
    def physical_frequencies(self) -> np.ndarray:
        return self.frequencies[self.kernel_dim :]


@dataclass(frozen=True, eq=False)
class GaussianState:
    """
    First moments r and anticommutator second moments Gamma of the canonical
    vector R = (X_1..X_N, P_1..P_N), centred on r.
    """

    mean: np.ndarray
    second_moments: np.ndarray

    def __post_init__(self):
        gamma = _as_matrix(self.second_moments, "second_moments")
        if gamma.shape[0] % 2:
            raise ArgumentError("second moments must be 2N x 2N")
        mean = _as_vector(self.mean, "mean", gamma.shape[0])
        if not _is_symmetric(gamma, 1e-10):
            raise ModelError("second-moment matrix is not symmetric")
        gamma = 0.5 * (gamma + gamma.T)
        sigma = symplectic_form(gamma.shape[0] // 2)
        lowest = np.linalg.eigvalsh(gamma + 1j * sigma).min()
        if lowest < -UNCERTAINTY_TOLERANCE * max(1.0, np.linalg.norm(gamma, 2)):
            raise ModelError(
                f"second moments violate the uncertainty relation ({lowest:.3e})"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "second_moments", gamma)
        _freeze(self.mean, self.second_moments)

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2


@dataclass(frozen=True, eq=False)
class EmulatorModel:
    """
    Resonator array H = q^T C^-1 q / 2 + phi^T B phi / 2 - phi^T V.

    frequency_scale fixes the canonical R coordinates used by the dynamics:
    X = sqrt(s) C^1/2 phi, P = C^-1/2 q / sqrt(s).
    """

    capacitance: np.ndarray
    coupling: np.ndarray
    driving: np.ndarray
    kappa: float = 1.0
    frequency_scale: float = 1.0

    def __post_init__(self):
        capacitance = _as_matrix(self.capacitance, "capacitance")
        coupling = _as_matrix(self.coupling, "coupling")
        n = capacitance.shape[0]
        if coupling.shape != (n, n):
            raise ArgumentError(
                f"coupling shape {coupling.shape} does not match capacitance {n}x{n}"
            )
        driving = _as_vector(self.driving, "driving", n)
        if not _is_symmetric(capacitance):
            raise ModelError("capacitance matrix is not symmetric")
        if np.linalg.eigvalsh(capacitance).min() <= 0:
            raise ModelError("capacitance matrix is not positive definite")
        if not _is_symmetric(coupling, 1e-10):
            raise ModelError("coupling matrix is not symmetric")
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ArgumentError("kappa must be positive")
        if not (self.frequency_scale > 0 and math.isfinite(self.frequency_scale)):
            raise ArgumentError("frequency_scale must be positive")
        object.__setattr__(self, "capacitance", 0.5 * (capacitance + capacitance.T))
        object.__setattr__(self, "coupling", 0.5 * (coupling + coupling.T))
        object.__setattr__(self, "driving", driving)
        _freeze(self.capacitance, self.coupling, self.driving)

    @property
    def dimension(self) -> int:
        return self.driving.size

    @cached_property
    def capacitance_inv_sqrt(self) -> np.ndarray:
        return symmetric_power(self.capacitance, -0.5)

    @cached_property
    def reduced_coupling(self) -> np.ndarray:
        """C^-1/2 B C^-1/2, whose eigenvalues are the squared frequencies."""
        c = self.capacitance_inv_sqrt
        reduced = c @ self.coupling @ c
        return 0.5 * (reduced + reduced.T)

    @cached_property
    def frequencies(self) -> np.ndarray:
        values = np.linalg.eigvalsh(self.reduced_coupling)
        return np.sqrt(np.clip(values, 0.0, None))

    @cached_property
    def hamiltonian_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """D and W of H = R^T D R / 2 - R^T W in R coordinates."""
        n = self.dimension
        s = self.frequency_scale
        d = np.zeros((2 * n, 2 * n))
        d[:n, :n] = self.reduced_coupling / s
        d[n:, n:] = s * np.eye(n)
        w = np.zeros(2 * n)
        w[:n] = self.capacitance_inv_sqrt @ self.driving / math.sqrt(s)
        _freeze(d, w)
        return d, w


@dataclass(frozen=True)
class HardwareConstraints:
    omega_min: float
    omega_max: float
    b_max: float | None = None
    t_cryo: float | None = None

    def __post_init__(self):
        values = [self.omega_min, self.omega_max]
        values += [v for v in (self.b_max, self.t_cryo) if v is not None]
        if any(not (v > 0 and math.isfinite(v)) for v in values):
            raise ArgumentError("hardware constraints must be positive and finite")
        if self.omega_min >= self.omega_max:
            raise ArgumentError("omega_min must be below omega_max")


@dataclass(frozen=True, eq=False)
class ProtocolPlan:
    b_start: np.ndarray
    b_end: np.ndarray
    v_start: np.ndarray
    v_end: np.ndarray
    capacitance: np.ndarray
    kappa: float = 1.0
    frequency_scale: float = 1.0
    mode: PlanMode = "force-field"
    basis: np.ndarray | None = None
    final_frequencies: np.ndarray | None = None
    drive_convention: DriveConvention = "literal"

    def __post_init__(self):
        b_start = _as_matrix(self.b_start, "b_start")
        b_end = _as_matrix(self.b_end, "b_end")
        n = b_start.shape[0]
        if b_end.shape != (n, n):
            raise ArgumentError("b_start and b_end dimensions differ")
        v_start = _as_vector(self.v_start, "v_start", n)
        v_end = _as_vector(self.v_end, "v_end", n)
        if np.any(v_end != 0.0):
            raise ModelError("the final drive of a plan must vanish")
        if self.mode == "normal-mode":
            off = b_end - np.diag(np.diag(b_end))
            if np.abs(off).max(initial=0.0) > 1e-12 * max(np.abs(b_end).max(), 1e-300):
                raise ModelError("normal-mode plans need a diagonal final coupling")
        elif self.mode != "force-field":
            raise ArgumentError(f"unknown plan mode '{self.mode}'")
        object.__setattr__(self, "b_start", b_start)
        object.__setattr__(self, "b_end", b_end)
        object.__setattr__(self, "v_start", v_start)
        object.__setattr__(self, "v_end", v_end)
        object.__setattr__(self, "capacitance", _as_matrix(self.capacitance, "capacitance"))
        if self.basis is not None:
            object.__setattr__(self, "basis", _as_matrix(self.basis, "basis"))
        if self.final_frequencies is not None:
            object.__setattr__(
                self,
                "final_frequencies",
                _as_vector(self.final_frequencies, "final_frequencies", n),
            )
        _freeze(self.b_start, self.b_end, self.v_start, self.v_end, self.capacitance)
        # validates capacitance and couplings
        self.start_model()
        self.end_model()

    @property
    def dimension(self) -> int:
        return self.v_start.size

    def start_model(self) -> EmulatorModel:
        return EmulatorModel(
            self.capacitance, self.b_start, self.v_start, self.kappa, self.frequency_scale
        )

    def end_model(self) -> EmulatorModel:
        return EmulatorModel(
            self.capacitance, self.b_end, self.v_end, self.kappa, self.frequency_scale
        )

    @property
    def omega_max(self) -> float:
        return float(
            max(self.start_model().frequencies.max(), self.end_model().frequencies.max())
        )


@dataclass(frozen=True)
class QuenchSchedule:
    plan: ProtocolPlan
    t_sw: float
    profile: Profile = "linear"
    substeps: int | None = None
    integrator: Integrator = "magnus4"
    tolerance: float = 1e-11
    max_refinements: int = 14

    def __post_init__(self):
        if not (self.t_sw >= 0 and math.isfinite(self.t_sw)):
            raise ArgumentError("t_sw must be finite and non-negative")
        if self.profile not in ("linear", "smooth", "step"):
            raise ArgumentError(f"unknown profile '{self.profile}'")
        if self.integrator not in ("magnus4", "midpoint"):
            raise ArgumentError(f"unknown integrator '{self.integrator}'")
        if self.substeps is not None and self.substeps < 1:
            raise ArgumentError("substeps must be positive")
        if self.max_refinements < 1 or not self.tolerance > 0:
            raise ArgumentError("refinement control needs max_refinements >= 1 and tolerance > 0")

    def weight(self, t: float) -> float:
        """Interpolation weight of the end configuration at time t."""
        if self.t_sw == 0.0:
            return 1.0
        tau = min(max(t / self.t_sw, 0.0), 1.0)
        if self.profile == "linear":
            return tau
        if self.profile == "smooth":
            return 0.5 * (1.0 - math.cos(math.pi * tau))
        return 0.0 if tau < 0.5 else 1.0


@dataclass(frozen=True, eq=False)
class Propagator:
    matrix: np.ndarray
    inhomogeneous: np.ndarray
    substeps: int = 0
    error_estimate: float = 0.0

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        sigma = symplectic_form(matrix.shape[0] // 2)
        defect = np.linalg.norm(matrix.T @ sigma @ matrix - sigma, 2)
        if defect > SYMPLECTIC_TOLERANCE * max(1.0, np.linalg.norm(matrix, 2) ** 2):
            raise NumericalError(f"propagator lost symplecticity ({defect:.3e})")
        _freeze(matrix, np.asarray(self.inhomogeneous))

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dimension: int) -> "Propagator":
        return cls(np.eye(dimension), np.zeros(dimension))

    def then(self, later: "Propagator") -> "Propagator":
        """Compose with a propagator acting after this one."""
        return Propagator(
            later.matrix @ self.matrix,
            later.matrix @ self.inhomogeneous + later.inhomogeneous,
            self.substeps + later.substeps,
            self.error_estimate + later.error_estimate,
        )


@dataclass(frozen=True)
class DiabaticityReport:
    t_sw: float
    t_bound: float
    omega_max: float
    norm_deviation: float
    drive_deviation: float
    magnus_converged: bool
    fitted_constant: float
    nonlinear_bound: float | None = None


@dataclass(frozen=True)
class QuenchDeviation:
    mean_shift: float
    covariance_shift: float
    energy_shift: float
    relative_energy_shift: float
    fidelity: float


@dataclass(frozen=True)
class SweepRow:
    t_sw: float
    t_sw_times_omega_max: float
    mean_norm_diff: float
    variance: float


@dataclass(frozen=True)
class ScalingSweep:
    rows: tuple[SweepRow, ...]
    slope: float
    omega_max: float
    # one per row, in grid order
    propagators: tuple[Propagator, ...] = field(default=(), compare=False, repr=False)


@dataclass(frozen=True)
class SpectralLine:
    energy: float
    probability: float
    occupations: tuple[tuple[int, ...], ...] = ()


@dataclass(frozen=True)
class LineSpectrum:
    lines: tuple[SpectralLine, ...]
    truncation_tail: float
    zero_point: float = 0.0
    regulator_mass: float = 0.0

    def __post_init__(self):
        probabilities = self.probabilities
        if probabilities.size and (
            probabilities.min() < -1e-14 or probabilities.max() > 1 + 1e-12
        ):
            raise ModelError("line probabilities must lie in [0, 1]")
        if probabilities.sum() > 1 + 1e-12:
            raise ModelError("line probabilities sum above one")
        if self.energies.size and self.energies.min() < -1e-12:
            raise ModelError("line energies must be non-negative")

    @classmethod
    def from_pairs(
        cls, pairs, zero_point: float = 0.0, truncation_tail: float | None = None
    ) -> "LineSpectrum":
        lines = tuple(
            SpectralLine(float(e), float(p))
            for e, p in sorted(pairs, key=lambda pair: pair[0])
        )
        if truncation_tail is None:
            truncation_tail = max(0.0, 1.0 - sum(line.probability for line in lines))
        return cls(lines, truncation_tail, zero_point)

    @property
    def energies(self) -> np.ndarray:
        return np.array([line.energy for line in self.lines], dtype=float)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([line.probability for line in self.lines], dtype=float)


@dataclass(frozen=True)
class MomentReport:
    spectral_mean: float
    moment_mean: float
    absolute: float
    relative: float
    tolerance: float
    passed: bool


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    masses: np.ndarray


@dataclass(frozen=True)
class SquidCircuit:
    """SQUID plus linear inductor, V = -E_J cos((phi - Phi)/phi0) + phi^2 / 2L."""

    ej: float
    l: float  # noqa: E741
    phi_ext: float
    phi0: float = 1.0

    def __post_init__(self):
        if not (self.l > 0 and math.isfinite(self.l)):
            raise ArgumentError("linear inductance must be positive")
        if not (self.phi0 > 0 and math.isfinite(self.phi0)):
            raise ArgumentError("phi0 must be positive")
        if not (math.isfinite(self.ej) and math.isfinite(self.phi_ext)):
            raise ArgumentError("circuit parameters must be finite")

    @classmethod
    def from_ratio(
        cls, l_over_lj: float, phi_ext: float, phi0: float = 1.0, l: float = 1.0  # noqa: E741
    ) -> "SquidCircuit":
        return cls(ej=l_over_lj * phi0**2 / l, l=l, phi_ext=phi_ext, phi0=phi0)

    @property
    def lj(self) -> float:
        return math.inf if self.ej == 0 else self.phi0**2 / self.ej

    @property
    def l_over_lj(self) -> float:
        return self.l * self.ej / self.phi0**2


@dataclass(frozen=True)
class TaylorExpansion:
    phi_min: float
    c2: float
    c3: float
    c4: float
    leading_order: tuple[float, float] = (0.0, 0.0)

    @property
    def ratios(self) -> tuple[float, float]:
        return self.c3 / self.c2, self.c4 / self.c2

    @property
    def derivative_ratios(self) -> tuple[float, float]:
        """V'''/V'' and V''''/V'' at the minimum."""
        return 3.0 * self.c3 / self.c2, 12.0 * self.c4 / self.c2


@dataclass(frozen=True, eq=False)
class DispersiveSetup:
    g: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    omega_r: float
    omega_q: np.ndarray = field(default=None)

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.g, dtype=float))
        delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        omega_q = (
            np.zeros_like(g)
            if self.omega_q is None
            else np.atleast_1d(np.asarray(self.omega_q, dtype=float))
        )
        if not (g.shape == delta.shape == gamma.shape == omega_q.shape):
            raise ArgumentError("dispersive parameters need one entry per mode")
        if np.any(delta == 0) or np.any(np.abs(g / delta) >= 0.3):
            raise ArgumentError("dispersive regime requires |g/delta| < 0.3")
        if np.any(gamma <= 0):
            raise ArgumentError("decay rates must be positive")
        for name, value in (("g", g), ("delta", delta), ("gamma", gamma), ("omega_q", omega_q)):
            object.__setattr__(self, name, value)
        _freeze(g, delta, gamma, omega_q)


@dataclass(frozen=True, eq=False)
class GhzSetup:
    """
    GHZ metrology settings. Regulator modes stay uncoupled, so only the
    physical line energies of a spectrum enter the accumulated phase.
    """

    chi: float
    tau_grid: np.ndarray
    energy_grid: np.ndarray
    window: str = "hann"

    def __post_init__(self):
        if not (0 < self.chi <= 0.1):
            raise ArgumentError("chi must satisfy 0 < chi <= 0.1")
        tau = np.asarray(self.tau_grid, dtype=float).reshape(-1)
        energy = np.asarray(self.energy_grid, dtype=float).reshape(-1)
        for name, grid in (("tau_grid", tau), ("energy_grid", energy)):
            if grid.size < 2 or np.any(np.diff(grid) <= 0):
                raise ArgumentError(f"{name} must be strictly increasing")
        object.__setattr__(self, "tau_grid", tau)
        object.__setattr__(self, "energy_grid", energy)
        _freeze(tau, energy)


@dataclass(frozen=True, eq=False)
class Reconstruction:
    energy_grid: np.ndarray
    density: np.ndarray


@dataclass(frozen=True)
class CircuitRow:
    element: str
    quantity: str
    value: float
    unit: str


@dataclass(frozen=True)
class CircuitTable:
    rows: tuple[CircuitRow, ...]

    def ranges(self) -> dict[str, tuple[float, float]]:
        spans: dict[str, tuple[float, float]] = {}
        for row in self.rows:
            if row.element == "*" or "-" in row.element:
                continue
            low, high = spans.get(row.quantity, (math.inf, -math.inf))
            spans[row.quantity] = (min(low, row.value), max(high, row.value))
        return spans
