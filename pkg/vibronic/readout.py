import math

import numpy as np
from loguru import logger
from scipy.signal import get_window

from .errors import ArgumentError
from .models import DispersiveSetup, GhzSetup, LineSpectrum, Reconstruction

EXPECTED_QUANTA = 3
NORMALISATION_TOLERANCE = 1e-6
UNIFORMITY_TOLERANCE = 1e-9


def _mode(setup: DispersiveSetup, j: int) -> int:
    if not 0 <= j < setup.g.size:
        raise ArgumentError(f"mode {j} outside 0..{setup.g.size - 1}")
    return j


def dispersive_shift(setup: DispersiveSetup, j: int, n: int) -> tuple[float, float]:
    """Qubit splitting Omega_{n,j} = Omega_0 + (2n+1) g^2/Delta and readout shift xi_0 = g^2/Delta."""
    j = _mode(setup, j)
    if n < 0:
        raise ArgumentError("photon number must be non-negative")
    xi0 = float(setup.g[j] ** 2 / setup.delta[j])
    return float(setup.omega_q[j] + (2 * n + 1) * xi0), xi0


def readout_frequency(
    setup: DispersiveSetup, j: int, n: int, drive_frequency: float
) -> float:
    splitting, xi0 = dispersive_shift(setup, j, n)
    if math.isclose(drive_frequency, splitting, rel_tol=1e-9, abs_tol=1e-12 * abs(xi0)):
        return setup.omega_r
    return setup.omega_r - xi0


def resolvable_photons(setup: DispersiveSetup, j: int = 0) -> int:
    _, xi0 = dispersive_shift(setup, j, 0)
    count = math.floor(2.0 * abs(xi0) / setup.gamma[j] + 1e-12)
    if count < EXPECTED_QUANTA:
        logger.warning(
            f"mode {j} resolves only {count} photons, below the {EXPECTED_QUANTA} "
            "quanta expected in vibronic spectra"
        )
    return count


def ghz_forward(spectrum: LineSpectrum, setup: GhzSetup) -> np.ndarray:
    """Excited-state probability P1(tau) = sum_k p_k sin^2(chi E_k tau)."""
    if spectrum.truncation_tail >= NORMALISATION_TOLERANCE:
        raise ArgumentError(
            f"spectrum is not normalised (tail {spectrum.truncation_tail:.3e})"
        )
    if not spectrum.lines:
        return np.zeros_like(setup.tau_grid)
    phases = setup.chi * np.outer(setup.tau_grid, spectrum.energies)
    return np.sin(phases) ** 2 @ spectrum.probabilities


def _check_tau_grid(tau: np.ndarray) -> float:
    steps = np.diff(tau)
    step = float(steps.mean())
    if np.abs(steps - step).max() > UNIFORMITY_TOLERANCE * step:
        raise ArgumentError("tau grid must be uniform")
    if abs(tau[0]) > UNIFORMITY_TOLERANCE * step:
        raise ArgumentError("tau grid must start at zero")
    return step


def ghz_reconstruct(p1, setup: GhzSetup) -> Reconstruction:
    """
    Windowed cosine transform P(E) = -(8 chi/pi) int_0^tau_max cos(2 chi E tau) P1(tau) dtau,
    with the tau-average of P1 removed before transforming.
    """
    tau = setup.tau_grid
    p1 = np.asarray(p1, dtype=float).reshape(-1)
    if p1.shape != tau.shape or not np.all(np.isfinite(p1)):
        raise ArgumentError("p1 must be finite and match the tau grid")
    step = _check_tau_grid(tau)

    limit = math.pi / (2.0 * setup.chi * step)
    if setup.energy_grid.max() > limit:
        logger.warning(
            f"energy grid reaches {setup.energy_grid.max():.6g}, beyond the "
            f"tau sampling limit {limit:.6g}"
        )

    size = tau.size
    window = get_window(setup.window, 2 * size - 1, fftbins=False)[size - 1 :]
    weights = np.full(size, step)
    weights[[0, -1]] *= 0.5

    signal = (p1 - p1.mean()) * window * weights
    kernel = np.cos(2.0 * setup.chi * np.outer(setup.energy_grid, tau))
    density = -(8.0 * setup.chi / math.pi) * (kernel @ signal)
    return Reconstruction(setup.energy_grid, density)
