from typing import Sequence

import numpy as np
from loguru import logger

from .errors import ArgumentError, ModelError
from .models import (
    KERNEL_THRESHOLD,
    PSD_TOLERANCE,
    EmulatorModel,
    ForceField,
    GaussianState,
    NormalModes,
)
from .utils import fix_column_signs, symplectic_form

REGULATOR_COLLISION = 0.01
PURITY_TOLERANCE = 1e-8


def normal_modes(ff: ForceField) -> NormalModes:
    weighted = ff.mass_weighted_hessian
    values, vectors = np.linalg.eigh(weighted)
    scale = max(np.linalg.norm(weighted, 2), 1e-300)
    if values.min() < -PSD_TOLERANCE * scale:
        raise ModelError(f"negative curvature {values.min():.3e} in '{ff.label}'")
    values = np.clip(values, 0.0, None)

    largest = values.max()
    if largest > 0:
        kernel_dim = int(np.count_nonzero(values < KERNEL_THRESHOLD * largest))
    else:
        kernel_dim = values.size

    logger.debug(f"normal modes of '{ff.label}': kernel_dim={kernel_dim}")
    return NormalModes(
        frequencies=np.sqrt(values),
        modes=fix_column_signs(vectors),
        kernel_dim=kernel_dim,
    )


def remove_null_space(ff: ForceField, lambdas: Sequence[float]) -> ForceField:
    """
    Lift the zero modes of the mass-weighted Hessian to the regulator
    frequencies lambdas. The update is rank one per kernel vector, so the
    physical part of the spectrum is untouched.
    """
    lambdas = np.asarray(lambdas, dtype=float).reshape(-1)
    modes = normal_modes(ff)
    if lambdas.size != modes.kernel_dim:
        raise ArgumentError(
            f"'{ff.label}' has {modes.kernel_dim} zero modes but "
            f"{lambdas.size} regulators were given"
        )
    if np.any(lambdas <= 0):
        raise ArgumentError("regulator frequencies must be positive")
    if modes.kernel_dim == 0:
        return ff

    physical = modes.physical_frequencies
    for value in lambdas:
        if physical.size and np.any(np.abs(physical - value) <= REGULATOR_COLLISION * physical):
            logger.warning(
                f"regulator {value:.6g} lies within 1% of a physical frequency of '{ff.label}'"
            )

    kernel = modes.modes[:, : modes.kernel_dim]
    weighted = ff.mass_weighted_hessian + (kernel * lambdas**2) @ kernel.T
    sqrt_m = np.sqrt(ff.masses)
    hessian = sqrt_m[:, None] * weighted * sqrt_m[None, :]
    return ForceField(ff.masses, 0.5 * (hessian + hessian.T), ff.equilibrium, ff.label)


def _check_dimensions(state: GaussianState, model: EmulatorModel) -> None:
    if state.n_modes != model.dimension:
        raise ArgumentError(
            f"state has {state.n_modes} modes, model has {model.dimension}"
        )


def _normal_mode_basis(model: EmulatorModel) -> tuple[np.ndarray, np.ndarray]:
    values, vectors = np.linalg.eigh(model.reduced_coupling)
    if values.min() <= KERNEL_THRESHOLD * max(values.max(), 1e-300):
        raise ModelError(
            "coupling matrix is singular; remove the null space before preparing states"
        )
    return np.sqrt(values), vectors


def _gaussian_state(model: EmulatorModel, factors: np.ndarray | float) -> GaussianState:
    omegas, vectors = _normal_mode_basis(model)
    n = model.dimension
    s = model.frequency_scale
    d, w = model.hamiltonian_matrices

    mean = np.zeros(2 * n)
    mean[:n] = np.linalg.solve(d[:n, :n], w[:n])

    gamma = np.zeros((2 * n, 2 * n))
    gamma[:n, :n] = (vectors * (factors * s / omegas)) @ vectors.T
    gamma[n:, n:] = (vectors * (factors * omegas / s)) @ vectors.T
    return GaussianState(mean, gamma)


def ground_state(model: EmulatorModel) -> GaussianState:
    return _gaussian_state(model, 1.0)


def thermal_state(model: EmulatorModel, temperature: float) -> GaussianState:
    if temperature < 0:
        raise ArgumentError("temperature must be non-negative")
    if temperature == 0:
        return ground_state(model)
    omegas, _ = _normal_mode_basis(model)
    return _gaussian_state(model, 1.0 / np.tanh(omegas / (2.0 * temperature)))


def thermal_occupations(model: EmulatorModel, temperature: float) -> np.ndarray:
    """Bose-Einstein occupation of every normal mode, in ascending frequency."""
    if temperature < 0:
        raise ArgumentError("temperature must be non-negative")
    omegas = model.frequencies
    if temperature == 0:
        return np.zeros_like(omegas)
    with np.errstate(divide="ignore", over="ignore"):
        return 1.0 / np.expm1(omegas / temperature)


def mean_energy(state: GaussianState, model: EmulatorModel) -> float:
    _check_dimensions(state, model)
    d, w = model.hamiltonian_matrices
    r = state.mean
    return float(
        0.25 * np.trace(d @ state.second_moments) + 0.5 * r @ d @ r - w @ r
    )


def symplectic_eigenvalues(state: GaussianState) -> np.ndarray:
    sigma = symplectic_form(state.n_modes)
    values = np.abs(np.linalg.eigvals(sigma @ state.second_moments))
    return np.sort(values)[::2]


def is_pure(state: GaussianState, tolerance: float = PURITY_TOLERANCE) -> bool:
    """All eigenvalues of (Gamma sigma^-1)^2 equal -1 for a pure state."""
    sigma = symplectic_form(state.n_modes)
    product = state.second_moments @ sigma.T
    values = np.linalg.eigvals(product @ product)
    return bool(np.all(np.abs(values + 1.0) < tolerance))


def fidelity(state: GaussianState, reference: GaussianState) -> float:
    if state.n_modes != reference.n_modes:
        raise ArgumentError("states have different mode counts")
    if not (is_pure(state, 1e-6) or is_pure(reference, 1e-6)):
        raise ArgumentError("fidelity formula needs at least one pure state")
    total = state.second_moments + reference.second_moments
    delta = state.mean - reference.mean
    sign, logdet = np.linalg.slogdet(total)
    if sign <= 0:
        raise ModelError("summed second moments are not positive definite")
    exponent = state.n_modes * np.log(2.0) - 0.5 * logdet
    exponent -= delta @ np.linalg.solve(total, delta)
    return float(np.exp(exponent))
