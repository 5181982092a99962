import itertools
import math
from typing import Sequence

import numpy as np
from loguru import logger
from numpy.polynomial.hermite import hermgauss

from .errors import ArgumentError, ConvergenceError, ModelError, SpectrumError
from .harmonic import mean_energy, normal_modes
from .models import (
    EmulatorModel,
    ForceField,
    GaussianState,
    Histogram,
    LineSpectrum,
    MomentReport,
    SpectralLine,
)
from .utils import symmetric_power

MAX_MODES = 4
CONVERGENCE_TOLERANCE = 1e-8
DEGENERACY_TOLERANCE = 1e-9
PRUNE_THRESHOLD = 1e-14
REGULATOR_LEAK_LIMIT = 1e-10
REGULATOR_CUTOFF = 2
BIN_SLACK = 1e-9
CHUNK_ELEMENTS = 2**22


def _hermite_functions(xi: np.ndarray, n_max: int) -> np.ndarray:
    """Normalised Hermite functions without their Gaussian factor, rows n = 0..n_max."""
    table = np.empty((n_max + 1, xi.size))
    table[0] = math.pi**-0.25
    if n_max >= 1:
        table[1] = math.sqrt(2.0) * xi * table[0]
    for n in range(1, n_max):
        table[n + 1] = (
            math.sqrt(2.0 / (n + 1)) * xi * table[n] - math.sqrt(n / (n + 1)) * table[n - 1]
        )
    return table


def _cutoffs(n_max: int | Sequence[int], size: int) -> list[int]:
    if isinstance(n_max, (int, np.integer)):
        values = [int(n_max)] * size
    else:
        values = [int(n) for n in n_max]
    if len(values) != size:
        raise ArgumentError(f"expected {size} cutoffs, got {len(values)}")
    if min(values) < 1:
        raise ArgumentError("cutoffs must be at least 1")
    return values


class _OverlapProblem:
    """
    Overlaps of the initial ground state with the final eigenstates in the
    final normal coordinates Q = O_f^T (y - y_f), y mass-weighted. Completing
    the square leaves a polynomial against exp(-u^T u), which Gauss-Hermite
    quadrature integrates exactly.
    """

    def __init__(self, initial: ForceField, final: ForceField):
        sqrt_m = np.sqrt(initial.masses)
        modes_f = normal_modes(final)
        self.frequencies = modes_f.frequencies
        basis = modes_f.modes

        k0 = symmetric_power(initial.mass_weighted_hessian, 0.5)
        k_tilde = basis.T @ k0 @ basis
        d = basis.T @ (sqrt_m * (initial.equilibrium - final.equilibrium))
        g = k_tilde + np.diag(self.frequencies)
        self.centre = np.linalg.solve(g, k_tilde @ d)
        self.transform = math.sqrt(2.0) * symmetric_power(g, -0.5)

        n = initial.dimension
        _, logdet_k0 = np.linalg.slogdet(k0)
        _, logdet_g = np.linalg.slogdet(g)
        self.log_prefactor = (
            0.25 * logdet_k0
            - 0.25 * n * math.log(math.pi)
            + 0.25 * np.sum(np.log(self.frequencies))
            + 0.5 * n * math.log(2.0)
            - 0.5 * logdet_g
            + 0.5 * self.centre @ g @ self.centre
            - 0.5 * d @ k_tilde @ d
        )

    def amplitudes(self, cutoffs: list[int], order: int) -> np.ndarray:
        n = len(cutoffs)
        nodes, weights = hermgauss(order)
        size = order**n

        shape = tuple(c + 1 for c in cutoffs)
        # the running product spans every mode but the last
        chunk = max(1, CHUNK_ELEMENTS // math.prod(shape[:-1]))
        total = np.zeros(shape)
        for begin in range(0, size, chunk):
            # tensor-grid points begin..stop in C order, built per chunk
            index = np.stack(
                np.unravel_index(np.arange(begin, min(begin + chunk, size)), (order,) * n),
                axis=1,
            )
            q = self.centre + nodes[index] @ self.transform.T
            tables = [
                _hermite_functions(math.sqrt(self.frequencies[j]) * q[:, j], cutoff)
                for j, cutoff in enumerate(cutoffs)
            ]
            running = np.prod(weights[index], axis=1)
            for table in tables[:-1]:
                running = running[..., None, :] * table
            total += running @ tables[-1].T
        return math.exp(self.log_prefactor) * total


def _regulator_indices(frequencies: np.ndarray, regulators: Sequence[float]) -> list[int]:
    indices = []
    for value in regulators:
        j = int(np.argmin(np.abs(frequencies - value)))
        if abs(frequencies[j] - value) > 1e-6 * value or j in indices:
            raise ArgumentError(f"no final mode matches regulator {value:.6g}")
        indices.append(j)
    return indices


def _merge(
    energies: np.ndarray, probabilities: np.ndarray, labels: list[tuple[int, ...]], scale: float
) -> list[SpectralLine]:
    order = np.argsort(energies, kind="stable")
    lines: list[SpectralLine] = []
    group_energy, group_p, group_labels = None, 0.0, []
    for i in order:
        energy = float(energies[i])
        if group_energy is not None and abs(energy - group_energy) <= DEGENERACY_TOLERANCE * max(
            abs(group_energy), scale
        ):
            group_p += float(probabilities[i])
            group_labels.append(labels[i])
            continue
        if group_energy is not None:
            lines.append(SpectralLine(group_energy, group_p, tuple(group_labels)))
        group_energy, group_p, group_labels = energy, float(probabilities[i]), [labels[i]]
    if group_energy is not None:
        lines.append(SpectralLine(group_energy, group_p, tuple(group_labels)))
    return [line for line in lines if line.probability > PRUNE_THRESHOLD]


def franck_condon_profile(
    initial: ForceField,
    final: ForceField,
    n_max: int | Sequence[int] = 8,
    quadrature_order: int | None = None,
    regulators: Sequence[float] = (),
) -> LineSpectrum:
    """
    Franck-Condon profile of the vertical transition from the ground state of
    initial into the eigenstates of final. Energies are sum_j omega_j n_j,
    measured from the final zero point.
    """
    n = initial.dimension
    if final.dimension != n:
        raise ModelError("initial and final force fields have different dimensions")
    if n > MAX_MODES:
        raise SpectrumError(f"{n} modes exceed the limit of {MAX_MODES} for exact profiles")
    if not np.allclose(initial.masses, final.masses, rtol=1e-12, atol=0):
        raise ModelError("initial and final force fields have different masses")
    for ff in (initial, final):
        if normal_modes(ff).kernel_dim:
            raise ModelError(f"'{ff.label}' has zero modes; remove the null space first")

    problem = _OverlapProblem(initial, final)
    frequencies = problem.frequencies
    cutoffs = _cutoffs(n_max, n)
    regulator_modes = _regulator_indices(frequencies, regulators)
    for j in regulator_modes:
        cutoffs[j] = REGULATOR_CUTOFF

    order = quadrature_order or sum(cutoffs) // 2 + 2
    probabilities = problem.amplitudes(cutoffs, order) ** 2
    check = problem.amplitudes(cutoffs, 2 * order) ** 2
    change = float(np.abs(check - probabilities).max())
    if change > CONVERGENCE_TOLERANCE:
        raise ConvergenceError(
            f"doubling the quadrature order to {2 * order} changed a probability by {change:.3e}"
        )

    labels = list(itertools.product(*(range(c + 1) for c in cutoffs)))
    flat = probabilities.reshape(-1)
    occupations = np.array(labels, dtype=float).reshape(-1, n)
    energies = occupations @ frequencies

    leaked = 0.0
    if regulator_modes:
        excited = occupations[:, regulator_modes].sum(axis=1) > 0
        leaked = float(flat[excited].sum())
        if leaked >= REGULATOR_LEAK_LIMIT:
            raise SpectrumError(f"regulator modes carry probability {leaked:.3e}")
        keep = ~excited
        flat, energies = flat[keep], energies[keep]
        labels = [label for label, k in zip(labels, keep) if k]

    physical = np.delete(frequencies, regulator_modes)
    scale = float(physical.min()) if physical.size else float(frequencies.min())
    lines = _merge(energies, flat, labels, scale)
    total = sum(line.probability for line in lines)
    logger.info(
        f"profile with {len(lines)} lines, retained mass {total:.12f}, quadrature order {order}"
    )
    return LineSpectrum(
        lines=tuple(lines),
        truncation_tail=max(0.0, 1.0 - total),
        zero_point=0.5 * float(frequencies.sum()),
        regulator_mass=leaked,
    )


def _unit_mass_field(model: EmulatorModel, label: str) -> ForceField:
    reduced = model.reduced_coupling
    equilibrium = np.linalg.solve(reduced, model.capacitance_inv_sqrt @ model.driving)
    return ForceField(np.ones(model.dimension), reduced, equilibrium, label)


def emulator_profile(
    initial_model: EmulatorModel,
    final_model: EmulatorModel,
    n_max: int | Sequence[int] = 8,
    quadrature_order: int | None = None,
    regulators: Sequence[float] = (),
) -> LineSpectrum:
    """Profile of an emulator quench, energies divided by kappa."""
    if not np.allclose(initial_model.capacitance, final_model.capacitance, rtol=1e-12, atol=0):
        raise ArgumentError("emulator models must share the capacitance matrix")
    kappa = final_model.kappa
    raw = franck_condon_profile(
        _unit_mass_field(initial_model, "initial"),
        _unit_mass_field(final_model, "final"),
        n_max,
        quadrature_order,
        [kappa * r for r in regulators],
    )
    return LineSpectrum(
        lines=tuple(
            SpectralLine(line.energy / kappa, line.probability, line.occupations)
            for line in raw.lines
        ),
        truncation_tail=raw.truncation_tail,
        zero_point=raw.zero_point / kappa,
        regulator_mass=raw.regulator_mass,
    )


def moment_check(
    spectrum: LineSpectrum, initial_state: GaussianState, final_model: EmulatorModel
) -> MomentReport:
    """
    Compare the spectral mean with the Gaussian-moment energy of the initial
    state in the final Hamiltonian, both measured from the final ground state
    and divided by kappa.
    """
    if initial_state.n_modes != final_model.dimension:
        raise ArgumentError("state and final model have different mode counts")
    for line in spectrum.lines:
        if any(len(label) != final_model.dimension for label in line.occupations):
            raise ArgumentError("spectrum occupations do not match the final model")

    d, w = final_model.hamiltonian_matrices
    n = final_model.dimension
    static = -0.5 * w[:n] @ np.linalg.solve(d[:n, :n], w[:n])
    kappa = final_model.kappa
    moment = (mean_energy(initial_state, final_model) - static) / kappa - spectrum.zero_point

    energies = spectrum.energies
    spectral = float(energies @ spectrum.probabilities) if energies.size else 0.0
    absolute = abs(spectral - moment)
    e_max = float(energies.max()) if energies.size else 0.0
    tolerance = max(1e-6, 3.0 * spectrum.truncation_tail * e_max)
    passed = bool(absolute < tolerance)
    if not passed:
        logger.warning(
            f"moment check failed: spectral mean {spectral:.9g} vs moments {moment:.9g}"
        )
    return MomentReport(
        spectral_mean=spectral,
        moment_mean=float(moment),
        absolute=absolute,
        relative=absolute / max(abs(moment), 1e-300),
        tolerance=tolerance,
        passed=passed,
    )


def binned_profile(spectrum: LineSpectrum, bin_width: float) -> Histogram:
    if not bin_width > 0:
        raise ArgumentError("bin_width must be positive")
    energies = spectrum.energies
    if energies.size == 0:
        return Histogram(np.array([0.0, bin_width]), np.zeros(1))
    index = np.floor(energies / bin_width + BIN_SLACK).astype(int)
    masses = np.bincount(index, weights=spectrum.probabilities)
    edges = bin_width * np.arange(masses.size + 1)
    return Histogram(edges, masses)


def energy_from_counts(frequencies: Sequence[float], counts) -> np.ndarray | float:
    """Total vibrational energy sum_j omega_j n_j of photon counts (last axis = modes)."""
    counts = np.asarray(counts, dtype=float)
    result = counts @ np.asarray(frequencies, dtype=float)
    return float(result) if np.ndim(result) == 0 else result
