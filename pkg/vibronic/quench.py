import math
from typing import Mapping, Sequence

import numpy as np
from loguru import logger
from scipy.linalg import expm

from .errors import ArgumentError, NumericalError
from .harmonic import fidelity, mean_energy
from .models import (
    DiabaticityReport,
    EmulatorModel,
    GaussianState,
    ProtocolPlan,
    Propagator,
    QuenchDeviation,
    QuenchSchedule,
    ScalingSweep,
    SweepRow,
)
from .tasks import run_parallel
from .utils import symplectic_form

STEP_CONTROL = 0.1
MIN_FIT_POINTS = 3

_GAUSS_OFFSET = math.sqrt(3.0) / 6.0
_GAUSS_COMMUTATOR = math.sqrt(3.0) / 12.0
_ORDER = {"magnus4": 4, "midpoint": 2}


class _Generator:
    """Affine Hamiltonian generator [[sigma D(w), -sigma W(w)], [0, 0]] of a schedule."""

    def __init__(self, schedule: QuenchSchedule):
        plan = schedule.plan
        self.schedule = schedule
        self.n = plan.dimension
        d0, w0 = plan.start_model().hamiltonian_matrices
        d1, w1 = plan.end_model().hamiltonian_matrices
        sigma = symplectic_form(self.n)
        self.start = self._augment(sigma @ d0, -sigma @ w0)
        self.end = self._augment(sigma @ d1, -sigma @ w1)
        self.norm = max(np.linalg.norm(sigma @ d0, 2), np.linalg.norm(sigma @ d1, 2))

    def _augment(self, linear: np.ndarray, forcing: np.ndarray) -> np.ndarray:
        size = 2 * self.n + 1
        out = np.zeros((size, size))
        out[:-1, :-1] = linear
        out[:-1, -1] = forcing
        return out

    def __call__(self, t: float) -> np.ndarray:
        weight = self.schedule.weight(t)
        return (1.0 - weight) * self.start + weight * self.end

    def step(self, t0: float, h: float) -> np.ndarray:
        if self.schedule.integrator == "midpoint":
            return expm(h * self(t0 + 0.5 * h))
        a1 = self(t0 + (0.5 - _GAUSS_OFFSET) * h)
        a2 = self(t0 + (0.5 + _GAUSS_OFFSET) * h)
        omega = 0.5 * h * (a1 + a2) + _GAUSS_COMMUTATOR * h**2 * (a2 @ a1 - a1 @ a2)
        return expm(omega)


def _march(generator: _Generator, t_start: float, t_end: float, steps: int) -> np.ndarray:
    h = (t_end - t_start) / steps
    total = np.eye(2 * generator.n + 1)
    for k in range(steps):
        total = generator.step(t_start + k * h, h) @ total
    return total


def _segment(
    generator: _Generator, t_start: float, t_end: float
) -> tuple[np.ndarray, int, float]:
    schedule = generator.schedule
    steps = max(1, math.ceil(generator.norm * (t_end - t_start) / STEP_CONTROL))
    if schedule.substeps is not None:
        steps = max(steps, schedule.substeps)
    order = _ORDER[schedule.integrator]

    coarse = _march(generator, t_start, t_end, steps)
    for _ in range(schedule.max_refinements):
        steps *= 2
        fine = _march(generator, t_start, t_end, steps)
        error = np.linalg.norm(fine - coarse, 2) / (2**order - 1)
        if error <= schedule.tolerance * max(1.0, np.linalg.norm(fine, 2)):
            return fine, steps, error
        coarse = fine
    raise NumericalError(
        f"propagation did not reach tolerance {schedule.tolerance:.1e} "
        f"after {schedule.max_refinements} refinements (estimate {error:.3e})"
    )


def propagate(
    schedule: QuenchSchedule, t_start: float = 0.0, t_end: float | None = None
) -> Propagator:
    """
    Transition matrix U(t_end, t_start) and accumulated drive of dR/dt = sigma (D R - W).
    The window defaults to the whole switch [0, t_sw].
    """
    n = schedule.plan.dimension
    t_end = schedule.t_sw if t_end is None else t_end
    if not (0.0 <= t_start <= t_end <= schedule.t_sw):
        raise ArgumentError(
            f"window [{t_start}, {t_end}] is not inside [0, {schedule.t_sw}]"
        )
    if t_end == t_start:
        return Propagator.identity(2 * n)

    generator = _Generator(schedule)
    breaks = [t_start, t_end]
    midpoint = 0.5 * schedule.t_sw
    if schedule.profile == "step" and t_start < midpoint < t_end:
        breaks.insert(1, midpoint)

    result = Propagator.identity(2 * n)
    for left, right in zip(breaks[:-1], breaks[1:]):
        total, steps, error = _segment(generator, left, right)
        piece = Propagator(total[:-1, :-1], total[:-1, -1], steps, error)
        result = result.then(piece)
    logger.debug(
        f"propagated [{t_start:.6g}, {t_end:.6g}] in {result.substeps} steps, "
        f"error estimate {result.error_estimate:.3e}"
    )
    return result


def evolve_state(state: GaussianState, propagator: Propagator) -> GaussianState:
    if propagator.dimension != state.mean.size:
        raise ArgumentError(
            f"propagator acts on {propagator.dimension} variables, state has {state.mean.size}"
        )
    u = propagator.matrix
    return GaussianState(
        u @ state.mean + propagator.inhomogeneous, u @ state.second_moments @ u.T
    )


def _drive_norm(plan: ProtocolPlan, capacitance: np.ndarray | None = None) -> float:
    if capacitance is None:
        _, w = plan.start_model().hamiltonian_matrices
        return float(np.linalg.norm(w))
    model = EmulatorModel(
        capacitance, plan.b_start, plan.v_start, plan.kappa, plan.frequency_scale
    )
    return float(np.linalg.norm(model.hamiltonian_matrices[1]))


def _time_scale(plan: ProtocolPlan, capacitance: np.ndarray | None = None) -> float:
    drive = _drive_norm(plan, capacitance)
    scale = 1.0 / plan.omega_max
    if drive > 0:
        scale = min(scale, 2.0 / drive)
    return scale


def diabatic_bound(
    plan: ProtocolPlan, capacitance: np.ndarray | None = None, epsilon: float = 0.01
) -> float:
    """
    Switch time eps * min(1/Omega_max, 2/||C^-1/2 V_start||) with the
    unspecified constant set to one. The drive norm is taken in the plan's
    canonical coordinates.
    """
    if not epsilon > 0:
        raise ArgumentError("epsilon must be positive")
    return epsilon * _time_scale(plan, capacitance)


def nonlinear_quench_bound(plan: ProtocolPlan, coefficients: Mapping[int, float]) -> float:
    """Advisory limit min_n 1 / (|c_n| ||W_start||^(n/2)) for anharmonic corrections."""
    drive = _drive_norm(plan)
    bounds = [
        1.0 / (abs(c) * drive ** (n / 2.0))
        for n, c in coefficients.items()
        if c != 0 and drive > 0
    ]
    return min(bounds, default=math.inf)


def diabaticity_report(
    schedule: QuenchSchedule,
    epsilon: float = 0.01,
    coefficients: Mapping[int, float] | None = None,
    propagator: Propagator | None = None,
) -> DiabaticityReport:
    """
    Deviation of the switch propagator from the identity against the bound.
    A propagator already computed for the schedule can be passed in.
    """
    plan = schedule.plan
    if propagator is None:
        propagator = propagate(schedule)
    elif propagator.dimension != 2 * plan.dimension:
        raise ArgumentError(
            f"propagator acts on {propagator.dimension} variables, plan has {plan.dimension} modes"
        )
    identity = np.eye(propagator.dimension)
    norm_deviation = float(np.linalg.norm(propagator.matrix - identity, 2))
    drive_deviation = float(np.linalg.norm(propagator.inhomogeneous))

    omega_max = plan.omega_max
    effective_epsilon = schedule.t_sw / _time_scale(plan)
    fitted = 0.0
    if effective_epsilon > 0:
        fitted = max(norm_deviation, drive_deviation) / effective_epsilon

    return DiabaticityReport(
        t_sw=schedule.t_sw,
        t_bound=diabatic_bound(plan, epsilon=epsilon),
        omega_max=omega_max,
        norm_deviation=norm_deviation,
        drive_deviation=drive_deviation,
        magnus_converged=schedule.t_sw * omega_max < 1.0,
        fitted_constant=fitted,
        nonlinear_bound=(
            None if coefficients is None else nonlinear_quench_bound(plan, coefficients)
        ),
    )


def quench_deviation(
    state: GaussianState, propagator: Propagator, final_model: EmulatorModel
) -> QuenchDeviation:
    """Compare the switched state with the ideal instantaneous quench, which leaves it unchanged."""
    evolved = evolve_state(state, propagator)
    ideal_energy = mean_energy(state, final_model)
    energy_shift = abs(mean_energy(evolved, final_model) - ideal_energy)
    return QuenchDeviation(
        mean_shift=float(np.linalg.norm(evolved.mean - state.mean)),
        covariance_shift=float(
            np.linalg.norm(evolved.second_moments - state.second_moments, 2)
        ),
        energy_shift=energy_shift,
        relative_energy_shift=energy_shift / max(abs(ideal_energy), 1e-300),
        fidelity=fidelity(evolved, state),
    )


def _column_deviation(propagator: Propagator) -> tuple[float, float]:
    # R(0) runs over the identity columns
    shifts = propagator.matrix - np.eye(propagator.dimension)
    shifts += propagator.inhomogeneous[:, None]
    norms = np.linalg.norm(shifts, axis=0)
    return float(norms.mean()), float(norms.var())


def fit_slope(x: Sequence[float], y: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


def error_scaling_sweep(
    plan: ProtocolPlan,
    capacitance: np.ndarray | None,
    t_sw_grid: Sequence[float],
    *,
    profile: str = "linear",
    integrator: str = "magnus4",
    tolerance: float = 1e-11,
    threads: int = 1,
) -> ScalingSweep:
    """
    Deviation of the complete orthogonal set of initial conditions after a
    switch of each duration, plus the log-log slope over the points with
    t_sw * Omega_max < 1.
    """
    if capacitance is not None and not np.allclose(capacitance, plan.capacitance):
        raise ArgumentError("capacitance does not match the plan")
    grid = [float(t) for t in t_sw_grid]
    if any(t < 0 or not math.isfinite(t) for t in grid):
        raise ArgumentError("switch times must be finite and non-negative")
    omega_max = plan.omega_max

    def run(t_sw: float) -> tuple[SweepRow, Propagator]:
        schedule = QuenchSchedule(
            plan, t_sw, profile=profile, integrator=integrator, tolerance=tolerance
        )
        propagator = propagate(schedule)
        mean, variance = _column_deviation(propagator)
        return SweepRow(t_sw, t_sw * omega_max, mean, variance), propagator

    results = run_parallel(run, grid, threads)
    rows = [row for row, _ in results]

    fit = [row for row in rows if 0 < row.t_sw_times_omega_max < 1 and row.mean_norm_diff > 0]
    if len(fit) < MIN_FIT_POINTS:
        raise ArgumentError(
            f"need at least {MIN_FIT_POINTS} positive switch times with t_sw*Omega_max < 1"
        )
    slope = fit_slope([row.t_sw for row in fit], [row.mean_norm_diff for row in fit])
    logger.info(f"error scaling slope {slope:.4f} over {len(fit)} points")
    return ScalingSweep(
        tuple(rows), slope, omega_max, tuple(propagator for _, propagator in results)
    )
