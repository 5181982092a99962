import math

import numpy as np
import pytest
from factories import random_plan, random_pd
from scipy.linalg import expm

from vibronic import units
from vibronic.config import DATA_DIR
from vibronic.errors import ArgumentError, NumericalError
from vibronic.harmonic import ground_state, mean_energy, thermal_state
from vibronic.io import read_molecule
from vibronic.mapping import default_capacitance, plan_protocol1
from vibronic.models import (
    GaussianState,
    HardwareConstraints,
    ProtocolPlan,
    Propagator,
    QuenchSchedule,
)
from vibronic.quench import (
    diabatic_bound,
    diabaticity_report,
    error_scaling_sweep,
    evolve_state,
    nonlinear_quench_bound,
    propagate,
    quench_deviation,
)
from vibronic.utils import symplectic_form


def symplectic_defect(propagator: Propagator) -> float:
    sigma = symplectic_form(propagator.dimension // 2)
    u = propagator.matrix
    return float(np.linalg.norm(u.T @ sigma @ u - sigma, 2))


def augmented(model) -> np.ndarray:
    d, w = model.hamiltonian_matrices
    sigma = symplectic_form(model.dimension)
    out = np.zeros((d.shape[0] + 1, d.shape[0] + 1))
    out[:-1, :-1] = sigma @ d
    out[:-1, -1] = -sigma @ w
    return out


@pytest.fixture
def synthetic_plan() -> ProtocolPlan:
    ff0, fff = read_molecule(DATA_DIR / "synthetic_molecule.json")
    hardware = HardwareConstraints(
        omega_min=units.to_internal(0.2, units.GHZ),
        omega_max=units.to_internal(10.0, units.GHZ),
        t_cryo=units.to_internal(20.0, units.MILLIKELVIN),
    )
    return plan_protocol1(ff0, fff, hardware, default_capacitance(ff0.masses))


@pytest.mark.parametrize("profile", ["linear", "smooth", "step"])
@pytest.mark.parametrize("integrator", ["magnus4", "midpoint"])
def test_propagators_are_symplectic(rng, profile, integrator):
    plan = random_plan(rng, 3)
    schedule = QuenchSchedule(
        plan, 2.0 / plan.omega_max, profile=profile, integrator=integrator, tolerance=1e-8
    )
    assert symplectic_defect(propagate(schedule)) < 1e-9


def test_zero_switch_time_is_identity(rng):
    propagator = propagate(QuenchSchedule(random_plan(rng, 2), 0.0))
    np.testing.assert_array_equal(propagator.matrix, np.eye(4))
    np.testing.assert_array_equal(propagator.inhomogeneous, np.zeros(4))


def test_composition(rng):
    plan = random_plan(rng, 3)
    schedule = QuenchSchedule(plan, 1.5 / plan.omega_max, profile="smooth")
    split = 0.4 * schedule.t_sw
    composed = propagate(schedule, 0.0, split).then(propagate(schedule, split, schedule.t_sw))
    whole = propagate(schedule)
    np.testing.assert_allclose(composed.matrix, whole.matrix, atol=1e-8)
    np.testing.assert_allclose(composed.inhomogeneous, whole.inhomogeneous, atol=1e-8)


def test_time_independent_evolution_conserves_energy(rng):
    n = 3
    coupling = random_pd(rng, n)
    plan = ProtocolPlan(coupling, coupling, np.zeros(n), np.zeros(n), random_pd(rng, n))
    t_sw = 3.0 / plan.omega_max
    propagator = propagate(QuenchSchedule(plan, t_sw))
    model = plan.end_model()
    np.testing.assert_allclose(
        propagator.matrix, expm(t_sw * augmented(model))[:-1, :-1], atol=1e-8
    )

    state = thermal_state(model, 0.7)
    shifted = GaussianState(state.mean + rng.normal(size=2 * n), state.second_moments)
    evolved = evolve_state(shifted, propagator)
    assert mean_energy(evolved, model) == pytest.approx(mean_energy(shifted, model), rel=1e-9)


@pytest.mark.parametrize("integrator", ["magnus4", "midpoint"])
def test_step_profile_matches_piecewise_exponential(rng, integrator):
    plan = random_plan(rng, 2)
    t_sw = 4.0 / plan.omega_max
    propagator = propagate(QuenchSchedule(plan, t_sw, profile="step", integrator=integrator))
    exact = expm(0.5 * t_sw * augmented(plan.end_model())) @ expm(
        0.5 * t_sw * augmented(plan.start_model())
    )
    np.testing.assert_allclose(propagator.matrix, exact[:-1, :-1], atol=1e-9)
    np.testing.assert_allclose(propagator.inhomogeneous, exact[:-1, -1], atol=1e-9)


def test_integrators_agree(rng):
    plan = random_plan(rng, 2)
    t_sw = 2.0 / plan.omega_max
    fourth = propagate(QuenchSchedule(plan, t_sw, tolerance=1e-10))
    second = propagate(QuenchSchedule(plan, t_sw, integrator="midpoint", tolerance=1e-10))
    np.testing.assert_allclose(fourth.matrix, second.matrix, atol=1e-8)
    np.testing.assert_allclose(fourth.inhomogeneous, second.inhomogeneous, atol=1e-8)


def test_refinement_failure_raises(rng):
    plan = random_plan(rng, 2)
    schedule = QuenchSchedule(
        plan, 1.0 / plan.omega_max, tolerance=1e-30, max_refinements=1
    )
    with pytest.raises(NumericalError):
        propagate(schedule)


def test_window_must_lie_inside_switch(rng):
    schedule = QuenchSchedule(random_plan(rng, 2), 1.0)
    with pytest.raises(ArgumentError):
        propagate(schedule, 0.5, 2.0)


def test_schedule_validation(rng):
    plan = random_plan(rng, 2)
    with pytest.raises(ArgumentError):
        QuenchSchedule(plan, 1.0, profile="cubic")
    with pytest.raises(ArgumentError):
        QuenchSchedule(plan, -1.0)
    schedule = QuenchSchedule(plan, 2.0, profile="smooth")
    assert schedule.weight(1.0) == pytest.approx(0.5)
    assert schedule.weight(3.0) == 1.0
    assert QuenchSchedule(plan, 2.0, profile="step").weight(0.99) == 0.0


def test_error_grows_linearly_with_switch_time(synthetic_plan):
    omega_max = synthetic_plan.omega_max
    grid = [value / omega_max for value in (1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1)]
    sweep = error_scaling_sweep(synthetic_plan, None, grid)

    assert synthetic_plan.dimension == 5
    assert sweep.slope == pytest.approx(1.0, abs=0.1)
    assert sweep.rows[0].variance < sweep.rows[-1].variance
    np.testing.assert_allclose(
        [row.t_sw_times_omega_max for row in sweep.rows],
        [1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1],
    )


def test_sweep_is_ordered_across_threads(rng):
    plan = random_plan(rng, 2)
    grid = [value / plan.omega_max for value in (0.003, 0.01, 0.03, 0.1)]
    serial = error_scaling_sweep(plan, plan.capacitance, grid)
    threaded = error_scaling_sweep(plan, plan.capacitance, grid, threads=3)
    assert [row.t_sw for row in threaded.rows] == grid
    assert threaded.slope == serial.slope


def test_sweep_needs_enough_fit_points(rng):
    plan = random_plan(rng, 2)
    with pytest.raises(ArgumentError):
        error_scaling_sweep(plan, None, [0.0, 0.01 / plan.omega_max, 2.0 / plan.omega_max])


def test_diabatic_bound_is_sound(rng):
    epsilon = 0.01
    for _ in range(100):
        plan = random_plan(rng, int(rng.integers(1, 5)))
        t_sw = diabatic_bound(plan, epsilon=epsilon)
        assert t_sw <= epsilon / plan.omega_max * (1 + 1e-12)

        schedule = QuenchSchedule(plan, t_sw)
        report = diabaticity_report(schedule, epsilon)
        assert report.norm_deviation <= 10 * epsilon
        assert report.fitted_constant <= 10
        assert report.magnus_converged

        deviation = quench_deviation(
            ground_state(plan.start_model()), propagate(schedule), plan.end_model()
        )
        assert deviation.relative_energy_shift <= 10 * epsilon
        assert deviation.fidelity > 1 - 10 * epsilon


def test_diabatic_bound_uses_drive_norm():
    n = 1
    plan = ProtocolPlan(
        np.eye(n), 4.0 * np.eye(n), np.array([10.0]), np.zeros(n), np.eye(n), frequency_scale=2.0
    )
    # Omega_max = 2, ||W|| = 10 / sqrt(2)
    expected = 0.01 * min(0.5, 2.0 / (10.0 / math.sqrt(2.0)))
    assert diabatic_bound(plan, epsilon=0.01) == pytest.approx(expected)
    with pytest.raises(ArgumentError):
        diabatic_bound(plan, epsilon=0.0)


def test_nonlinear_quench_bound():
    plan = ProtocolPlan(np.eye(1), np.eye(1), np.array([4.0]), np.zeros(1), np.eye(1))
    # ||W_start|| = 4
    bound = nonlinear_quench_bound(plan, {3: 0.5, 4: 0.1})
    assert bound == pytest.approx(min(1 / (0.5 * 4**1.5), 1 / (0.1 * 4**2)))
    assert nonlinear_quench_bound(plan, {3: 0.0}) == math.inf

    report = diabaticity_report(QuenchSchedule(plan, 0.01), coefficients={3: 0.5, 4: 0.1})
    assert report.nonlinear_bound == pytest.approx(bound)


def test_evolve_state_checks_dimensions(rng):
    propagator = propagate(QuenchSchedule(random_plan(rng, 2), 0.0))
    state = ground_state(random_plan(rng, 3).start_model())
    with pytest.raises(ArgumentError):
        evolve_state(state, propagator)


def test_instantaneous_quench_has_no_deviation(rng):
    plan = random_plan(rng, 2)
    state = ground_state(plan.start_model())
    deviation = quench_deviation(
        state, propagate(QuenchSchedule(plan, 0.0)), plan.end_model()
    )
    assert deviation.mean_shift == 0.0
    assert deviation.energy_shift == 0.0
    assert deviation.fidelity == pytest.approx(1.0)


def single_mode_plan(omega_start: float, omega_end: float | None = None, scale: float = 1.0):
    omega_end = omega_start if omega_end is None else omega_end
    return ProtocolPlan(
        np.array([[omega_start**2]]),
        np.array([[omega_end**2]]),
        np.zeros(1),
        np.zeros(1),
        np.eye(1),
        frequency_scale=scale,
    )


def test_half_period_rotation_reverses_displacement():
    omega, d = 2.0, 0.7
    plan = single_mode_plan(omega)
    propagator = propagate(QuenchSchedule(plan, math.pi / omega))
    state = GaussianState(np.array([d, 0.0]), np.diag([1 / omega, omega]))
    evolved = evolve_state(state, propagator)
    np.testing.assert_allclose(evolved.mean, [-d, 0.0], atol=1e-9)
    np.testing.assert_allclose(evolved.second_moments, state.second_moments, atol=1e-9)


def test_instantaneous_frequency_quench_energy():
    plan = single_mode_plan(1.0, 2.0)
    evolved = evolve_state(
        ground_state(plan.start_model()), propagate(QuenchSchedule(plan, 0.0))
    )
    assert mean_energy(evolved, plan.end_model()) == pytest.approx(1.25)


def test_norm_deviation_of_short_rotation():
    report = diabaticity_report(QuenchSchedule(single_mode_plan(1.0), 0.1))
    assert report.norm_deviation == pytest.approx(2 * math.sin(0.05), rel=1e-8)
    assert 0.05 <= report.norm_deviation <= 0.2
    assert report.drive_deviation == 0.0
    assert report.magnus_converged


def test_long_switch_leaves_magnus_regime():
    plan = single_mode_plan(1.0, 1.5)
    report = diabaticity_report(QuenchSchedule(plan, 2.0 / plan.omega_max))
    assert not report.magnus_converged


def test_single_mode_error_grows_at_rate_omega():
    omega = 1.5
    plan = single_mode_plan(omega, scale=omega)
    grid = [0.002, 0.005, 0.01]
    sweep = error_scaling_sweep(plan, None, grid)
    for row in sweep.rows:
        assert row.mean_norm_diff / row.t_sw == pytest.approx(omega, rel=0.01)
    assert sweep.slope == pytest.approx(1.0, abs=1e-3)


def test_reports_reuse_sweep_propagators(rng):
    plan = random_plan(rng, 2)
    grid = [value / plan.omega_max for value in (0.003, 0.01, 0.03)]
    sweep = error_scaling_sweep(plan, None, grid)
    assert len(sweep.propagators) == len(grid)
    for t_sw, propagator in zip(grid, sweep.propagators):
        schedule = QuenchSchedule(plan, t_sw)
        reused = diabaticity_report(schedule, propagator=propagator)
        fresh = diabaticity_report(schedule)
        assert reused.norm_deviation == pytest.approx(fresh.norm_deviation, rel=1e-12)
        assert reused.drive_deviation == pytest.approx(fresh.drive_deviation, rel=1e-12)

    with pytest.raises(ArgumentError):
        diabaticity_report(QuenchSchedule(plan, grid[0]), propagator=Propagator.identity(2))
