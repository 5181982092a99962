import numpy as np
import pytest
from factories import diagonal_field, random_force_fields, random_pd

from vibronic import units
from vibronic.errors import ArgumentError, ConstraintError
from vibronic.harmonic import normal_modes
from vibronic.mapping import (
    CouplingCap,
    TemperatureMatch,
    check_cryostat,
    choose_kappa,
    circuit_table,
    default_capacitance,
    from_canonical,
    plan_protocol1,
    plan_protocol2,
    rescale,
    to_canonical,
    to_emulator_coordinates,
    to_molecular_coordinates,
)
from vibronic.models import EmulatorModel, ForceField, HardwareConstraints
from vibronic.utils import symplectic_form

MASSES_AMU = np.array([1.0, 12.0, 12.0, 16.0, 16.0])
FREQUENCIES_MEV = np.array([62.0, 100.0, 140.0, 190.0, 467.0])


@pytest.fixture
def hardware() -> HardwareConstraints:
    return HardwareConstraints(
        omega_min=units.to_internal(0.2, units.GHZ),
        omega_max=units.to_internal(10.0, units.GHZ),
        t_cryo=units.to_internal(20.0, units.MILLIKELVIN),
    )


@pytest.fixture
def molecule() -> ForceField:
    return diagonal_field(
        units.to_internal(MASSES_AMU, units.AMU),
        units.to_internal(FREQUENCIES_MEV, units.MEV),
    )


def shifted(ff: ForceField, shift) -> ForceField:
    return ForceField(ff.masses, ff.hessian, ff.equilibrium + np.asarray(shift), "final")


def test_rescaled_frequencies_follow_kappa(rng):
    for _ in range(50):
        n = int(rng.integers(1, 7))
        ff, _ = random_force_fields(rng, n, spread=(0.3, 3.0))
        capacitance = random_pd(rng, n, 0.1, 10.0)
        kappa = float(rng.uniform(1e-3, 10.0))
        model = rescale(ff, capacitance, kappa)
        np.testing.assert_allclose(
            model.frequencies, kappa * normal_modes(ff).frequencies, rtol=1e-10
        )


def test_molecular_table_maps_into_ghz_window(molecule, hardware):
    kappa = choose_kappa(normal_modes(molecule), hardware)
    capacitance = default_capacitance(molecule.masses)
    model = rescale(molecule, capacitance, kappa)

    frequencies = units.from_internal(model.frequencies, units.GHZ)
    assert frequencies.min() == pytest.approx(1.33, abs=0.01)
    assert frequencies.max() == pytest.approx(10.0, abs=1e-9)

    picofarads = units.from_internal(np.diag(capacitance), units.PICOFARAD)
    np.testing.assert_allclose(picofarads, 0.5 * MASSES_AMU, rtol=1e-12)


def test_dynamical_range_violation(hardware):
    ff = diagonal_field(
        units.to_internal(np.ones(2), units.AMU),
        units.to_internal(np.array([1.0, 467.0]), units.MEV),
    )
    with pytest.raises(ConstraintError, match="dynamical range violated"):
        choose_kappa(normal_modes(ff), hardware)


def test_coupling_cap(molecule, hardware):
    capacitance = default_capacitance(molecule.masses)
    omega_cap = units.to_internal(5.0, units.GHZ)
    hw = HardwareConstraints(
        hardware.omega_min,
        hardware.omega_max,
        b_max=omega_cap**2 * capacitance.max(),
        t_cryo=hardware.t_cryo,
    )
    kappa = choose_kappa(normal_modes(molecule), hw, CouplingCap(), capacitance)
    omega_max = normal_modes(molecule).frequencies.max()
    assert kappa * omega_max == pytest.approx(omega_cap, rel=1e-12)

    with pytest.raises(ArgumentError):
        choose_kappa(normal_modes(molecule), hardware, CouplingCap(), capacitance)


def test_temperature_match_preserves_boltzmann_factors(molecule, hardware):
    t_molecule = units.to_internal(400.0, units.KELVIN)
    modes = normal_modes(molecule)
    kappa = choose_kappa(modes, hardware, TemperatureMatch(t_molecule))
    assert kappa == pytest.approx(5e-5, rel=1e-12)
    np.testing.assert_allclose(
        kappa * modes.frequencies / hardware.t_cryo, modes.frequencies / t_molecule
    )

    with pytest.raises(ConstraintError, match="hardware window"):
        choose_kappa(modes, hardware, TemperatureMatch(units.to_internal(40.0, units.KELVIN)))


def test_cryostat_check(molecule, hardware, log_messages):
    kappa = choose_kappa(normal_modes(molecule), hardware)
    model = rescale(molecule, default_capacitance(molecule.masses), kappa)
    assert check_cryostat(model, hardware)

    warm = HardwareConstraints(
        hardware.omega_min, hardware.omega_max, t_cryo=units.to_internal(1.0, units.KELVIN)
    )
    assert not check_cryostat(model, warm)
    assert any("initial state will be thermal" in message for message in log_messages)


def test_protocol1_plan(rng):
    ff0, fff = random_force_fields(rng, 3)
    capacitance = random_pd(rng, 3)
    plan = plan_protocol1(ff0, fff, None, capacitance, kappa=0.7)

    start, final = rescale(ff0, capacitance, 0.7), rescale(fff, capacitance, 0.7)
    np.testing.assert_allclose(plan.b_start, start.coupling)
    np.testing.assert_allclose(plan.b_end, final.coupling)
    np.testing.assert_allclose(plan.v_start, start.driving - final.driving)
    np.testing.assert_array_equal(plan.v_end, np.zeros(3))
    assert plan.mode == "force-field"

    assert plan.frequency_scale == pytest.approx(plan.omega_max)
    sigma = symplectic_form(3)
    norms = [
        np.linalg.norm(sigma @ model.hamiltonian_matrices[0], 2)
        for model in (plan.start_model(), plan.end_model())
    ]
    assert max(norms) == pytest.approx(plan.omega_max, rel=1e-12)


def test_drive_conventions_agree_for_equal_hessians(rng):
    ff0, _ = random_force_fields(rng, 3)
    fff = shifted(ff0, 0.1 * rng.normal(size=3))
    capacitance = random_pd(rng, 3)
    literal = plan_protocol1(ff0, fff, None, capacitance, kappa=1.3)
    centered = plan_protocol1(ff0, fff, None, capacitance, kappa=1.3, drive_convention="centered")
    np.testing.assert_allclose(literal.v_start, centered.v_start, rtol=1e-10, atol=1e-12)


def test_centered_drive_places_start_minimum_at_relative_shift(rng):
    ff0, fff = random_force_fields(rng, 3)
    capacitance = random_pd(rng, 3)
    kappa = 0.9
    plan = plan_protocol1(ff0, fff, None, capacitance, kappa=kappa, drive_convention="centered")
    phi_min = np.linalg.solve(plan.b_start, plan.v_start)
    expected, _ = to_emulator_coordinates(
        ff0.masses, capacitance, kappa, ff0.equilibrium - fff.equilibrium, np.zeros(3)
    )
    np.testing.assert_allclose(phi_min, expected, rtol=1e-9, atol=1e-12)


def test_protocol2_rotates_into_final_eigenbasis(rng):
    ff0, fff = random_force_fields(rng, 3)
    capacitance = random_pd(rng, 3)
    first = plan_protocol1(ff0, fff, None, capacitance, kappa=0.5)
    second = plan_protocol2(ff0, fff, None, capacitance, kappa=0.5)

    assert second.mode == "normal-mode"
    np.testing.assert_allclose(second.b_end, np.diag(np.diag(second.b_end)))
    np.testing.assert_allclose(second.basis.T @ second.basis, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(
        second.capacitance, second.basis.T @ capacitance @ second.basis, atol=1e-12
    )
    np.testing.assert_allclose(second.final_frequencies, first.end_model().frequencies)
    np.testing.assert_allclose(
        second.start_model().frequencies, first.start_model().frequencies, rtol=1e-10
    )
    assert second.omega_max == pytest.approx(first.omega_max, rel=1e-10)


def test_protocol2_warns_about_capacitive_crosstalk(rng, log_messages):
    ff0, fff = random_force_fields(rng, 3)
    plan_protocol2(ff0, fff, None, 2.0 * np.eye(3), kappa=0.5)
    assert not any("not diagonal" in message for message in log_messages)
    plan_protocol2(ff0, fff, None, random_pd(rng, 3), kappa=0.5)
    assert any("not diagonal" in message for message in log_messages)


def test_planning_needs_kappa_or_hardware(rng):
    ff0, fff = random_force_fields(rng, 2)
    with pytest.raises(ArgumentError):
        plan_protocol1(ff0, fff, None, np.eye(2))


def test_molecular_coordinates_round_trip(rng):
    masses = rng.uniform(1.0, 16.0, 4)
    capacitance = random_pd(rng, 4)
    x, p = rng.normal(size=4), rng.normal(size=4)
    phi, q = to_emulator_coordinates(masses, capacitance, 0.3, x, p)
    back_x, back_p = to_molecular_coordinates(masses, capacitance, 0.3, phi, q)
    np.testing.assert_allclose(back_x, x, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(back_p, p, rtol=1e-12, atol=1e-14)


def test_emulator_equilibrium_is_mapped_molecular_equilibrium(rng):
    ff, _ = random_force_fields(rng, 3)
    ff = shifted(ff, rng.normal(size=3))
    capacitance = random_pd(rng, 3)
    model = rescale(ff, capacitance, 2.5)
    phi_eq = np.linalg.solve(model.coupling, model.driving)
    mapped, _ = to_emulator_coordinates(ff.masses, capacitance, 2.5, ff.equilibrium, np.zeros(3))
    np.testing.assert_allclose(phi_eq, mapped, rtol=1e-9, atol=1e-12)


def test_canonical_coordinates_preserve_energy(rng):
    model = rescale(random_force_fields(rng, 3)[1], random_pd(rng, 3), 1.0)
    model = EmulatorModel(model.capacitance, model.coupling, model.driving, frequency_scale=2.2)
    phi, q = rng.normal(size=3), rng.normal(size=3)
    r = to_canonical(model, phi, q)
    back_phi, back_q = from_canonical(model, r)
    np.testing.assert_allclose(back_phi, phi, atol=1e-12)
    np.testing.assert_allclose(back_q, q, atol=1e-12)

    d, w = model.hamiltonian_matrices
    circuit_energy = (
        0.5 * q @ np.linalg.solve(model.capacitance, q)
        + 0.5 * phi @ model.coupling @ phi
        - phi @ model.driving
    )
    assert 0.5 * r @ d @ r - w @ r == pytest.approx(circuit_energy, rel=1e-10)


def test_circuit_table(molecule, hardware):
    fff = shifted(molecule, [0.01, 0.0, 0.0, 0.0, 0.02])
    capacitance = default_capacitance(molecule.masses)
    plan = plan_protocol1(molecule, fff, hardware, capacitance)
    table = circuit_table(plan.start_model(), plan.end_model())

    rows = {(row.element, row.quantity): row for row in table.rows}
    assert rows[("C1", "capacitance")].value == pytest.approx(0.5)
    assert rows[("C1", "capacitance")].unit == "pF"
    assert rows[("mode5", "frequency_start")].unit == "GHz"
    assert rows[("*", "frequency_start_max")].value == pytest.approx(10.0)
    assert rows[("*", "frequency_start_min")].value == pytest.approx(1.33, abs=0.01)
    assert rows[("*", "capacitance_max")].value == pytest.approx(8.0)
    assert rows[("V1", "drive")].value > 0
    assert rows[("V2", "drive")].value == 0.0

    low, high = table.ranges()["frequency_end"]
    assert 1.3 < low < high <= 10.0 + 1e-9
