import numpy as np
import pytest

from vibronic import units
from vibronic.errors import ArgumentError
from vibronic.models import DispersiveSetup, GhzSetup, LineSpectrum
from vibronic.readout import (
    dispersive_shift,
    ghz_forward,
    ghz_reconstruct,
    readout_frequency,
    resolvable_photons,
)

ENERGY_GRID = np.linspace(0.0, 2.0, 2001)
STEP = ENERGY_GRID[1] - ENERGY_GRID[0]


def ghz(chi: float = 0.05, tau_max: float = 4000.0, n_tau: int = 4001, energy=ENERGY_GRID):
    return GhzSetup(chi, np.linspace(0.0, tau_max, n_tau), energy)


def window_mass(density: np.ndarray, centre: float, half_width: float = 0.2) -> float:
    inside = np.abs(ENERGY_GRID - centre) <= half_width
    return float(density[inside].sum() * STEP)


def peak(density: np.ndarray, centre: float, half_width: float = 0.2) -> float:
    inside = np.nonzero(np.abs(ENERGY_GRID - centre) <= half_width)[0]
    return float(ENERGY_GRID[inside[np.argmax(density[inside])]])


@pytest.fixture
def readout() -> DispersiveSetup:
    return DispersiveSetup(
        g=units.to_internal(0.105, units.GHZ),
        delta=units.to_internal(1.1, units.GHZ),
        gamma=units.to_internal(0.0033, units.GHZ),
        omega_r=units.to_internal(7.0, units.GHZ),
        omega_q=units.to_internal(5.0, units.GHZ),
    )


def test_resolvable_photon_number(readout):
    assert resolvable_photons(readout) == 6


def test_few_resolvable_photons_warn(readout, log_messages):
    broad = DispersiveSetup(readout.g, readout.delta, readout.gamma * 3.3, readout.omega_r)
    assert resolvable_photons(broad) == 1
    assert any("resolves only 1 photons" in message for message in log_messages)


def test_dispersive_shift(readout):
    splitting, xi0 = dispersive_shift(readout, 0, 2)
    assert xi0 == pytest.approx(float(readout.g[0] ** 2 / readout.delta[0]))
    assert splitting == pytest.approx(float(readout.omega_q[0]) + 5 * xi0)
    with pytest.raises(ArgumentError):
        dispersive_shift(readout, 1, 0)
    with pytest.raises(ArgumentError):
        dispersive_shift(readout, 0, -1)


def test_readout_frequency(readout):
    splitting, xi0 = dispersive_shift(readout, 0, 3)
    assert readout_frequency(readout, 0, 3, splitting) == readout.omega_r
    assert readout_frequency(readout, 0, 3, splitting + 2 * xi0) == pytest.approx(
        readout.omega_r - xi0
    )


def test_dispersive_regime_is_enforced():
    with pytest.raises(ArgumentError):
        DispersiveSetup(g=0.5, delta=1.0, gamma=0.01, omega_r=7.0)
    with pytest.raises(ArgumentError):
        DispersiveSetup(g=0.1, delta=1.0, gamma=0.0, omega_r=7.0)


def test_forward_model():
    setup = ghz()
    spectrum = LineSpectrum.from_pairs([(0.5, 0.25), (1.2, 0.75)])
    expected = 0.25 * np.sin(0.05 * 0.5 * setup.tau_grid) ** 2 + 0.75 * np.sin(
        0.05 * 1.2 * setup.tau_grid
    ) ** 2
    np.testing.assert_allclose(ghz_forward(spectrum, setup), expected, atol=1e-14)


def test_forward_needs_a_normalised_spectrum():
    with pytest.raises(ArgumentError):
        ghz_forward(LineSpectrum.from_pairs([(1.0, 0.9)]), ghz())


def test_single_line_round_trip():
    setup = ghz()
    assert setup.chi * 1.0 * setup.tau_grid[-1] >= 20 * np.pi
    p1 = ghz_forward(LineSpectrum.from_pairs([(1.0, 1.0)]), setup)
    density = ghz_reconstruct(p1, setup).density
    assert abs(peak(density, 1.0) - 1.0) <= STEP
    assert window_mass(density, 1.0) == pytest.approx(1.0, abs=0.05)


def test_two_line_round_trip():
    setup = ghz()
    lines = [(0.6, 0.3), (1.4, 0.7)]
    density = ghz_reconstruct(ghz_forward(LineSpectrum.from_pairs(lines), setup), setup).density
    for energy, probability in lines:
        assert abs(peak(density, energy) - energy) <= STEP
        assert window_mass(density, energy) == pytest.approx(probability, rel=0.05)


def test_reconstruction_needs_a_uniform_grid_from_zero():
    tau = np.linspace(0.0, 100.0, 101)
    with pytest.raises(ArgumentError, match="uniform"):
        ghz_reconstruct(np.zeros(101), GhzSetup(0.05, tau**1.1, ENERGY_GRID))
    with pytest.raises(ArgumentError, match="start at zero"):
        ghz_reconstruct(np.zeros(101), GhzSetup(0.05, tau + 1.0, ENERGY_GRID))
    with pytest.raises(ArgumentError):
        ghz_reconstruct(np.zeros(50), GhzSetup(0.05, tau, ENERGY_GRID))


def test_energy_grid_beyond_sampling_limit_warns(log_messages):
    setup = GhzSetup(0.05, np.linspace(0.0, 100.0, 101), np.linspace(0.0, 40.0, 41))
    ghz_reconstruct(np.zeros(101), setup)
    assert any("sampling limit" in message for message in log_messages)


def test_chi_is_bounded():
    with pytest.raises(ArgumentError):
        ghz(chi=0.2)


def test_reconstruction_is_linear(rng):
    setup = ghz(tau_max=400.0, n_tau=401)
    first, second = rng.uniform(0.0, 1.0, (2, 401))
    combined = ghz_reconstruct(0.3 * first + 1.7 * second, setup).density
    expected = (
        0.3 * ghz_reconstruct(first, setup).density
        + 1.7 * ghz_reconstruct(second, setup).density
    )
    np.testing.assert_allclose(combined, expected, atol=1e-12)
    # a constant offset in P1 is removed with the tau average
    shifted = ghz_reconstruct(first + 0.25, setup).density
    np.testing.assert_allclose(shifted, ghz_reconstruct(first, setup).density, atol=1e-12)


def test_resolution_scales_inversely_with_tau_max():
    spectrum = LineSpectrum.from_pairs([(1.0, 1.0)])
    widths, heights = [], []
    for tau_max in (500.0, 1000.0):
        setup = ghz(tau_max=tau_max, n_tau=int(tau_max) + 1)
        density = ghz_reconstruct(ghz_forward(spectrum, setup), setup).density
        inside = np.abs(ENERGY_GRID - 1.0) <= 0.3
        top = density[inside].max()
        widths.append(np.count_nonzero(density[inside] > 0.5 * top) * STEP)
        heights.append(top)
    assert widths[0] / widths[1] == pytest.approx(2.0, rel=0.1)
    assert heights[1] / heights[0] == pytest.approx(2.0, rel=0.05)


def test_forward_probabilities_are_bounded(rng):
    setup = ghz(tau_max=1000.0, n_tau=1001)
    for _ in range(10):
        k = int(rng.integers(1, 6))
        probabilities = rng.dirichlet(np.ones(k))
        energies = rng.uniform(0.0, 2.0, k)
        p1 = ghz_forward(LineSpectrum.from_pairs(zip(energies, probabilities)), setup)
        assert p1.min() >= 0.0
        assert p1.max() <= 1.0 + 1e-12
    assert np.all(ghz_forward(LineSpectrum.from_pairs([(0.0, 1.0)]), setup) == 0.0)
