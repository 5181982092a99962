import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from loguru import logger

from . import units
from .errors import ArgumentError, ConstraintError, ModelError
from .harmonic import normal_modes
from .models import (
    CircuitRow,
    CircuitTable,
    DriveConvention,
    EmulatorModel,
    ForceField,
    HardwareConstraints,
    NormalModes,
    ProtocolPlan,
)
from .utils import fix_column_signs, symmetric_power

WINDOW_SLACK = 1e-12


@dataclass(frozen=True)
class FrequencyCap:
    """kappa = Omega_max / omega_max."""

    name: Literal["frequency-cap"] = "frequency-cap"


@dataclass(frozen=True)
class CouplingCap:
    """Turns B_max into a frequency cap through the largest capacitance."""

    name: Literal["coupling-cap"] = "coupling-cap"


@dataclass(frozen=True)
class TemperatureMatch:
    """Chooses kappa so that Omega / T_cryo equals omega / T_molecule."""

    t_molecule: float
    name: Literal["temperature-match"] = "temperature-match"

    def __post_init__(self):
        if not self.t_molecule > 0:
            raise ArgumentError("t_molecule must be positive")


KappaStrategy = FrequencyCap | CouplingCap | TemperatureMatch


def default_capacitance(
    masses: np.ndarray, pf_per_amu: float = 0.5, reference_amu: float = 1.0
) -> np.ndarray:
    """Diagonal capacitance C = c0 M / m0, masses in internal units."""
    masses = np.asarray(masses, dtype=float).reshape(-1)
    c0 = units.to_internal(pf_per_amu, units.PICOFARAD)
    m0 = units.to_internal(reference_amu, units.AMU)
    return np.diag(c0 * masses / m0)


def rescale(ff: ForceField, capacitance: np.ndarray, kappa: float) -> EmulatorModel:
    capacitance = np.asarray(capacitance, dtype=float)
    if capacitance.shape != (ff.dimension, ff.dimension):
        raise ArgumentError(
            f"capacitance shape {capacitance.shape} does not match {ff.dimension} coordinates"
        )
    if not (kappa > 0 and math.isfinite(kappa)):
        raise ArgumentError("kappa must be positive")
    c_half = symmetric_power(capacitance, 0.5)
    inv_sqrt_m = 1.0 / np.sqrt(ff.masses)

    weighted = inv_sqrt_m[:, None] * ff.hessian * inv_sqrt_m[None, :]
    coupling = kappa**2 * c_half @ weighted @ c_half
    driving = kappa**1.5 * c_half @ (inv_sqrt_m * (ff.hessian @ ff.equilibrium))
    return EmulatorModel(capacitance, 0.5 * (coupling + coupling.T), driving, kappa)


def _frequency_span(modes: NormalModes | tuple[NormalModes, ...]) -> tuple[float, float]:
    if isinstance(modes, NormalModes):
        modes = (modes,)
    frequencies = np.concatenate([m.physical_frequencies for m in modes])
    if frequencies.size == 0 or frequencies.max() <= 0:
        raise ArgumentError("molecular spectrum has no positive frequency")
    return float(frequencies.min()), float(frequencies.max())


def choose_kappa(
    modes: NormalModes | tuple[NormalModes, ...],
    hw: HardwareConstraints,
    strategy: KappaStrategy | None = None,
    capacitance: np.ndarray | None = None,
) -> float:
    strategy = strategy or FrequencyCap()
    omega_min, omega_max = _frequency_span(modes)

    molecular_range = omega_max / omega_min
    window_range = hw.omega_max / hw.omega_min
    if molecular_range > window_range:
        raise ConstraintError(
            f"dynamical range violated: omega_max/omega_min = {molecular_range:.6g} "
            f"exceeds Omega_max/Omega_min = {window_range:.6g}"
        )

    if isinstance(strategy, FrequencyCap):
        kappa = hw.omega_max / omega_max
    elif isinstance(strategy, CouplingCap):
        if hw.b_max is None or capacitance is None:
            raise ArgumentError("coupling-cap needs b_max and a capacitance matrix")
        c_scale = float(np.max(np.diag(capacitance)))
        kappa = math.sqrt(hw.b_max / c_scale) / omega_max
    elif isinstance(strategy, TemperatureMatch):
        if hw.t_cryo is None:
            raise ArgumentError("temperature-match needs t_cryo")
        kappa = hw.t_cryo / strategy.t_molecule
    else:
        raise ArgumentError(f"unknown kappa strategy {strategy!r}")

    low, high = kappa * omega_min, kappa * omega_max
    if low < hw.omega_min * (1 - WINDOW_SLACK) or high > hw.omega_max * (1 + WINDOW_SLACK):
        raise ConstraintError(
            f"rescaled frequencies [{low:.6g}, {high:.6g}] leave the hardware window "
            f"[{hw.omega_min:.6g}, {hw.omega_max:.6g}] ({strategy.name})"
        )
    logger.info(f"kappa={kappa:.6g} ({strategy.name})")
    return kappa


def check_cryostat(model: EmulatorModel, hw: HardwareConstraints) -> bool:
    """True when the cryostat leaves the array essentially in its ground state."""
    if hw.t_cryo is None:
        return True
    lowest = float(model.frequencies.min())
    if hw.t_cryo >= lowest:
        logger.warning(
            f"cryostat temperature {hw.t_cryo:.6g} is not below the lowest "
            f"emulator frequency {lowest:.6g}; the initial state will be thermal"
        )
        return False
    return True


def _prepare(
    ff0: ForceField,
    fff: ForceField,
    hw: HardwareConstraints | None,
    capacitance: np.ndarray,
    strategy: KappaStrategy | None,
    kappa: float | None,
) -> tuple[EmulatorModel, EmulatorModel, float]:
    if ff0.dimension != fff.dimension:
        raise ModelError("initial and final force fields have different dimensions")
    if not np.allclose(ff0.masses, fff.masses, rtol=1e-12, atol=0):
        raise ModelError("initial and final force fields have different masses")
    modes = (normal_modes(ff0), normal_modes(fff))
    for mode, ff in zip(modes, (ff0, fff)):
        if mode.kernel_dim:
            raise ModelError(
                f"'{ff.label}' still has {mode.kernel_dim} zero modes; remove the null space first"
            )
    if kappa is None:
        if hw is None:
            raise ArgumentError("either hardware constraints or kappa are required")
        kappa = choose_kappa(modes, hw, strategy, capacitance)
    start = rescale(ff0, capacitance, kappa)
    final = rescale(fff, capacitance, kappa)
    if hw is not None:
        check_cryostat(start, hw)
    return start, final, kappa


def _start_drive(
    ff0: ForceField,
    fff: ForceField,
    start: EmulatorModel,
    final: EmulatorModel,
    convention: DriveConvention,
) -> np.ndarray:
    if convention == "literal":
        return start.driving - final.driving
    if convention == "centered":
        c_half = symmetric_power(start.capacitance, 0.5)
        shift = ff0.hessian @ (ff0.equilibrium - fff.equilibrium)
        return start.kappa**1.5 * c_half @ (shift / np.sqrt(ff0.masses))
    raise ArgumentError(f"unknown drive convention '{convention}'")


def _plan_scale(start: EmulatorModel, final: EmulatorModel) -> float:
    return float(max(start.frequencies.max(), final.frequencies.max()))


def plan_protocol1(
    ff0: ForceField,
    fff: ForceField,
    hw: HardwareConstraints | None,
    capacitance: np.ndarray,
    *,
    strategy: KappaStrategy | None = None,
    kappa: float | None = None,
    drive_convention: DriveConvention = "literal",
) -> ProtocolPlan:
    start, final, kappa = _prepare(ff0, fff, hw, capacitance, strategy, kappa)
    v_start = _start_drive(ff0, fff, start, final, drive_convention)
    return ProtocolPlan(
        b_start=start.coupling,
        b_end=final.coupling,
        v_start=v_start,
        v_end=np.zeros(ff0.dimension),
        capacitance=start.capacitance,
        kappa=kappa,
        frequency_scale=_plan_scale(start, final),
        mode="force-field",
        drive_convention=drive_convention,
    )


def plan_protocol2(
    ff0: ForceField,
    fff: ForceField,
    hw: HardwareConstraints | None,
    capacitance: np.ndarray,
    *,
    strategy: KappaStrategy | None = None,
    kappa: float | None = None,
    drive_convention: DriveConvention = "literal",
) -> ProtocolPlan:
    """
    Same quench as plan_protocol1 written in the eigenbasis O of the final
    coupling, so that the final couplings vanish.
    """
    start, final, kappa = _prepare(ff0, fff, hw, capacitance, strategy, kappa)
    values, basis = np.linalg.eigh(final.coupling)
    basis = fix_column_signs(basis)

    b_start = basis.T @ start.coupling @ basis
    b_end = np.diag(values)
    v_start = basis.T @ _start_drive(ff0, fff, start, final, drive_convention)
    rotated_c = basis.T @ start.capacitance @ basis
    rotated_c = 0.5 * (rotated_c + rotated_c.T)

    residual = np.linalg.solve(rotated_c, b_end)
    off = residual - np.diag(np.diag(residual))
    if np.abs(off).max(initial=0.0) > 1e-9 * np.abs(residual).max():
        logger.warning(
            "C^-1 B_end is not diagonal in the final eigenbasis; "
            "residual capacitive cross-talk keeps the modes coupled"
        )

    return ProtocolPlan(
        b_start=0.5 * (b_start + b_start.T),
        b_end=b_end,
        v_start=v_start,
        v_end=np.zeros(ff0.dimension),
        capacitance=rotated_c,
        kappa=kappa,
        frequency_scale=_plan_scale(start, final),
        mode="normal-mode",
        basis=basis,
        final_frequencies=final.frequencies,
        drive_convention=drive_convention,
    )


def to_emulator_coordinates(
    masses: np.ndarray, capacitance: np.ndarray, kappa: float, x: np.ndarray, p: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    sqrt_m = np.sqrt(np.asarray(masses, dtype=float))
    phi = symmetric_power(capacitance, -0.5) @ (sqrt_m * np.asarray(x)) / math.sqrt(kappa)
    q = symmetric_power(capacitance, 0.5) @ (np.asarray(p) / sqrt_m) * math.sqrt(kappa)
    return phi, q


def to_molecular_coordinates(
    masses: np.ndarray, capacitance: np.ndarray, kappa: float, phi: np.ndarray, q: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """x = sqrt(kappa) M^-1/2 C^1/2 phi and p = M^1/2 C^-1/2 q / sqrt(kappa)."""
    sqrt_m = np.sqrt(np.asarray(masses, dtype=float))
    x = math.sqrt(kappa) * (symmetric_power(capacitance, 0.5) @ np.asarray(phi)) / sqrt_m
    p = sqrt_m * (symmetric_power(capacitance, -0.5) @ np.asarray(q)) / math.sqrt(kappa)
    return x, p


def to_canonical(model: EmulatorModel, phi: np.ndarray, q: np.ndarray) -> np.ndarray:
    s = model.frequency_scale
    x = math.sqrt(s) * symmetric_power(model.capacitance, 0.5) @ np.asarray(phi)
    p = model.capacitance_inv_sqrt @ np.asarray(q) / math.sqrt(s)
    return np.concatenate([x, p])


def from_canonical(model: EmulatorModel, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = model.dimension
    s = model.frequency_scale
    phi = model.capacitance_inv_sqrt @ r[:n] / math.sqrt(s)
    q = symmetric_power(model.capacitance, 0.5) @ r[n:] * math.sqrt(s)
    return phi, q


def _matrix_rows(
    prefix: str, quantity: str, matrix: np.ndarray, unit: tuple[str, float]
) -> list[CircuitRow]:
    name, scale = unit
    rows = []
    n = matrix.shape[0]
    for i in range(n):
        for j in range(i, n):
            if i != j and matrix[i, j] == 0.0:
                continue
            element = f"{prefix}{i + 1}" if i == j else f"{prefix}{i + 1}-{j + 1}"
            rows.append(CircuitRow(element, quantity, matrix[i, j] / scale, name))
    return rows


def circuit_table(
    start: EmulatorModel, end: EmulatorModel, unit_system: units.UnitSystem = units.LAB_UNITS
) -> CircuitTable:
    if start.dimension != end.dimension:
        raise ArgumentError("models have different dimensions")
    if not np.allclose(start.capacitance, end.capacitance, rtol=1e-12, atol=0) or not (
        math.isclose(start.kappa, end.kappa, rel_tol=1e-12)
    ):
        raise ArgumentError("models must share capacitance and kappa")

    # hbar*Omega in eV equals h f / e
    frequency_unit = unit_system.frequency
    rows = _matrix_rows("C", "capacitance", start.capacitance, unit_system.capacitance)
    rows += _matrix_rows("B", "coupling_start", start.coupling, unit_system.coupling)
    rows += _matrix_rows("B", "coupling_end", end.coupling, unit_system.coupling)
    for quantity, model in (("frequency_start", start), ("frequency_end", end)):
        rows += [
            CircuitRow(f"mode{k + 1}", quantity, omega / frequency_unit[1], frequency_unit[0])
            for k, omega in enumerate(model.frequencies)
        ]
    drive_name, drive_scale = unit_system.drive
    rows += [
        CircuitRow(f"V{k + 1}", "drive", abs(value) / drive_scale, drive_name)
        for k, value in enumerate(start.driving - end.driving)
    ]

    table = CircuitTable(tuple(rows))
    summary = []
    unit_names = {row.quantity: row.unit for row in rows}
    for quantity, (low, high) in table.ranges().items():
        summary.append(CircuitRow("*", f"{quantity}_min", low, unit_names[quantity]))
        summary.append(CircuitRow("*", f"{quantity}_max", high, unit_names[quantity]))
    return CircuitTable(tuple(rows + summary))
