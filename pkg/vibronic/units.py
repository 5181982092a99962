"""
Unit boundary between file formats and the internal hbar = k_B = 1 system.

Internally every energy is in eV. On the molecular side lengths are in angstrom
and masses in hbar^2 / (eV angstrom^2); on the emulator side flux is counted in
hbar/e and charge in e. Frequencies are stored as hbar*omega in eV and times in
hbar/eV. The base constants are CODATA 2018 and are hard-coded so that emitted
tables do not depend on the installed scipy release.
"""

import math
from dataclasses import dataclass
from typing import Final

ELEMENTARY_CHARGE: Final = 1.602176634e-19  # C
PLANCK: Final = 6.62607015e-34  # J s
HBAR: Final = PLANCK / (2.0 * math.pi)  # J s
BOLTZMANN: Final = 1.380649e-23  # J / K
ATOMIC_MASS: Final = 1.66053906660e-27  # kg
ANGSTROM: Final = 1.0e-10  # m

# molecular side
AMU: Final = ATOMIC_MASS * ELEMENTARY_CHARGE * ANGSTROM**2 / HBAR**2
EV_PER_ANGSTROM2: Final = 1.0
MEV: Final = 1.0e-3
KELVIN: Final = BOLTZMANN / ELEMENTARY_CHARGE
MILLIKELVIN: Final = 1.0e-3 * KELVIN

# emulator side
GHZ: Final = PLANCK * 1.0e9 / ELEMENTARY_CHARGE  # ordinary frequency f -> hbar * 2 pi f
PICOFARAD: Final = 1.0e-12 / ELEMENTARY_CHARGE
INVERSE_NANOHENRY: Final = 1.0e9 * HBAR**2 / ELEMENTARY_CHARGE**3
NANOAMPERE: Final = 1.0e-9 * HBAR / ELEMENTARY_CHARGE**2

# time
SECOND: Final = ELEMENTARY_CHARGE / HBAR
FEMTOSECOND: Final = 1.0e-15 * SECOND


def to_internal(value: float, unit: float) -> float:
    return value * unit


def from_internal(value: float, unit: float) -> float:
    return value / unit


@dataclass(frozen=True)
class UnitSystem:
    """Units used when emulator parameters are written out."""

    capacitance: tuple[str, float] = ("pF", PICOFARAD)
    coupling: tuple[str, float] = ("nH^-1", INVERSE_NANOHENRY)
    frequency: tuple[str, float] = ("GHz", GHZ)
    drive: tuple[str, float] = ("nA", NANOAMPERE)


LAB_UNITS: Final = UnitSystem()
