from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import units
from .models import ForceField, ProtocolPlan, SquidCircuit, TaylorExpansion

SCHEMA_VERSION = 1

Matrix = list[list[float]]


class ConfigurationBlock(BaseModel):
    hessian_ev_per_a2: Matrix
    equilibrium_a: list[float]


class MoleculeFile(BaseModel):
    """Two electronic configurations of one molecule in file units (amu, eV/A^2, A)."""

    schema_version: int = SCHEMA_VERSION
    name: str = "molecule"
    masses_amu: list[float] = Field(min_length=1)
    initial: ConfigurationBlock
    final: ConfigurationBlock
    mode_labels: list[str] | None = None

    @model_validator(mode="after")
    def check_dimensions(self):
        n = len(self.masses_amu)
        if any(m <= 0 for m in self.masses_amu):
            raise ValueError("masses must be positive")
        for tag, block in (("initial", self.initial), ("final", self.final)):
            if len(block.hessian_ev_per_a2) != n or any(
                len(row) != n for row in block.hessian_ev_per_a2
            ):
                raise ValueError(f"{tag} hessian must be {n}x{n}")
            if len(block.equilibrium_a) != n:
                raise ValueError(f"{tag} equilibrium must have {n} entries")
        if self.mode_labels is not None and len(self.mode_labels) != n:
            raise ValueError(f"mode_labels must have {n} entries")
        return self

    def to_force_fields(self) -> tuple[ForceField, ForceField]:
        masses = units.to_internal(np.array(self.masses_amu), units.AMU)
        return tuple(
            ForceField(
                masses,
                units.to_internal(np.array(block.hessian_ev_per_a2), units.EV_PER_ANGSTROM2),
                np.array(block.equilibrium_a),
                tag,
            )
            for tag, block in (("initial", self.initial), ("final", self.final))
        )

    @classmethod
    def from_force_fields(
        cls, initial: ForceField, final: ForceField, name: str = "molecule"
    ) -> "MoleculeFile":
        def block(ff: ForceField) -> ConfigurationBlock:
            return ConfigurationBlock(
                hessian_ev_per_a2=units.from_internal(
                    ff.hessian, units.EV_PER_ANGSTROM2
                ).tolist(),
                equilibrium_a=ff.equilibrium.tolist(),
            )

        return cls(
            name=name,
            masses_amu=units.from_internal(initial.masses, units.AMU).tolist(),
            initial=block(initial),
            final=block(final),
        )


class PlanFile(BaseModel):
    """A protocol plan in internal units (energy eV, flux hbar/e, charge e)."""

    schema_version: int = SCHEMA_VERSION
    unit_system: Literal["internal"] = "internal"
    mode: Literal["force-field", "normal-mode"]
    kappa: float = Field(gt=0)
    frequency_scale: float = Field(gt=0)
    drive_convention: Literal["literal", "centered"] = "literal"
    capacitance: Matrix
    b_start: Matrix
    b_end: Matrix
    v_start: list[float]
    v_end: list[float]
    basis: Matrix | None = None
    final_frequencies: list[float] | None = None

    @classmethod
    def from_plan(cls, plan: ProtocolPlan) -> "PlanFile":
        optional = lambda value: None if value is None else value.tolist()  # noqa: E731
        return cls(
            mode=plan.mode,
            kappa=plan.kappa,
            frequency_scale=plan.frequency_scale,
            drive_convention=plan.drive_convention,
            capacitance=plan.capacitance.tolist(),
            b_start=plan.b_start.tolist(),
            b_end=plan.b_end.tolist(),
            v_start=plan.v_start.tolist(),
            v_end=plan.v_end.tolist(),
            basis=optional(plan.basis),
            final_frequencies=optional(plan.final_frequencies),
        )

    def to_plan(self) -> ProtocolPlan:
        return ProtocolPlan(
            b_start=np.array(self.b_start),
            b_end=np.array(self.b_end),
            v_start=np.array(self.v_start),
            v_end=np.array(self.v_end),
            capacitance=np.array(self.capacitance),
            kappa=self.kappa,
            frequency_scale=self.frequency_scale,
            mode=self.mode,
            basis=None if self.basis is None else np.array(self.basis),
            final_frequencies=(
                None if self.final_frequencies is None else np.array(self.final_frequencies)
            ),
            drive_convention=self.drive_convention,
        )


class DiabaticityRecord(BaseModel):
    t_sw: float
    t_bound: float
    omega_max: float
    norm_deviation: float
    drive_deviation: float
    magnus_converged: bool
    fitted_constant: float

    model_config = ConfigDict(from_attributes=True)


class QuenchSummary(BaseModel):
    schema_version: int = SCHEMA_VERSION
    time_unit: Literal["s"] = "s"
    slope: float
    omega_max_ghz: float
    epsilon: float
    t_bound: float
    profile: str
    integrator: str
    reports: list[DiabaticityRecord]


class MomentReportFile(BaseModel):
    schema_version: int = SCHEMA_VERSION
    energy_unit: Literal["meV"] = "meV"
    spectral_mean: float
    moment_mean: float
    absolute: float
    relative: float
    tolerance: float
    passed: bool


class DesignFile(BaseModel):
    """Designed SQUID circuit, in the units of the configured phi0 and inductance."""

    schema_version: int = SCHEMA_VERSION
    ej: float
    l: float  # noqa: E741
    phi_ext: float
    phi0: float
    l_over_lj: float
    phi_min: float
    target_c3_over_c2: float
    target_c4_over_c2: float
    achieved_c3_over_c2: float
    achieved_c4_over_c2: float
    residual_c3: float
    residual_c4: float
    leading_order_c3_over_c2: float
    leading_order_c4_over_c2: float

    @classmethod
    def from_design(
        cls, circuit: SquidCircuit, expansion: TaylorExpansion, targets: tuple[float, float]
    ) -> "DesignFile":
        r3, r4 = expansion.ratios
        return cls(
            ej=circuit.ej,
            l=circuit.l,
            phi_ext=circuit.phi_ext,
            phi0=circuit.phi0,
            l_over_lj=circuit.l_over_lj,
            phi_min=expansion.phi_min,
            target_c3_over_c2=targets[0],
            target_c4_over_c2=targets[1],
            achieved_c3_over_c2=r3,
            achieved_c4_over_c2=r4,
            residual_c3=abs(r3 - targets[0]),
            residual_c4=abs(r4 - targets[1]),
            leading_order_c3_over_c2=expansion.leading_order[0],
            leading_order_c4_over_c2=expansion.leading_order[1],
        )
