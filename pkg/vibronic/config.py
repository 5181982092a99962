import json
import math
import sys
from contextlib import suppress
from functools import lru_cache
from pathlib import Path
from typing import Final, Literal

from loguru import logger
from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

BASE_DIR: Final = Path(__file__).parent
DATA_DIR: Final = BASE_DIR / "data"

LOG_FORMAT: Final = "{time} | {file} | {function} | {level} | {message}"


class Settings(BaseSettings):
    """
    Process-level settings for the emulator toolkit.
    """

    model_config = SettingsConfigDict(env_prefix="VIBRONIC_")

    LOG_DIR: str = "logs"
    LOG_LEVEL: str = "INFO"
    LOG_TO_FILE: bool = False
    THREADS: int = Field(default=1, ge=1)


settings_instance = None


@lru_cache(maxsize=2)
def get_settings() -> Settings:
    global settings_instance
    if settings_instance is None:
        settings_instance = Settings()
    return settings_instance


# loguru's default stderr handler has id 0
_sink_ids: list[int] = [0]


def setup_logging(settings: Settings) -> None:
    """Replace the sinks installed by earlier calls; sinks added elsewhere stay."""
    for sink_id in _sink_ids:
        with suppress(ValueError):
            logger.remove(sink_id)
    _sink_ids.clear()
    _sink_ids.append(logger.add(sys.stderr, level=settings.LOG_LEVEL, format=LOG_FORMAT))
    if settings.LOG_TO_FILE:
        _sink_ids.append(
            logger.add(
                f"{settings.LOG_DIR}/{{time:YYYY-MM-DD}}.log",
                format=LOG_FORMAT,
                level=settings.LOG_LEVEL,
                rotation="1 day",
            )
        )


class HardwareSection(BaseModel):
    omega_min_ghz: float = Field(default=0.2, gt=0)
    omega_max_ghz: float = Field(default=10.0, gt=0)
    b_max_inv_nh: float | None = Field(default=None, gt=0)
    t_cryo_mk: float = Field(default=20.0, gt=0)

    @model_validator(mode="after")
    def check_window(self):
        if self.omega_min_ghz >= self.omega_max_ghz:
            raise ValueError("omega_min_ghz must be below omega_max_ghz")
        return self


class KappaSection(BaseModel):
    strategy: Literal["frequency-cap", "coupling-cap", "temperature-match"] = (
        "frequency-cap"
    )
    t_molecule_k: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def check_temperature(self):
        if self.strategy == "temperature-match" and self.t_molecule_k is None:
            raise ValueError("temperature-match needs t_molecule_k")
        return self


class CapacitanceSection(BaseModel):
    pf_per_amu: float = Field(default=0.5, gt=0)
    reference_amu: float = Field(default=1.0, gt=0)


class QuenchSection(BaseModel):
    t_sw_omega_grid: list[float] = Field(
        default_factory=lambda: [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1]
    )
    epsilon: float = Field(default=0.01, gt=0)
    profile: Literal["linear", "smooth", "step"] = "linear"
    integrator: Literal["magnus4", "midpoint"] = "magnus4"
    tolerance: float = Field(default=1e-11, gt=0)

    @field_validator("t_sw_omega_grid")
    @classmethod
    def check_grid(cls, value: list[float]) -> list[float]:
        if not value or any(v < 0 or not math.isfinite(v) for v in value):
            raise ValueError("t_sw_omega_grid needs finite non-negative values")
        return value


class FcpSection(BaseModel):
    n_max: int | list[int] = 8
    quadrature_order: int | None = Field(default=None, ge=1)

    @field_validator("n_max")
    @classmethod
    def check_cutoffs(cls, value: int | list[int]) -> int | list[int]:
        values = value if isinstance(value, list) else [value]
        if not values or min(values) < 1:
            raise ValueError("FCP cutoffs must be at least 1")
        return value


class GhzSection(BaseModel):
    chi: float = Field(default=0.05, gt=0, le=0.1)
    tau_max_fs: float = Field(default=20000.0, gt=0)
    n_tau: int = Field(default=4001, ge=8)
    energy_min_mev: float = Field(default=0.0, ge=0)
    energy_max_mev: float = Field(default=1000.0, gt=0)
    n_energy: int = Field(default=2001, ge=2)
    window: str = "hann"

    @model_validator(mode="after")
    def check_energy_range(self):
        if self.energy_min_mev >= self.energy_max_mev:
            raise ValueError("energy_min_mev must be below energy_max_mev")
        return self


class SquidSection(BaseModel):
    phi0: float = Field(default=1.0, gt=0)
    inductance: float = Field(default=1.0, gt=0)
    n_curve: int = Field(default=401, ge=3)
    curve_half_width: float | None = Field(default=None, gt=0)


class RunConfig(BaseSettings):
    """
    Parameters of one run. Values from the --config JSON file override the
    environment (VIBRONIC_RUN_ prefix, "__" between nested names).
    """

    model_config = SettingsConfigDict(
        env_prefix="VIBRONIC_RUN_", env_nested_delimiter="__"
    )

    hardware: HardwareSection = Field(default_factory=HardwareSection)
    kappa: KappaSection = Field(default_factory=KappaSection)
    capacitance: CapacitanceSection = Field(default_factory=CapacitanceSection)
    regulators_mev: list[float] = Field(default_factory=list)
    protocol: Literal[1, 2] = 1
    drive_convention: Literal["literal", "centered"] = "literal"
    quench: QuenchSection = Field(default_factory=QuenchSection)
    fcp: FcpSection = Field(default_factory=FcpSection)
    ghz: GhzSection = Field(default_factory=GhzSection)
    squid: SquidSection = Field(default_factory=SquidSection)
    output_dir: str = "out"

    @field_validator("regulators_mev")
    @classmethod
    def check_regulators(cls, value: list[float]) -> list[float]:
        if any(v <= 0 for v in value):
            raise ValueError("regulator frequencies must be positive")
        return value


def load_run_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    data = json.loads(Path(path).read_text())
    data.pop("schema_version", None)
    return RunConfig(**data)
