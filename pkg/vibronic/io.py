import csv
import json
from pathlib import Path
from typing import Iterable, Sequence, TypeVar

import numpy as np
from pydantic import BaseModel

from . import units
from .errors import ArgumentError
from .models import CircuitTable, ForceField, LineSpectrum, ProtocolPlan, ScalingSweep, SpectralLine
from .schemas import SCHEMA_VERSION, MoleculeFile, PlanFile
from .utils import format_float

Schema = TypeVar("Schema", bound=BaseModel)


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_json(path: Path, model: BaseModel) -> Path:
    path.write_text(json.dumps(model.model_dump(mode="json"), sort_keys=True, indent=2) + "\n")
    return path


def read_json(path: Path, schema: type[Schema]) -> Schema:
    return schema.model_validate_json(Path(path).read_text())


def write_csv(
    path: Path, header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()
) -> Path:
    with open(path, "w", newline="") as handle:
        for comment in comments:
            handle.write(f"# {comment}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([_cell(value) for value in row] for row in rows)
    return path


def read_csv(path: Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Header comments as key=value pairs plus the data rows."""
    meta: dict[str, str] = {}
    lines = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
        elif line.strip():
            lines.append(line)
    return meta, list(csv.DictReader(lines))


def read_columns(path: Path, *names: str) -> list[np.ndarray]:
    _, rows = read_csv(path)
    try:
        return [np.array([float(row[name]) for row in rows]) for name in names]
    except (KeyError, ValueError) as exc:
        raise ArgumentError(f"{path} is missing numeric column {exc}") from exc


def write_columns(path: Path, columns: dict[str, np.ndarray], comments: Sequence[str] = ()) -> Path:
    return write_csv(path, list(columns), zip(*columns.values()), comments)


def read_molecule(path: Path) -> tuple[ForceField, ForceField]:
    return read_json(path, MoleculeFile).to_force_fields()


def write_plan(path: Path, plan: ProtocolPlan) -> Path:
    return write_json(path, PlanFile.from_plan(plan))


def read_plan(path: Path) -> ProtocolPlan:
    return read_json(path, PlanFile).to_plan()


def write_circuit_table(path: Path, table: CircuitTable) -> Path:
    rows = [(row.element, row.quantity, row.value, row.unit) for row in table.rows]
    return write_csv(path, ("element", "quantity", "value", "unit"), rows)


def write_sweep(path: Path, sweep: ScalingSweep) -> Path:
    rows = [
        (
            units.from_internal(row.t_sw, units.SECOND),
            row.t_sw_times_omega_max,
            row.mean_norm_diff,
            row.variance,
        )
        for row in sweep.rows
    ]
    return write_csv(
        path, ("t_sw", "t_sw_times_omega_max", "mean_norm_diff", "variance"), rows
    )


def _label(occupations: tuple[tuple[int, ...], ...]) -> str:
    return ";".join(" ".join(str(n) for n in label) for label in occupations)


def write_spectrum(path: Path, spectrum: LineSpectrum) -> Path:
    comments = (
        f"schema_version={SCHEMA_VERSION}",
        "energy_unit=meV",
        f"zero_point={format_float(units.from_internal(spectrum.zero_point, units.MEV))}",
        f"truncation_tail={format_float(spectrum.truncation_tail)}",
    )
    rows = [
        (units.from_internal(line.energy, units.MEV), line.probability, _label(line.occupations))
        for line in spectrum.lines
    ]
    return write_csv(path, ("energy", "probability", "occupations"), rows, comments)


def read_spectrum(path: Path) -> LineSpectrum:
    meta, rows = read_csv(path)
    if meta.get("energy_unit", "meV") != "meV":
        raise ArgumentError(f"unsupported energy unit {meta['energy_unit']!r}")
    try:
        lines = tuple(
            SpectralLine(
                units.to_internal(float(row["energy"]), units.MEV),
                float(row["probability"]),
                tuple(
                    tuple(int(n) for n in label.split())
                    for label in (row.get("occupations") or "").split(";")
                    if label.strip()
                ),
            )
            for row in rows
        )
        tail = float(meta.get("truncation_tail", 1.0 - sum(line.probability for line in lines)))
        zero_point = units.to_internal(float(meta.get("zero_point", 0.0)), units.MEV)
    except (KeyError, ValueError) as exc:
        raise ArgumentError(f"malformed spectrum file {path}: {exc}") from exc
    return LineSpectrum(lines, max(tail, 0.0), zero_point)
