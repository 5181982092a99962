import argparse
import math
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from loguru import logger

from . import units
from .anharmonic import design_anharmonicity, potential_curve, taylor_coefficients
from .config import DATA_DIR, RunConfig, get_settings, load_run_config, setup_logging
from .errors import ArgumentError
from .harmonic import ground_state, remove_null_space
from .io import (
    read_columns,
    read_molecule,
    read_plan,
    read_spectrum,
    write_circuit_table,
    write_columns,
    write_json,
    write_plan,
    write_spectrum,
    write_sweep,
)
from .mapping import (
    CouplingCap,
    FrequencyCap,
    KappaStrategy,
    TemperatureMatch,
    circuit_table,
    default_capacitance,
    plan_protocol1,
    plan_protocol2,
    rescale,
)
from .models import ForceField, GhzSetup, HardwareConstraints, Propagator, QuenchSchedule
from .quench import diabaticity_report, error_scaling_sweep
from .readout import ghz_forward, ghz_reconstruct
from .schemas import (
    SCHEMA_VERSION,
    DesignFile,
    DiabaticityRecord,
    MomentReportFile,
    QuenchSummary,
)
from .spectrum import franck_condon_profile, moment_check
from .utils import EXIT_NUMERICAL, EXIT_OK, handle_error

SYNTHETIC_MOLECULE = DATA_DIR / "synthetic_molecule.json"
DISPLACED_DIMER = DATA_DIR / "displaced_dimer.json"


def hardware_from_config(config: RunConfig) -> HardwareConstraints:
    section = config.hardware
    return HardwareConstraints(
        omega_min=units.to_internal(section.omega_min_ghz, units.GHZ),
        omega_max=units.to_internal(section.omega_max_ghz, units.GHZ),
        b_max=(
            None
            if section.b_max_inv_nh is None
            else units.to_internal(section.b_max_inv_nh, units.INVERSE_NANOHENRY)
        ),
        t_cryo=units.to_internal(section.t_cryo_mk, units.MILLIKELVIN),
    )


def strategy_from_config(config: RunConfig) -> KappaStrategy:
    section = config.kappa
    if section.strategy == "coupling-cap":
        return CouplingCap()
    if section.strategy == "temperature-match":
        return TemperatureMatch(units.to_internal(section.t_molecule_k, units.KELVIN))
    return FrequencyCap()


def ghz_setup_from_config(config: RunConfig, tau_grid: np.ndarray | None = None) -> GhzSetup:
    section = config.ghz
    if tau_grid is None:
        tau_grid = np.linspace(
            0.0, units.to_internal(section.tau_max_fs, units.FEMTOSECOND), section.n_tau
        )
    energy_grid = units.to_internal(
        np.linspace(section.energy_min_mev, section.energy_max_mev, section.n_energy),
        units.MEV,
    )
    return GhzSetup(section.chi, tau_grid, energy_grid, section.window)


def load_fields(path: Path, config: RunConfig) -> tuple[ForceField, ForceField]:
    regulators = [units.to_internal(value, units.MEV) for value in config.regulators_mev]
    return tuple(remove_null_space(ff, regulators) for ff in read_molecule(path))


def cmd_compile(args: argparse.Namespace, config: RunConfig, out: Path, threads: int) -> int:
    ff0, fff = load_fields(args.molecule, config)
    capacitance = default_capacitance(
        ff0.masses, config.capacitance.pf_per_amu, config.capacitance.reference_amu
    )
    protocol = args.protocol or config.protocol
    planner = plan_protocol2 if protocol == 2 else plan_protocol1
    plan = planner(
        ff0,
        fff,
        hardware_from_config(config),
        capacitance,
        strategy=strategy_from_config(config),
        drive_convention=config.drive_convention,
    )
    table = circuit_table(plan.start_model(), plan.end_model())
    write_circuit_table(out / "circuit_table.csv", table)
    write_plan(out / "plan.json", plan)

    low, high = table.ranges()["frequency_start"]
    logger.info(
        f"compiled {args.molecule} with protocol {protocol}: kappa={plan.kappa:.6g}, "
        f"start frequencies {low:.4f}-{high:.4f} GHz"
    )
    return EXIT_OK


def cmd_quench(args: argparse.Namespace, config: RunConfig, out: Path, threads: int) -> int:
    section = config.quench
    plan = read_plan(args.plan)
    omega_max = plan.omega_max
    grid = args.grid or section.t_sw_omega_grid
    t_sw_grid = [value / omega_max for value in grid]

    sweep = error_scaling_sweep(
        plan,
        None,
        t_sw_grid,
        profile=section.profile,
        integrator=section.integrator,
        tolerance=section.tolerance,
        threads=threads,
    )

    def report(point: tuple[float, Propagator]) -> DiabaticityRecord:
        t_sw, propagator = point
        schedule = QuenchSchedule(
            plan,
            t_sw,
            profile=section.profile,
            integrator=section.integrator,
            tolerance=section.tolerance,
        )
        result = diabaticity_report(schedule, section.epsilon, propagator=propagator)
        return DiabaticityRecord.model_validate(result).model_copy(
            update={
                "t_sw": units.from_internal(result.t_sw, units.SECOND),
                "t_bound": units.from_internal(result.t_bound, units.SECOND),
                "omega_max": units.from_internal(result.omega_max, units.GHZ),
            }
        )

    records = [report(point) for point in zip(t_sw_grid, sweep.propagators)]
    write_sweep(out / "quench_sweep.csv", sweep)
    write_json(
        out / "quench_summary.json",
        QuenchSummary(
            slope=sweep.slope,
            omega_max_ghz=units.from_internal(omega_max, units.GHZ),
            epsilon=section.epsilon,
            t_bound=records[0].t_bound,
            profile=section.profile,
            integrator=section.integrator,
            reports=records,
        ),
    )
    logger.info(f"quench sweep slope {sweep.slope:.4f} over {len(grid)} switch times")
    return EXIT_OK


def cmd_fcp(args: argparse.Namespace, config: RunConfig, out: Path, threads: int) -> int:
    ff0, fff = load_fields(args.molecule, config)
    regulators = [units.to_internal(value, units.MEV) for value in config.regulators_mev]
    spectrum = franck_condon_profile(
        ff0, fff, config.fcp.n_max, config.fcp.quadrature_order, regulators
    )
    identity = np.eye(ff0.dimension)
    report = moment_check(
        spectrum, ground_state(rescale(ff0, identity, 1.0)), rescale(fff, identity, 1.0)
    )

    write_spectrum(out / "spectrum.csv", spectrum)
    to_mev = lambda value: units.from_internal(value, units.MEV)  # noqa: E731
    write_json(
        out / "moment_report.json",
        MomentReportFile(
            spectral_mean=to_mev(report.spectral_mean),
            moment_mean=to_mev(report.moment_mean),
            absolute=to_mev(report.absolute),
            relative=report.relative,
            tolerance=to_mev(report.tolerance),
            passed=report.passed,
        ),
    )
    if not report.passed:
        logger.error(
            f"moment check failed: discrepancy {to_mev(report.absolute):.3e} meV "
            f"above {to_mev(report.tolerance):.3e} meV"
        )
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_squid_design(
    args: argparse.Namespace, config: RunConfig, out: Path, threads: int
) -> int:
    section = config.squid
    targets = (args.c3, args.c4)
    circuit = design_anharmonicity(*targets, phi0=section.phi0, l=section.inductance)
    expansion = taylor_coefficients(circuit)
    write_json(out / "design.json", DesignFile.from_design(circuit, expansion, targets))

    half_width = section.curve_half_width or math.pi * section.phi0
    phi = np.linspace(-half_width, half_width, section.n_curve)
    write_columns(out / "curve.csv", {"phi": phi, "V": potential_curve(circuit, phi)})
    return EXIT_OK


def _write_p1(path: Path, setup: GhzSetup, p1: np.ndarray) -> Path:
    return write_columns(
        path,
        {"tau": units.from_internal(setup.tau_grid, units.FEMTOSECOND), "p1": p1},
        (f"schema_version={SCHEMA_VERSION}", "time_unit=fs"),
    )


def cmd_forward(args: argparse.Namespace, config: RunConfig, out: Path, threads: int) -> int:
    setup = ghz_setup_from_config(config)
    p1 = ghz_forward(read_spectrum(args.spectrum), setup)
    _write_p1(out / "p1.csv", setup, p1)
    return EXIT_OK


def cmd_reconstruct(
    args: argparse.Namespace, config: RunConfig, out: Path, threads: int
) -> int:
    if args.p1 is not None:
        tau_fs, p1 = read_columns(args.p1, "tau", "p1")
        setup = ghz_setup_from_config(config, units.to_internal(tau_fs, units.FEMTOSECOND))
    else:
        setup = ghz_setup_from_config(config)
        p1 = ghz_forward(read_spectrum(args.spectrum), setup)
        _write_p1(out / "p1.csv", setup, p1)

    reconstruction = ghz_reconstruct(p1, setup)
    write_columns(
        out / "reconstruction.csv",
        {
            "energy": units.from_internal(reconstruction.energy_grid, units.MEV),
            "density": reconstruction.density * units.MEV,
        },
        (f"schema_version={SCHEMA_VERSION}", "energy_unit=meV", "density_unit=1/meV"),
    )
    return EXIT_OK


Command = Callable[[argparse.Namespace, RunConfig, Path, int], int]

COMMANDS: dict[str, Command] = {
    "compile": cmd_compile,
    "quench": cmd_quench,
    "fcp": cmd_fcp,
    "squid-design": cmd_squid_design,
    "forward": cmd_forward,
    "reconstruct": cmd_reconstruct,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vibronic",
        description="Compile molecular force fields into superconducting emulator runs.",
    )
    parser.add_argument("--config", type=Path, help="run configuration JSON")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--seed", type=int, help="reserved; all commands are deterministic")
    parser.add_argument("--threads", type=int, help="worker threads for sweeps")
    commands = parser.add_subparsers(dest="command", required=True)

    compile_ = commands.add_parser("compile", help="circuit table and protocol plan")
    compile_.add_argument("molecule", type=Path, nargs="?", default=SYNTHETIC_MOLECULE)
    compile_.add_argument("--protocol", type=int, choices=(1, 2))

    quench = commands.add_parser("quench", help="diabaticity sweep of a plan")
    quench.add_argument("plan", type=Path)
    quench.add_argument(
        "--grid", type=float, nargs="+", help="switch times in units of 1/Omega_max"
    )

    fcp = commands.add_parser("fcp", help="Franck-Condon profile and moment check")
    fcp.add_argument("molecule", type=Path, nargs="?", default=DISPLACED_DIMER)

    design = commands.add_parser("squid-design", help="SQUID anharmonicity design")
    design.add_argument("--c3", type=float, default=0.0, help="target c3/c2")
    design.add_argument("--c4", type=float, default=0.0, help="target c4/c2")

    forward = commands.add_parser("forward", help="GHZ excitation probabilities")
    forward.add_argument("spectrum", type=Path)

    reconstruct = commands.add_parser("reconstruct", help="spectrum from GHZ data")
    source = reconstruct.add_mutually_exclusive_group(required=True)
    source.add_argument("--p1", type=Path)
    source.add_argument("--spectrum", type=Path)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(settings)
    try:
        config = load_run_config(args.config)
        out = Path(args.out or config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        threads = settings.THREADS if args.threads is None else args.threads
        if threads < 1:
            raise ArgumentError("--threads must be positive")
        if args.seed is not None:
            logger.info(f"seed {args.seed} accepted; no command draws random numbers")
        return COMMANDS[args.command](args, config, out, threads)
    except Exception as exc:
        return handle_error(exc)
