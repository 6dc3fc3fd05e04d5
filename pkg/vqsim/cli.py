"""Command line interface for vqsim."""

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv
from pydantic import ValidationError

from . import __version__
from .config import ExperimentConfig, ExperimentName, build_context, build_cutoff, load_config_file, parse_config, run_length
from .decoherence import coherence_length, decoherence_factor
from .eom import (
    MIN_FIT_SAMPLES,
    ClassicalState,
    detect_runaway,
    integrate_classical_al,
    integrate_quantum_eom,
    stable_manifold_state,
)
from .errors import ConfigError, NumericalInvariantError, VqsimError
from .experiments import (
    CLASSICAL_COLUMNS,
    KERNEL_COLUMNS,
    QUANTUM_COLUMNS,
    SWITCH_COLUMNS,
    build_system,
    default_initial_state,
    kernel_table,
    nondimensional_rows,
    preset_config,
    run_experiment,
    switch_table,
)
from .kernels import kernel_family
from .logger import Logger
from .output import format_number, write_csv, write_json
from .propagator import CSV_COLUMNS, build_operators, propagate, stable_timestep
from .run_manager import RunManager
from .units import CutoffConfig, PhysicalContext, runaway_time

EXIT_PASS = 0
EXIT_TOLERANCE = 1
EXIT_INVARIANT = 2
EXIT_CONFIG = 3
EXIT_INTERRUPTED = 130

DEFAULT_OUTPUT_ROOT = "runs"

logger = logging.getLogger(__name__)


# ============================================================================
# Argument parsing
# ============================================================================


def _add_physics_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, help="Config file; flags below override its values")
    parser.add_argument("--omega-max", type=float, help="UV cutoff frequency ω_max")
    parser.add_argument("--alpha", type=float, help="Coupling strength (natural units)")
    parser.add_argument("--debug", action="store_true", help="Enable DEBUG logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vqsim", description="Vacuum-coupled charged particle: kernels, master equation and decoherence"
    )
    parser.add_argument("--version", "-V", action="version", version=f"vqsim {__version__}")
    verbs = parser.add_subparsers(dest="verb")

    # kernels dump
    kernels = verbs.add_parser("kernels", help="Vacuum kernel tables")
    kernels_verbs = kernels.add_subparsers(dest="action")
    dump = kernels_verbs.add_parser("dump", help="Write N, D, N₁, N₂ on log-spaced τ (nondimensional)")
    _add_physics_options(dump)
    dump.add_argument("--tmin", type=float, default=0.1, help="Smallest τ in units of ε (default: 0.1)")
    dump.add_argument("--tmax", type=float, default=1e3, help="Largest τ in units of ε (default: 1000)")
    dump.add_argument("--points", type=int, default=100, help="Number of τ samples (default: 100)")
    dump.add_argument("--output", type=str, help="CSV file (stdout when absent)")

    # evolve
    evolve = verbs.add_parser("evolve", help="Propagate the master equation")
    _add_physics_options(evolve)
    evolve.add_argument("--system", choices=["free", "harmonic"], default="harmonic")
    evolve.add_argument("--basis", choices=["oscillator", "grid"], default="oscillator")
    evolve.add_argument("--markov", action="store_true", help="Freeze coefficients at their plateau")
    evolve.add_argument("--decoherence-only", action="store_true", help="Keep only the noise term")
    evolve.add_argument("--steps", type=int, help="Number of steps (default: from t_end)")
    evolve.add_argument("--dt", type=float, help="Time step (default: stability rule)")
    evolve.add_argument("--output", type=str, help="CSV file (stdout when absent)")

    # eom classical|quantum
    eom = verbs.add_parser("eom", help="Equations of motion with radiation reaction")
    eom_verbs = eom.add_subparsers(dest="action")
    classical = eom_verbs.add_parser("classical", help="Literal Abraham-Lorentz integration")
    _add_physics_options(classical)
    classical.add_argument("--x0", type=float, default=0.0)
    classical.add_argument("--v0", type=float, default=0.0)
    classical.add_argument("--a0", type=float, default=1.0, help="Initial acceleration (ignored on the stable manifold)")
    classical.add_argument("--omega0", type=float, default=0.0, help="Harmonic force frequency; 0 for F = 0")
    classical.add_argument("--span", type=float, default=30.0, help="Run length in units of t0 (default: 30)")
    classical.add_argument("--steps-per-t0", type=int, default=40)
    classical.add_argument("--boundary", choices=["initial", "final"], default="initial")
    classical.add_argument("--stable-manifold", action="store_true", help="Choose a0 on the runaway-free manifold")
    classical.add_argument("--record-every", type=int, default=1)
    classical.add_argument("--summary", type=str, help="JSON file for the runaway diagnostics")
    classical.add_argument("--output", type=str, help="CSV file (stdout when absent)")
    quantum = eom_verbs.add_parser("quantum", help="Expectation-value equation of motion")
    _add_physics_options(quantum)
    quantum.add_argument("--system", choices=["free", "harmonic"], default="harmonic")
    quantum.add_argument("--x0", type=float, default=1.0)
    quantum.add_argument("--p0", type=float, default=0.0)
    quantum.add_argument("--a0", type=float, default=0.0, help="Initial acceleration, applied over the first step")
    quantum.add_argument("--t-end", type=float, help="Run length (default: from the config)")
    quantum.add_argument("--dt", type=float, help="Time step (default: a fiftieth of 1/ω0)")
    quantum.add_argument("--record-every", type=int, default=1)
    quantum.add_argument("--summary", type=str, help="JSON file for the runaway diagnostics")
    quantum.add_argument("--output", type=str, help="CSV file (stdout when absent)")

    # decoherence length|factor|switch
    deco = verbs.add_parser("decoherence", help="Coherence length, decoherence factor and switching")
    deco_verbs = deco.add_subparsers(dest="action")
    length = deco_verbs.add_parser("length", help="l_x(t) on log-spaced t")
    _add_physics_options(length)
    length.add_argument("--tmin", type=float, default=0.1, help="Smallest t in units of ε")
    length.add_argument("--tmax", type=float, default=1e4, help="Largest t in units of ε")
    length.add_argument("--points", type=int, default=200)
    length.add_argument("--output", type=str, help="CSV file (stdout when absent)")
    factor = deco_verbs.add_parser("factor", help="exp(-Δx² N₂(t)/ħ) on log-spaced t")
    _add_physics_options(factor)
    factor.add_argument("--separation", type=float, help="Δx (default: from the config)")
    factor.add_argument("--tmin", type=float, default=0.1, help="Smallest t in units of ε")
    factor.add_argument("--tmax", type=float, default=1e4, help="Largest t in units of ε")
    factor.add_argument("--points", type=int, default=200)
    factor.add_argument("--output", type=str, help="CSV file (stdout when absent)")
    switch = deco_verbs.add_parser("switch", help="Switched versus unswitched N₂ per ramp duration")
    _add_physics_options(switch)
    switch.add_argument("--ramp-kind", choices=["constant", "linear_ramp", "raised_cosine_ramp"])
    switch.add_argument("--ramp-durations", type=float, nargs="+", help="Ramp durations in units of ε")
    switch.add_argument("--total-duration-factor", type=float)
    switch.add_argument("--f-start", type=float)
    switch.add_argument("--f-end", type=float)
    switch.add_argument("--output", type=str, help="CSV file (stdout when absent)")

    # run
    run = verbs.add_parser("run", help="Run a named experiment from a config file, or all presets")
    run.add_argument("config_file", nargs="?", help="Experiment config file")
    run.add_argument("--all", action="store_true", help="Run the built-in presets of every experiment")
    run.add_argument("--jobs", type=int, default=1, help="Worker processes for --all (default: 1)")
    run.add_argument("--output-dir", type=str, help="Output root (default: VQS_OUTPUT_DIR or ./runs)")
    run.add_argument("--debug", action="store_true")

    # runs list|verify
    runs = verbs.add_parser("runs", help="Inspect run manifests")
    runs_verbs = runs.add_subparsers(dest="action")
    listing = runs_verbs.add_parser("list", help="Every run under the output root, newest first")
    listing.add_argument("--output-dir", type=str, help="Output root (default: VQS_OUTPUT_DIR or ./runs)")
    check = runs_verbs.add_parser("verify", help="Recompute the checksums recorded in a run manifest")
    check.add_argument("experiment", choices=[name.value for name in ExperimentName])
    check.add_argument("--output-dir", type=str, help="Output root (default: VQS_OUTPUT_DIR or ./runs)")
    return parser


# ============================================================================
# Helpers
# ============================================================================


def _override(config: ExperimentConfig, section: str, **values: Any) -> ExperimentConfig:
    """Re-validate ``config`` with the non-None ``values`` set in ``section``."""
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return config
    data = config.model_dump()
    data[section].update(values)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        raise ConfigError(error["msg"], key=".".join(str(part) for part in error["loc"])) from exc


def _load(args: argparse.Namespace, experiment: ExperimentName) -> ExperimentConfig:
    if getattr(args, "config", None):
        config = load_config_file(args.config)
    else:
        config = parse_config(f'experiment = "{experiment.value}"\n')
    return _override(config, "physics", omega_max=args.omega_max, alpha=args.alpha)


def _physics(config: ExperimentConfig) -> Tuple[PhysicalContext, CutoffConfig]:
    ctx = build_context(config)
    return ctx, build_cutoff(config, ctx)


def _emit(header: Sequence[str], rows: List[Sequence[float]], output: Optional[str]) -> None:
    if output:
        path = write_csv(output, header, rows)
        logger.info(f"Wrote {len(rows)} rows to {path}")
        return
    sys.stdout.write(",".join(header) + "\n")
    for row in rows:
        sys.stdout.write(",".join(format_number(v) for v in row) + "\n")


def _log_spaced(tmin: float, tmax: float, points: int, eps: float) -> List[float]:
    if not (0.0 < tmin < tmax) or points < 2:
        raise ConfigError(f"need 0 < tmin < tmax and at least two points (tmin={tmin!r}, tmax={tmax!r})")
    step = (math.log10(tmax) - math.log10(tmin)) / (points - 1)
    return [eps * 10.0 ** (math.log10(tmin) + i * step) for i in range(points)]


def output_root(cli_value: Optional[str] = None, config: Optional[ExperimentConfig] = None) -> str:
    """--output-dir, then VQS_OUTPUT_DIR, then the config's output_dir, then ./runs."""
    if cli_value:
        return cli_value
    env_value = os.getenv("VQS_OUTPUT_DIR")
    if env_value:
        return env_value
    if config is not None and config.output_dir:
        return config.output_dir
    return DEFAULT_OUTPUT_ROOT


# ============================================================================
# Verbs
# ============================================================================


def kernels_dump(args: argparse.Namespace) -> int:
    config = _load(args, ExperimentName.KERNELS_DUMP)
    ctx, cut = _physics(config)
    rows = kernel_table(ctx, cut, args.tmin * cut.epsilon, args.tmax * cut.epsilon, args.points)
    _emit(KERNEL_COLUMNS, nondimensional_rows(rows, ctx, cut), args.output)
    return EXIT_PASS


def evolve(args: argparse.Namespace) -> int:
    config = _load(args, ExperimentName.HARMONIC_DAMPING)
    config = _override(
        config, "numerics", dt=args.dt, markov=args.markov or None, decoherence_only=args.decoherence_only or None
    )
    ctx, cut = _physics(config)
    kernels = kernel_family(ctx, cut)
    numerics = config.numerics
    spec = build_system(config, ctx, system=args.system, basis=args.basis)
    ops = build_operators(spec, kernels)
    dt = numerics.dt or stable_timestep(spec, ops, kernels, markov=numerics.markov)
    n_steps = args.steps if args.steps is not None else math.ceil(run_length(config) / dt)
    if n_steps < 1:
        raise ConfigError(f"need at least one step, got {n_steps}", key="steps")
    trajectory = propagate(
        default_initial_state(spec, ctx),
        spec,
        dt,
        n_steps,
        kernels,
        markov=numerics.markov,
        decoherence_only=numerics.decoherence_only,
        record_every=numerics.record_every,
        operators=ops,
    )
    _emit(CSV_COLUMNS, trajectory.rows(), args.output)
    return EXIT_PASS


def _runaway_record(result, expected_rate: Optional[float]) -> Dict[str, Any]:
    rate = detect_runaway(result) if len(result.times) >= MIN_FIT_SAMPLES else None
    record: Dict[str, Any] = {"kind": result.kind, "truncated": result.runaway, "fitted_rate": rate}
    if expected_rate is not None:
        record["expected_rate"] = expected_rate
        record["relative_error"] = None if rate is None else abs(rate - expected_rate) / expected_rate
    return record


def eom_classical(args: argparse.Namespace) -> int:
    config = _load(args, ExperimentName.CLASSICAL_RUNAWAY)
    ctx, cut = _physics(config)
    t0 = runaway_time(ctx, cut)
    stiffness = ctx.mass_bare * args.omega0**2
    if args.stable_manifold:
        state = stable_manifold_state(args.x0, args.v0, stiffness, ctx, cut)
    else:
        state = ClassicalState(args.x0, args.v0, args.a0)
    result = integrate_classical_al(
        lambda x, t: -stiffness * x,
        state,
        args.span * t0,
        t0 / args.steps_per_t0,
        ctx,
        cut,
        boundary=args.boundary,
        record_every=args.record_every,
    )
    record = _runaway_record(result, 1.0 / t0)
    logger.info(f"classical AL: fitted rate {record['fitted_rate']}, 1/t0 = {1.0 / t0:.10g}")
    if args.summary:
        write_json(args.summary, record)
    _emit(CLASSICAL_COLUMNS, result.rows(CLASSICAL_COLUMNS), args.output)
    return EXIT_PASS


def eom_quantum(args: argparse.Namespace) -> int:
    config = _load(args, ExperimentName.HARMONIC_DAMPING)
    ctx, cut = _physics(config)
    spec = build_system(config, ctx, system=args.system)
    t_end = args.t_end or run_length(config)
    dt = args.dt or 0.02 / config.physics.omega0
    result = integrate_quantum_eom(
        spec, args.x0, args.p0, t_end, dt, ctx, cut, record_every=args.record_every, initial_acceleration=args.a0
    )
    record = _runaway_record(result, None)
    logger.info(f"quantum EOM: runaway rate {record['fitted_rate']}")
    if args.summary:
        write_json(args.summary, record)
    _emit(QUANTUM_COLUMNS, result.rows(QUANTUM_COLUMNS), args.output)
    return EXIT_PASS


def decoherence_length(args: argparse.Namespace) -> int:
    config = _load(args, ExperimentName.COHERENCE_LENGTH)
    ctx, cut = _physics(config)
    rows = []
    for t in _log_spaced(args.tmin, args.tmax, args.points, cut.epsilon):
        length = coherence_length(t, ctx, cut)
        rows.append((t, length, length * cut.k_max))
    _emit(("t", "l_x", "l_x_k_max"), rows, args.output)
    return EXIT_PASS


def decoherence_factor_verb(args: argparse.Namespace) -> int:
    config = _override(_load(args, ExperimentName.COHERENCE_LENGTH), "decoherence", separation=args.separation)
    ctx, cut = _physics(config)
    separation = config.decoherence.separation
    rows = [
        (t, decoherence_factor(separation, t, ctx, cut))
        for t in _log_spaced(args.tmin, args.tmax, args.points, cut.epsilon)
    ]
    _emit(("t", "factor"), rows, args.output)
    return EXIT_PASS


def decoherence_switch(args: argparse.Namespace) -> int:
    config = _override(
        _load(args, ExperimentName.FALSE_DECOHERENCE),
        "decoherence",
        ramp_kind=args.ramp_kind,
        ramp_durations=args.ramp_durations,
        total_duration_factor=args.total_duration_factor,
        f_start=args.f_start,
        f_end=args.f_end,
    )
    ctx, cut = _physics(config)
    _, rows = switch_table(config, ctx, cut)
    _emit(SWITCH_COLUMNS, rows, args.output)
    return EXIT_PASS


def _print_summary(summary) -> None:
    print(f"{summary.experiment}: {summary.status}")
    for check in summary.checks:
        mark = "ok  " if check.passed else "MISS"
        print(f"  {mark} {check.name}: {check.value:.3e} (limit {check.limit:.1e}) {check.detail}")


def run_config(args: argparse.Namespace) -> int:
    config = load_config_file(args.config_file)
    if args.debug:
        config = config.model_copy(update={"debug": True})
    text = Path(args.config_file).read_text(encoding="utf-8")
    summary = run_experiment(config, output_root(args.output_dir, config), config_text=text)
    _print_summary(summary)
    return EXIT_PASS if summary.passed else EXIT_TOLERANCE


def run_preset(name: str, root: str, debug: bool = False) -> Tuple[str, int]:
    """Run one built-in preset; returns (experiment, exit code). Safe to call in a worker process."""
    try:
        config, text = preset_config(name)
        if debug:
            config = config.model_copy(update={"debug": True})
        summary = run_experiment(config, root, config_text=text)
        _print_summary(summary)
        return name, EXIT_PASS if summary.passed else EXIT_TOLERANCE
    except NumericalInvariantError as e:
        logger.error(f"{name}: {e}")
        return name, EXIT_INVARIANT
    except VqsimError as e:
        logger.error(f"{name}: {e}")
        return name, EXIT_CONFIG


def run_all(args: argparse.Namespace) -> int:
    if args.jobs < 1:
        raise ConfigError(f"--jobs must be at least 1, got {args.jobs}", key="jobs")
    root = output_root(args.output_dir)
    names = [name.value for name in ExperimentName]
    if args.jobs == 1:
        results = [run_preset(name, root, args.debug) for name in names]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_preset, names, [root] * len(names), [args.debug] * len(names)))
    for name, code in results:
        logger.info(f"{name}: exit {code}")
    return max(code for _, code in results)


RUN_STATUS_ICONS = {
    "completed": "✅",
    "in_progress": "🔄",
    "failed": "❌",
    "interrupted": "⏸️",
}


def runs_list(args: argparse.Namespace) -> int:
    """List the runs under the output root"""
    manifests = RunManager(output_root(args.output_dir)).list_runs()
    if not manifests:
        print("No runs found.")
        return EXIT_PASS

    print(f"Found {len(manifests)} runs:")
    print("-" * 80)
    for manifest in manifests:
        print(f"{RUN_STATUS_ICONS.get(manifest.status, '❓')} {manifest.experiment} ({manifest.run_id})")
        print(f"   Created: {manifest.created_at}")
        print(f"   Status: {manifest.status}")
        print(f"   Version: {manifest.version}")
        print(f"   Files: {len(manifest.files)}")
        print()
    return EXIT_PASS


def runs_verify(args: argparse.Namespace) -> int:
    """Check every recorded file of one run against its sha256; exit 1 on any mismatch."""
    manager = RunManager(output_root(args.output_dir))
    try:
        manifest = manager.load_manifest(args.experiment)
    except FileNotFoundError as e:
        raise ConfigError(str(e), key="experiment") from e
    results = manager.verify(manifest)

    print(f"Run: {manifest.experiment} ({manifest.run_id})")
    print("-" * 50)
    print(f"Status: {manifest.status}")
    for name, matches in sorted(results.items()):
        print(f"  {'ok' if matches else 'CHANGED'}  {name}")
    if manifest.status != "completed" or not all(results.values()):
        return EXIT_TOLERANCE
    return EXIT_PASS


def _dispatch(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    handlers = {
        ("kernels", "dump"): kernels_dump,
        ("evolve", None): evolve,
        ("eom", "classical"): eom_classical,
        ("eom", "quantum"): eom_quantum,
        ("decoherence", "length"): decoherence_length,
        ("decoherence", "factor"): decoherence_factor_verb,
        ("decoherence", "switch"): decoherence_switch,
        ("runs", "list"): runs_list,
        ("runs", "verify"): runs_verify,
    }
    if args.verb == "run":
        if args.all:
            return run_all(args)
        if not args.config_file:
            raise ConfigError("run needs a config file or --all")
        return run_config(args)
    handler = handlers.get((args.verb, getattr(args, "action", None)))
    if handler is None:
        parser.print_help()
        return EXIT_CONFIG
    return handler(args)


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point; returns the process exit code."""
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verb != "run":
        # run-directory logging is set up per experiment by run_experiment
        Logger(debug=getattr(args, "debug", False))
    try:
        return _dispatch(args, parser)
    except KeyboardInterrupt:
        print("\nInterrupted.", file=sys.stderr)
        return EXIT_INTERRUPTED
    except NumericalInvariantError as e:
        print(f"Numerical invariant breached: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except VqsimError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
