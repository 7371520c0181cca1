"""``aris-empc`` command line: run, compare and validate.

Exit codes: 0 success, 1 input error (missing or malformed scenario),
2 infeasible mission or model-domain failure, 3 a validation check failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import report
from .empc import run_receding_horizon
from .errors import InfeasibleError, InfeasibleScenario, ModelDomainError, ScenarioError, StallError
from .flight import baseline_constant_acceleration, evaluate_trajectory
from .scenario import ScenarioConfig, builtin_scenario_path, load_config_file
from .validation import run_checks

__all__ = ["main", "build_parser", "resolve_scenario"]

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_VALIDATE = 0, 1, 2, 3

log = logging.getLogger("aris_empc")


def resolve_scenario(name: str) -> Path:
    """A file path as given, else a shipped scenario of that name."""
    path = Path(name)
    if path.is_file():
        return path
    builtin = builtin_scenario_path(name)
    if builtin is not None:
        return builtin
    raise ScenarioError(f"scenario {name!r} not found (neither a file nor a shipped scenario)")


def _load(args) -> tuple[ScenarioConfig, str]:
    path = resolve_scenario(args.scenario)
    config = load_config_file(path)
    if args.seed is not None:
        config = config.replace(rng_seed=args.seed)
    return config, str(args.scenario)


def _run_mode(config: ScenarioConfig, mode: str, warm_start: str = "zero"):
    users = config.users()
    if mode == "baseline":
        controls = baseline_constant_acceleration(config)
        return evaluate_trajectory(controls, users, config), None
    plan = baseline_constant_acceleration(config) if warm_start == "baseline" else None
    return run_receding_horizon(config, users, initial_plan=plan)


def _write_run(out: Path, traj, logs, mode: str, source: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    report.write_trajectory(out / "trajectory.csv", traj)
    if logs is not None:
        report.write_iterations(out / "iterations.csv", logs)
    report.write_json(out / "summary.json", report.summary(traj, mode, source, logs))


def _infeasible(exc: Exception) -> int:
    print(f"error: infeasible: {exc}", file=sys.stderr)
    step = getattr(exc, "step", None)
    if step is not None:
        print(f"  at closed-loop step {step}", file=sys.stderr)
    for key, value in getattr(exc, "residuals", {}).items():
        print(f"  residual {key}: {value}", file=sys.stderr)
    return EXIT_INFEASIBLE


def _guarded(fn, args) -> int:
    try:
        return fn(args)
    except InfeasibleScenario as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InfeasibleError, StallError, ModelDomainError) as exc:
        return _infeasible(exc)


def cmd_run(args) -> int:
    config, source = _load(args)
    t0 = time.perf_counter()
    traj, logs = _run_mode(config, args.mode, args.warm_start)
    wall = time.perf_counter() - t0
    _write_run(Path(args.out), traj, logs, args.mode, source)
    if not args.quiet:
        print(f"{args.mode}: EE {traj.ee:.6g} bits/J, bits {traj.total_bits:.6g}, "
              f"energy {traj.total_energy:.6g} J, terminal error {traj.terminal_error:.3g} m")
        print(f"wall_time {wall:.3f} s", file=sys.stderr)
    return EXIT_OK


def cmd_compare(args) -> int:
    config, source = _load(args)
    out = Path(args.out)
    t0 = time.perf_counter()
    base, _ = _run_mode(config, "baseline")
    empc, logs = _run_mode(config, "empc", args.warm_start)
    wall = time.perf_counter() - t0
    _write_run(out / "baseline", base, None, "baseline", source)
    _write_run(out / "empc", empc, logs, "empc", source)
    doc = report.comparison(empc, base)
    report.write_json(out / "comparison.json", doc)
    if not args.quiet:
        dom = doc["dominant_cluster"]
        print(f"EE empc {empc.ee:.6g} vs baseline {base.ee:.6g} bits/J (ratio {doc['ee_ratio']:.6g})")
        print(f"closest approach to dominant cluster {dom}: empc "
              f"{doc['min_distance_to_centroid']['empc'][dom]:.1f} m, baseline "
              f"{doc['min_distance_to_centroid']['baseline'][dom]:.1f} m")
        print(f"wall_time {wall:.3f} s", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    results = run_checks(seed=args.seed or 0, paper_literal_b=args.paper_literal_b)
    for r in results:
        if not args.quiet or not r.passed:
            print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aris-empc",
                                     description="Energy-efficient UAV-RIS trajectory design")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_out=True):
        p.add_argument("--scenario", required=True,
                       help="scenario TOML file, or the name of a shipped scenario (e.g. paper_fig3)")
        if need_out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the scenario's rng_seed")
        p.add_argument("--warm-start", choices=("zero", "baseline"), default="zero",
                       help="initial plan for the first horizon solves (default: zero acceleration)")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p = sub.add_parser("run", help="fly one mission and write trajectory, iterations and summary")
    common(p)
    p.add_argument("--mode", choices=("empc", "baseline"), default="empc")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="fly EMPC and the constant-acceleration baseline side by side")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="run the built-in oracle checks")
    p.add_argument("--seed", type=int, default=0, help="channel random-phase seed")
    p.add_argument("--paper-literal-b", action="store_true",
                   help="also report the surrogate gap of the textbook target vectors")
    p.add_argument("--quiet", action="store_true", help="print failures only")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return _guarded(args.func, args)


if __name__ == "__main__":
    sys.exit(main())
