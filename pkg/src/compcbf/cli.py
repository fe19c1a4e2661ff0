"""Command-line front end.

Exit codes: 0 when every property passes, 1 when a property fails, 2 for
configuration errors (bad scenario, initial state outside the set).
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import _kernels
from .certificates import UniformStateSampler, check_validity
from .errors import CompCBFError, ConfigurationError
from .report import CHECK_SCHEMA, RunReport, evaluate_properties, fmt, write_json, write_trajectory
from .scenario import Scenario, load_scenario
from .sim import metrics, run
from .verify import run_selftest

EXIT_OK = 0
EXIT_PROPERTY = 1
EXIT_CONFIG = 2

log = logging.getLogger("compcbf")


def run_scenario(scn: Scenario, out: Path | None = None) -> RunReport:
    """Simulate, judge the properties and write artifacts into ``out``."""
    t0 = time.perf_counter()
    traj = run(scn.config)
    elapsed = time.perf_counter() - t0
    m = metrics(traj, scn.config)
    report = RunReport(scn.name, scn.config.seed, traj.n_steps, m, evaluate_properties(scn, m),
                       elapsed=elapsed)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory(traj, out / "trajectory.csv")
        report.artifacts = {"trajectory": str(out / "trajectory.csv"), "summary": str(out / "summary.json")}
        write_json(out / "summary.json", report.to_dict())
    return report


def check_scenario(scn: Scenario, samples: int | None = None):
    tree = scn.config.certificate.build(scn.config.params)
    if tree is None:
        raise ConfigurationError("certificate kind 'none' has nothing to check", "certificate.kind")
    p = scn.config.params
    sampler = UniformStateSampler(p, scn.check_arena(), seed=scn.config.seed, tree=tree)
    return check_validity(tree, p, scn.config.alpha, sampler, samples or scn.samples)


def _load(ref, seed):
    scn = load_scenario(ref)
    return scn.with_seed(seed) if seed is not None else scn


def _say(args, *lines):
    if not args.quiet:
        for line in lines:
            print(line)


def cmd_run(args) -> int:
    scn = _load(args.scenario, args.seed)
    out = Path(args.out) if args.out else None
    report = run_scenario(scn, out)
    _say(args, *report.lines())
    return report.exit_code


def cmd_check(args) -> int:
    scn = _load(args.scenario, args.seed)
    rep = check_scenario(scn, args.samples)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "check.json", {"schema": CHECK_SCHEMA, "scenario": scn.name,
                                        "seed": scn.config.seed, "arena": list(scn.check_arena()),
                                        **rep.to_dict()})
    lines = [f"scenario {scn.name}: {rep.checked} in-set samples of {rep.drawn} drawn "
             f"({rep.skipped} outside the set)"]
    if rep.checked:
        lines.append(f"  feasible fraction {fmt(rep.feasible_fraction)}, worst margin {fmt(rep.worst_margin)}")
    if rep.stopped_early:
        lines.append("  no in-set state found; the certified set appears to be empty")
    for ce in rep.counterexamples:
        extra = f"margin {fmt(ce['margin'])}" if "margin" in ce else "zero atoms " + ",".join(ce["zero_atoms"])
        lines.append(f"  counterexample sample {ce['sample']}: {ce['reason']}, {extra}")
    lines.append("PASS" if rep.valid else "FAIL")
    _say(args, *lines)
    return EXIT_OK if rep.valid else EXIT_PROPERTY


def cmd_selftest(args) -> int:
    results = run_selftest(quick=args.quick)
    rows = [f"{'suite':<30} {'metric':<22} {'value':>15} {'tolerance':>12}  result"]
    for r in results:
        rows.append(f"{r.name:<30} {r.metric:<22} {fmt(r.value):>15} {fmt(r.tolerance):>12}  "
                    f"{'PASS' if r.passed else 'FAIL'}")
    rows.append(f"kernel backend: {_kernels.BACKEND}")
    ok = all(r.passed for r in results)
    rows.append("PASS" if ok else "FAIL")
    _say(args, *rows)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_json(Path(args.out) / "selftest.json",
                   {"backend": _kernels.BACKEND, "passed": ok,
                    "suites": [r.__dict__ for r in results]})
    return EXIT_OK if ok else EXIT_PROPERTY


def _sweep_one(path, seed, out):
    try:
        scn = _load(path, seed)
        report = run_scenario(scn, out / scn.name if out else None)
        return path, report.exit_code, "PASS" if report.passed else "FAIL"
    except CompCBFError as exc:
        return path, EXIT_CONFIG, f"error: {exc}"


def cmd_sweep(args) -> int:
    folder = Path(args.directory)
    if not folder.is_dir():
        raise ConfigurationError(f"{folder} is not a directory")
    files = sorted(folder.glob("*.yaml")) + sorted(folder.glob("*.yml"))
    if not files:
        raise ConfigurationError(f"no scenario files in {folder}")
    out = Path(args.out) if args.out else None
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(lambda f: _sweep_one(f, args.seed, out), files))
    _say(args, *(f"{p.name:<36} {msg}" for p, _, msg in results))
    return max(code for _, code, _ in results)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="directory for output files")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--quiet", action="store_true", help="print nothing except errors")

    parser = argparse.ArgumentParser(prog="compcbf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="simulate a scenario and judge its properties")
    p.add_argument("scenario", help="scenario file or bundled scenario name")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("check", parents=[common], help="sampled audit of the admissible control set")
    p.add_argument("scenario")
    p.add_argument("--samples", type=int, help="number of in-set samples (default from scenario)")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("selftest", parents=[common], help="gradient, QP and composition self-tests")
    p.add_argument("--quick", action="store_true", help="smaller sample counts")
    p.set_defaults(func=cmd_selftest)
    p = sub.add_parser("sweep", parents=[common], help="run every scenario in a directory")
    p.add_argument("directory")
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if getattr(args, "samples", None) is not None and args.samples < 1:
        print("error: --samples must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CompCBFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
