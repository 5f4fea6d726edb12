"""Command-line harness: run scenarios, list checks, convergence ladders.

Exit codes: 0 all checks passed, 1 a check failed, 2 the configuration could
not be parsed, 3 the scenario failed validation. The output root defaults to
``./smoothpaths-output`` and can be moved with ``SMOOTHPATHS_OUTPUT_ROOT``.
"""

from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .checks import CHECKS, Context, CheckResult, catalog
from .config import ConfigError, ValidationError, load_config, validate
from .io import write_json, write_table_csv

logger = logging.getLogger(__name__)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_VALIDATION = 0, 1, 2, 3
REPORT_SCHEMA = "smoothpaths-report/1"
OUTPUT_ENV = "SMOOTHPATHS_OUTPUT_ROOT"
FLOOR = 1e-12


def output_root(override=None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get(OUTPUT_ENV, "smoothpaths-output"))


def bundled_scenarios() -> dict:
    here = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(here.glob("*.toml"))}


def resolve_config(name) -> Path:
    """A path, or the stem of a bundled scenario."""
    path = Path(name)
    if path.exists():
        return path
    bundled = bundled_scenarios()
    if str(name) in bundled:
        return bundled[str(name)]
    return path


def versions() -> dict:
    return {"smoothpaths": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _run_check(ctx: Context, name: str) -> CheckResult:
    t0 = time.perf_counter()
    try:
        result = CHECKS[name].func(ctx)
    except Exception as exc:  # a crashing check is a failed check, not a crashed run
        logger.exception("check %s raised", name)
        result = CheckResult(name, "fail", message=f"{type(exc).__name__}: {exc}")
    result.seconds = time.perf_counter() - t0
    return result


def format_text(report: dict) -> str:
    lines = [f"scenario {report['scenario']}  ({report.get('source', '')})",
             f"status {report['status']}  exit {report['exit_code']}  "
             f"wall {report['wall_time']:.2f} s"]
    if report.get("error"):
        lines.append(f"error: {report['error']}")
    checks = report.get("checks", [])
    if checks:
        width = max(len(c["name"]) for c in checks)
        for c in checks:
            measured = ", ".join(f"{k}={_fmt(v)}" for k, v in c["measured"].items()
                                 if not isinstance(v, (list, dict)))
            lines.append(f"  {c['name']:<{width}}  {c['status']:<11}  {c['seconds']:7.2f} s  "
                         f"{measured}")
            if c.get("message"):
                lines.append(f"  {'':<{width}}  note: {c['message']}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def run_scenario(path, root=None, timestamp: bool = True) -> tuple[dict, int]:
    """Run every check of one scenario and write ``report.json`` / ``report.txt``."""
    t0 = time.perf_counter()
    path = resolve_config(path)
    try:
        config = load_config(path)
    except ConfigError as exc:
        return {"scenario": str(path), "status": "config-error", "error": str(exc),
                "exit_code": EXIT_CONFIG, "wall_time": time.perf_counter() - t0}, EXIT_CONFIG
    out_dir = output_root(root) / config.output_dir
    report = {"schema": REPORT_SCHEMA, "scenario": config.id, "source": str(path),
              "config": config.echo(), "versions": versions(), "checks": []}
    try:
        ham, state = validate(config)
    except ValidationError as exc:
        report.update(status="validation-error", error=str(exc), exit_code=EXIT_VALIDATION,
                      wall_time=time.perf_counter() - t0)
        _write_reports(out_dir, report)
        return report, EXIT_VALIDATION
    ctx = Context(config, ham, state, out_dir, timestamp)
    results = [_run_check(ctx, name) for name in config.checks]
    failed = any(r.status == "fail" for r in results)
    code = EXIT_FAIL if failed else EXIT_PASS
    report.update(checks=[r.to_dict() for r in results], status="fail" if failed else "pass",
                  exit_code=code, wall_time=time.perf_counter() - t0)
    _write_reports(out_dir, report)
    return report, code


def _write_reports(out_dir: Path, report: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "report.json", report)
    (out_dir / "report.txt").write_text(format_text(report))


def _run_one(args):
    path, root, timestamp = args
    report, code = run_scenario(path, root, timestamp)
    return format_text(report), code


def observed_orders(rows, floor: float = FLOOR) -> dict:
    """Per-level and fitted log-log slopes of ``metric`` against ``dt``."""
    h = np.array([r["dt"] for r in rows], dtype=float)
    e = np.array([r["metric"] for r in rows], dtype=float)
    for j, r in enumerate(rows):
        r["slope"] = ("" if j == 0 or e[j] <= floor or e[j - 1] <= floor
                      else float(np.log(e[j - 1] / e[j]) / np.log(h[j - 1] / h[j])))
    if np.all(e <= floor):
        return {"classification": "exact", "order": None}
    if np.any(e <= 0) or np.any(np.diff(e) > 0):
        return {"classification": "inconclusive", "order": None}
    order = float(np.polyfit(np.log(h), np.log(e), 1)[0])
    return {"classification": "converging", "order": order}


def convergence_study(path, check: str, levels: int, root=None,
                      timestamp: bool = True) -> tuple[dict, int]:
    path = resolve_config(path)
    try:
        config = load_config(path)
    except ConfigError as exc:
        return {"error": str(exc)}, EXIT_CONFIG
    spec = CHECKS.get(check)
    if spec is None or spec.ladder is None:
        return {"error": f"check {check!r} does not support refinement"}, EXIT_CONFIG
    try:
        ham, state = validate(config)
    except ValidationError as exc:
        return {"error": str(exc)}, EXIT_VALIDATION
    out_dir = output_root(root) / config.output_dir
    ctx = Context(config, ham, state, out_dir, timestamp)
    rows, param = spec.ladder(ctx, levels)
    if not rows:
        return {"error": f"check {check!r} has no reference for this scenario"}, EXIT_CONFIG
    summary = observed_orders(rows)
    if summary["classification"] == "inconclusive" and ctx.is_stationary():
        # nothing evolves, so the residual is round-off at every level
        summary = {"classification": "exact", "order": None, "note": "stationary state"}
    demanded = None if spec.demands_order is None else ctx.tol(spec.demands_order)
    code = EXIT_PASS
    if demanded is not None and summary["classification"] != "exact":
        if summary["order"] is None or summary["order"] < demanded:
            code = EXIT_FAIL
    out_dir.mkdir(parents=True, exist_ok=True)
    artifact = write_table_csv(out_dir / f"converge_{check}.csv", rows,
                               {"scenario": config.id, "check": check, "parameter": param,
                                "classification": summary["classification"],
                                "order": summary["order"] if summary["order"] is not None
                                else "n/a"},
                               timestamp=timestamp)
    result = {"scenario": config.id, "check": check, "rows": rows, "demanded_order": demanded,
              "artifact": str(artifact), **summary}
    return result, code


def _print_ladder(result: dict):
    for r in result["rows"]:
        slope = r["slope"] if r["slope"] == "" else f"{r['slope']:.3f}"
        print(f"  level {r['level']}  dt={r['dt']:.4g}  metric={r['metric']:.4e}  slope={slope}")
    order = result["order"]
    print(f"{result['check']}: {result['classification']}"
          + ("" if order is None else f", fitted order {order:.3f}")
          + ("" if result["demanded_order"] is None
             else f" (required >= {result['demanded_order']})"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smoothpaths",
                                     description="Scenario-driven numerical checks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one or more scenario configs")
    run.add_argument("configs", nargs="+", help="TOML path or bundled scenario name")
    run.add_argument("--output-root", default=None)
    run.add_argument("--no-timestamp", action="store_true",
                     help="omit the timestamp line from CSV headers")
    run.add_argument("--jobs", type=int, default=1, help="scenarios run in parallel")

    lst = sub.add_parser("list-checks", help="print the check catalog")
    lst.add_argument("--module", default=None)

    conv = sub.add_parser("converge", help="refinement ladder for one check")
    conv.add_argument("config")
    conv.add_argument("--check", required=True)
    conv.add_argument("--levels", type=int, default=3)
    conv.add_argument("--output-root", default=None)
    conv.add_argument("--no-timestamp", action="store_true")

    sub.add_parser("version", help="print package and library versions")
    sub.add_parser("scenarios", help="list bundled scenario configs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "version":
        for k, v in versions().items():
            print(f"{k} {v}")
        return EXIT_PASS
    if args.command == "scenarios":
        for name, path in bundled_scenarios().items():
            print(f"{name}  {path}")
        return EXIT_PASS
    if args.command == "list-checks":
        entries = catalog(args.module)
        if entries:
            width = max(len(c.name) for c in entries)
            mwidth = max(len(c.module) for c in entries)
            for c in entries:
                print(f"{c.name:<{width}}  {c.module:<{mwidth}}  {c.anchor}")
        return EXIT_PASS
    if args.command == "converge":
        result, code = convergence_study(args.config, args.check, args.levels,
                                         args.output_root, not args.no_timestamp)
        if "error" in result:
            print(f"error: {result['error']}", file=sys.stderr)
        else:
            _print_ladder(result)
        return code
    # run
    jobs = [(p, args.output_root, not args.no_timestamp) for p in args.configs]
    dirs = {}
    for p in args.configs:
        try:
            cfg = load_config(resolve_config(p))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if cfg.output_dir in dirs:
            print(f"error: {p} and {dirs[cfg.output_dir]} share output_dir "
                  f"{cfg.output_dir!r}", file=sys.stderr)
            return EXIT_CONFIG
        dirs[cfg.output_dir] = p
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_run_one, jobs))
    else:
        outcomes = [_run_one(j) for j in jobs]
    for text, code in outcomes:
        print(text, end="")
    codes = [c for _, c in outcomes]
    # validation problems outrank check failures
    return max(codes) if codes else EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
