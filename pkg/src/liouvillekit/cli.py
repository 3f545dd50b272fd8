"""Command line entry point: ``liouvillekit COMMAND --config PATH [options]``.

Exit codes: 0 when every check passes, 2 when any property or tolerance
check fails (the report is still written), 1 on config or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings

from . import __version__
from .config import AnalysisConfig, ConfigError, build_system, load_config
from .pipeline import Executor, actions_block, chart_block, classify_block, conservation_block, normalform_block
from .report import PLOT_KINDS, MissingBlock, ReportEnvelope, atomic_write, dumps, emit_plotdata

COMMANDS = ("analyze", "actions", "conserve", "normalize", "classify", "plotdata")
EXIT_OK, EXIT_IO, EXIT_FAIL = 0, 1, 2


def _tol_pair(text: str) -> tuple[str, float]:
    key, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected KEY=VAL, got '{text}'")
    try:
        return key.strip(), float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance '{key}' needs a number") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="liouvillekit", description="Torus actions, action-angle charts and normal forms for integrable systems.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="analysis config (INI)")
    ap.add_argument("--out", default="out", help="output directory (default: ./out)")
    ap.add_argument("--maxdeg", type=int, default=None, help="truncation degree for normalize")
    ap.add_argument("--grid", type=int, default=None, help="angle grid per axis for conserve")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for per-torus and per-tensor work")
    ap.add_argument("--tol", action="append", type=_tol_pair, default=[], metavar="KEY=VAL", help="override a tolerance (repeatable)")
    ap.add_argument("--what", choices=PLOT_KINDS, action="append", help="plotdata kinds (default: all present)")
    ap.add_argument("--report", help="report to read for plotdata (default: OUT/report.json)")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def _analyses_for(command: str, cfg: AnalysisConfig) -> list[str]:
    if command == "analyze":
        return cfg.analyses()
    return {"actions": ["chart", "actions"], "conserve": ["chart", "conservation"], "normalize": ["normalform"], "classify": ["classify"]}[command]


def run(command: str, cfg: AnalysisConfig, out_dir: str, maxdeg=None, grid=None, threads: int = 1, tol_overrides=None) -> tuple[int, ReportEnvelope]:
    tol = cfg.tolerances(dict(tol_overrides or {}))
    env = ReportEnvelope("liouvillekit", __version__, command, cfg.hash)
    env.results["tolerances"] = {"values": tol.to_dict(), "passed": True}
    ex = Executor(threads)
    wanted = _analyses_for(command, cfg)
    spec = chart = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for name in wanted:
            t0 = time.perf_counter()
            if name in ("chart", "actions", "conservation"):
                if spec is None:
                    spec = build_system(cfg, tol)
                if chart is None:
                    try:
                        env.results["chart"], chart = chart_block(spec, cfg, seed=cfg.int_value("seeds", "seed", 0))
                    except ConfigError:
                        raise
                    except Exception as exc:
                        env.results["chart"] = {"error": f"{type(exc).__name__}: {exc}", "passed": False}
                        break
            try:
                if name == "actions":
                    env.results["actions"] = actions_block(spec, cfg, chart, ex)
                elif name == "conservation":
                    env.results["conservation"] = conservation_block(spec, cfg, chart, ex, grid)
                elif name == "normalform":
                    block, text = normalform_block(cfg, maxdeg)
                    env.results["normalform"] = block
                    if text:
                        atomic_write(os.path.join(out_dir, "normal_form.txt"), text)
                        block["series_file"] = "normal_form.txt"
                elif name == "classify":
                    env.results["classify"] = classify_block(cfg)
            except ConfigError:
                raise
            except OSError:
                raise
            except Exception as exc:
                env.results[name] = {"error": f"{type(exc).__name__}: {exc}", "passed": False}
            env.timing[name] = round(time.perf_counter() - t0, 6)
    env.warnings = sorted({str(w.message) for w in caught})
    atomic_write(os.path.join(out_dir, "report.json"), dumps(env.to_dict()))
    return (EXIT_OK if env.passed else EXIT_FAIL), env


def _plotdata(args) -> int:
    path = args.report or os.path.join(args.out, "report.json")
    try:
        with open(path, encoding="utf-8") as fh:
            report = json.load(fh)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read report: {exc}", file=sys.stderr)
        return EXIT_IO
    kinds = args.what or [k for k in PLOT_KINDS if {"torus": "chart", "actions": "actions", "deviation": "conservation"}[k] in report.get("results", {})]
    try:
        for k in kinds:
            for p in emit_plotdata(report, k, args.out):
                print(p)
    except MissingBlock as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plotdata":
        return _plotdata(args)
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = load_config(args.config)
        code, env = run(args.command, cfg, args.out, args.maxdeg, args.grid, args.threads, args.tol)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    for name, block in sorted(env.results.items()):
        status = "pass" if block.get("passed", True) else "FAIL"
        print(f"{name}: {status}" + (f" ({block['error']})" if "error" in block else ""))
    return code


if __name__ == "__main__":
    sys.exit(main())
