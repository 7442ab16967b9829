"""Command line entry point.

    cdmbd run <config.yaml> [--out DIR] [--chains N] [--seed-offset K]
    cdmbd gap <config.yaml> [--out DIR] [--chains N] [--seed-offset K]
    cdmbd plots <results-dir>

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import bundled_config, load_config
from .exceptions import ValidationError
from .experiments import emit_plot_data, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"status": kind, "error": message}), file=sys.stderr)
    return code


def _resolve(path: str) -> Path:
    p = Path(path)
    if not p.exists() and not p.suffix:
        return bundled_config(path)
    return p


def _load(args):
    cfg = load_config(_resolve(args.config))
    if args.chains is not None:
        cfg = cfg.with_chains(args.chains)
    if args.seed_offset:
        cfg = cfg.with_seed_offset(args.seed_offset)
    return cfg


def _run(cfg, out: Optional[str]) -> int:
    results = run_experiment(cfg, out)
    status = results["status"]
    dest = Path(out or cfg.output_dir)
    print(json.dumps({"status": status, "experiment": cfg.experiment, "output_dir": str(dest)}))
    return EXIT_OK if status == "ok" else EXIT_NUMERIC


def cmd_run(args) -> int:
    return _run(_load(args), args.out)


def cmd_gap(args) -> int:
    cfg = _load(args)
    if not cfg.gap_seeds:
        cfg = replace(cfg, gap_seeds=cfg.seeds)
    return _run(replace(cfg, experiment="GapOnly"), args.out)


def cmd_plots(args) -> int:
    src = Path(args.results_dir) / "results.json"
    try:
        results = json.loads(src.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        return _error("config_error", f"{src}: {exc}", EXIT_CONFIG)
    files = emit_plot_data(results, args.out or args.results_dir)
    print(json.dumps({"status": "ok", "files": [str(f) for f in files]}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdmbd", description="Constrained Markov-blanket detection experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (("run", cmd_run, "run an experiment config"),
                            ("gap", cmd_gap, "requirement-free gap diagnostic for a config")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="YAML config path or bundled name (p1, p2, p3, loop, gap)")
        p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
        p.add_argument("--chains", type=int, default=None, help="number of chains (truncates or extends seeds)")
        p.add_argument("--seed-offset", type=int, default=0, help="added to every seed in the config")
        p.set_defaults(func=fn)
    p = sub.add_parser("plots", help="re-emit plot CSVs from a results directory")
    p.add_argument("results_dir")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_plots)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ValidationError as exc:
        return _error("config_error", str(exc), EXIT_CONFIG)
    except (ArithmeticError, ValueError) as exc:
        return _error("numerical_failure", f"{type(exc).__name__}: {exc}", EXIT_NUMERIC)


if __name__ == "__main__":
    sys.exit(main())
