"""Experiment runners behind the CLI.

Each runner returns a plain dict (the results.json payload) plus a list of
trace rows.  Everything is a function of the config, so repeated runs are
byte-identical; timings go to a separate metadata file.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .designloop import run_design_loop
from .engine import (ChainResult, MultiChainResult, gap_candidates, gap_score, run_multichain,
                     scan_family_transition, summarize)
from .exceptions import CDMBDError
from .simulator import SimConfig, generate_cup_data, generate_flat_data

TRACE_HEADER = ("group", "seed", "iteration", "n_blanket", "rho", "lambda_l1",
                "total_violation", "elbo_proxy")


def _round(x: float) -> float:
    # 12 significant digits keeps files stable across BLAS summation orders
    return float(f"{float(x):.12g}")


def _trace_rows(group: str, chain: ChainResult) -> List[list]:
    return [[group, chain.seed, t, *[_round(v) for v in row]] for t, row in enumerate(chain.trace)]


def _chain_summary(c: ChainResult) -> dict:
    cert = c.multipliers
    return {"seed": int(c.seed), "n_blanket": c.n_blanket, "rho_star": _round(c.rho_star),
            "lambda_star": [_round(x) for x in cert.lambda_star],
            "violations": [_round(x) for x in cert.violations],
            "saturated": [bool(x) for x in cert.saturated], "fixed_point": bool(cert.fixed_point),
            "elbo_proxy": _round(c.elbo_proxy), "labels": [int(x) for x in c.partition.labels],
            "mb_zeros_ok": bool(c.mb_zeros_ok),
            "rho_in_bounds": bool(np.all((c.rho_history >= 0.30) & (c.rho_history <= 0.96)))}


def _profile_summary(res: MultiChainResult) -> dict:
    rhos = np.array([c.rho_star for c in res.chains])
    best = res.best
    return {"modal_B": int(res.modal_B), "rho_mean": _round(rhos.mean()),
            "rho_std": _round(rhos.std()), "lambda_l1": _round(np.sum(best.lambda_star)),
            "lambda_1": _round(best.lambda_star[0]) if best.lambda_star.size else 0.0,
            "best_seed": int(best.seed), "best_labels": [int(x) for x in best.partition.labels],
            "chains": [_chain_summary(c) for c in res.chains]}


def _gap(tensor, cfg: ExperimentConfig, truth=None) -> dict:
    seeds = cfg.gap_seeds or cfg.seeds
    g = gap_score(tensor, gap_candidates(tensor, cfg.chain, seeds, truth))
    return {"delta": _round(g.delta), "best_score": _round(g.best_score),
            "runner_up_score": _round(g.runner_up_score), "n_candidates": g.candidate_set_size,
            "best_labels": [int(x) for x in g.best_partition.labels],
            "runner_up_labels": [int(x) for x in g.runner_up.labels]}


def run_p1(cfg: ExperimentConfig) -> Tuple[dict, list]:
    Y, truth, _ = generate_cup_data(cfg.sim)
    st = summarize(Y)
    out, rows = {}, []
    for prof in cfg.profiles:
        res = run_multichain(st, prof, cfg.chain, seeds=cfg.seeds)
        out[prof.name] = _profile_summary(res)
        for c in res.chains:
            rows += _trace_rows(prof.name, c)
    return {"profiles": out, "profile_order": [p.name for p in cfg.profiles]}, rows


def run_p2(cfg: ExperimentConfig) -> Tuple[dict, list]:
    Y, truth, _ = generate_cup_data(cfg.sim)
    st = summarize(Y)
    rep = scan_family_transition(st, cfg.profiles[0], cfg.scan_index(), cfg.scan.grid,
                                 cfg.chain, seeds=cfg.seeds)
    rows = []
    for k, res in enumerate(rep.results):
        for c in res.chains:
            rows += _trace_rows(f"tau{k:02d}", c)
    d = rep.to_dict()
    d["grid"] = [_round(g) for g in d["grid"]]
    d["advantage"] = [_round(a) for a in d["advantage"]]
    d["lambda_l1"] = [_round(a) for a in d["lambda_l1"]]
    d["boundary_tau"] = None if d["boundary_tau"] is None else _round(d["boundary_tau"])
    d["requirement"] = cfg.scan.requirement
    d["points"] = [{"tau": _round(g), "modal_B": r.modal_B,
                    "chains": [_chain_summary(c) for c in r.chains]}
                   for g, r in zip(rep.grid, rep.results)]
    d["gap"] = _gap(st, cfg, truth)
    return d, rows


def run_p3(cfg: ExperimentConfig) -> Tuple[dict, list]:
    Y = generate_flat_data(replace(cfg.sim, flat_data=True))
    st = summarize(Y)
    out, rows = {}, []
    for prof in cfg.profiles:
        res = run_multichain(st, prof, cfg.chain, seeds=cfg.seeds)
        s = _profile_summary(res)
        sizes = [c.n_blanket for c in res.chains]
        s["runs"] = sizes
        s["deterministic"] = len(set(sizes)) == 1
        out[prof.name] = s
        for c in res.chains:
            rows += _trace_rows(prof.name, c)
    modal = [out[p.name]["modal_B"] for p in cfg.profiles]
    return {"profiles": out, "profile_order": [p.name for p in cfg.profiles],
            "deterministic": all(v["deterministic"] for v in out.values()),
            "distinct": len(set(modal)) == len(modal), "gap": _gap(st, cfg)}, rows


def run_loop(cfg: ExperimentConfig) -> Tuple[dict, list]:
    lp = cfg.loop
    tensors = {s: generate_cup_data(replace(cfg.sim, style=s))[0] for s in lp.styles}
    states = run_design_loop(tensors, cfg.users, lp.n_iter, cfg.chain, seeds=cfg.seeds,
                             lr=lp.lr, contraction=lp.contraction, std_floor=lp.std_floor)
    iters = []
    for s in states:
        d = s.to_dict()
        d["gaps"] = [[_round(g) for g in row] for row in d["gaps"]]
        d["min_gaps"] = [_round(g) for g in s.min_gaps]
        d["users"] = [{**u, "mu": [_round(x) for x in u["mu"]], "sigma": _round(u["sigma"])}
                      for u in d["users"]]
        d["cups"] = [{**c, "mu": [_round(x) for x in c["mu"]],
                      "sigma": [_round(x) for x in c["sigma"]]} for c in d["cups"]]
        iters.append(d)
    return {"styles": list(states[0].styles), "user_names": [u.name for u in cfg.users],
            "iterations": iters}, []


def run_gap_only(cfg: ExperimentConfig) -> Tuple[dict, list]:
    if cfg.sim.flat_data:
        Y, truth = generate_flat_data(cfg.sim), None
    else:
        Y, truth, _ = generate_cup_data(cfg.sim)
    return {"gap": _gap(Y, cfg, truth)}, []


RUNNERS = {"P1": run_p1, "P2": run_p2, "P3": run_p3, "Loop": run_loop, "GapOnly": run_gap_only}


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Run, then write results.json, metadata.json, traces.csv and plot data.

    Degenerate numerical states are recorded with status 'numerical_failure'
    instead of raising.
    """
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows: list = []
    try:
        payload, rows = RUNNERS[cfg.experiment](cfg)
        status, error = "ok", None
    except (CDMBDError, ArithmeticError, np.linalg.LinAlgError) as exc:
        payload, status, error = {}, "numerical_failure", f"{type(exc).__name__}: {exc}"
    results = {"experiment": cfg.experiment, "status": status, "error": error,
               "config": cfg.to_dict(), "results": payload}
    (out / "results.json").write_text(dumps(results))
    meta = {"package_version": __version__, "runtime_s": round(time.perf_counter() - t0, 3),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    (out / "metadata.json").write_text(dumps(meta))
    with open(out / "traces.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        w.writerows(rows)
    emit_plot_data(results, out)
    return results


def _write(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def emit_plot_data(results: dict, out_dir) -> List[Path]:
    """One CSV per figure panel; missing data gives header-only files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exp = results.get("experiment")
    r = results.get("results") or {}
    files = []
    if exp in ("P1", "P3"):
        order = r.get("profile_order", [])
        profs = r.get("profiles", {})
        tag = exp.lower()
        files.append(_write(out / f"{tag}_rho.csv", ("profile", "seed", "rho"),
                            [(p, c["seed"], c["rho_star"]) for p in order for c in profs[p]["chains"]]))
        files.append(_write(out / f"{tag}_blanket_size.csv", ("profile", "run", "seed", "n_blanket"),
                            [(p, k + 1, c["seed"], c["n_blanket"])
                             for p in order for k, c in enumerate(profs[p]["chains"])]))
        files.append(_write(out / f"{tag}_lambda.csv", ("profile", "requirement", "lambda"),
                            [(p, k + 1, lam) for p in order
                             for k, lam in enumerate(_best(profs[p])["lambda_star"])]))
        if exp == "P3":
            n = len(profs[order[0]]["best_labels"]) if order else 0
            files.append(_write(out / "p3_partition.csv", ("node", *order),
                                [(i, *[profs[p]["best_labels"][i] for p in order]) for i in range(n)]))
    elif exp == "P2":
        grid, modal = r.get("grid", []), r.get("modal_B", [])
        files.append(_write(out / "p2_modal_b.csv", ("tau1", "modal_B"), list(zip(grid, modal))))
        files.append(_write(out / "p2_advantage.csv", ("tau1", "advantage"),
                            list(zip(grid, r.get("advantage", [])))))
        g = r.get("gap")
        files.append(_write(out / "p2_gap.csv", ("delta", "best_score", "runner_up_score"),
                            [(g["delta"], g["best_score"], g["runner_up_score"])] if g else []))
    elif exp == "Loop":
        its = r.get("iterations", [])
        users, styles = r.get("user_names", []), r.get("styles", [])
        files.append(_write(out / "loop_min_gap.csv", ("iteration", "user", "min_gap", "optimal"),
                            [(d["iteration"], u, d["min_gaps"][i], d["optimal"][i])
                             for d in its for i, u in enumerate(users)]))
        files.append(_write(out / "loop_gaps.csv", ("iteration", "user", "style", "gap"),
                            [(d["iteration"], u, s, d["gaps"][i][j]) for d in its
                             for i, u in enumerate(users) for j, s in enumerate(styles)]))
    elif exp == "GapOnly":
        g = r.get("gap")
        files.append(_write(out / "gap.csv", ("delta", "best_score", "runner_up_score"),
                            [(g["delta"], g["best_score"], g["runner_up_score"])] if g else []))
    return files


def _best(profile_summary: dict) -> dict:
    for c in profile_summary["chains"]:
        if c["seed"] == profile_summary["best_seed"]:
            return c
    return profile_summary["chains"][0]
