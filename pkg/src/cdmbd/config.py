"""Declarative experiment configs (YAML).

Schema (all keys optional except `experiment`)::

    experiment: P1 | P2 | P3 | Loop | GapOnly
    output_dir: results/p1
    sim: {style, wall, n_nodes, n_steps, noise_scale, flat_data, flat_variation_frac, seed}
    chain: {n_iter, alpha_rho, alpha_lambda, lambda_max, sigma_score, freeze_lambda, monotone}
    seeds: [0, 1, 2, 3, 4, 5]        # one per chain, never clock-derived
    gap_seeds: [100, 101, ...]       # lambda-frozen chains for the gap diagnostic
    profiles: [{name, requirements: [{name, channel, tau, eps, weight}, ...]}, ...]
    scan: {requirement: R1, start: 25.0, stop: 80.0, num: 18}     # P2
    users: [{name, T_pref, rho_pref, kappa_pref, sigma}, ...]     # Loop
    loop: {styles, n_iter, lr, contraction, std_floor}            # Loop

`to_dict` gives the canonical form; `dump` writes it with sorted keys.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import yaml

from .designloop import CUP_STD_CALIBRATION, UserModel
from .engine import ChainConfig
from .exceptions import ValidationError
from .requirements import RequirementProfile
from .simulator import STYLES, SimConfig

EXPERIMENTS = ("P1", "P2", "P3", "Loop", "GapOnly")
_CHAIN_KEYS = {f.name for f in fields(ChainConfig)} - {"seed", "rho_bounds"}
_SIM_KEYS = {f.name for f in fields(SimConfig)} - {"n_channels"}


@dataclass(frozen=True)
class ScanSpec:
    requirement: str
    start: float
    stop: float
    num: int

    @property
    def grid(self) -> List[float]:
        return [float(x) for x in np.linspace(self.start, self.stop, self.num)]

    def to_dict(self) -> dict:
        return {"requirement": self.requirement, "start": float(self.start),
                "stop": float(self.stop), "num": int(self.num)}


@dataclass(frozen=True)
class LoopSpec:
    styles: tuple = ("Espresso", "Tea", "TravelMug")
    n_iter: int = 3
    lr: float = 0.3
    contraction: float = 0.10
    std_floor: float = CUP_STD_CALIBRATION

    def to_dict(self) -> dict:
        return {"styles": list(self.styles), "n_iter": int(self.n_iter), "lr": float(self.lr),
                "contraction": float(self.contraction), "std_floor": float(self.std_floor)}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    sim: SimConfig = field(default_factory=SimConfig)
    chain: ChainConfig = field(default_factory=ChainConfig)
    seeds: tuple = (0, 1, 2, 3, 4, 5)
    gap_seeds: tuple = ()
    profiles: tuple = ()
    scan: Optional[ScanSpec] = None
    users: tuple = ()
    loop: Optional[LoopSpec] = None
    output_dir: str = "results"

    @property
    def n_chains(self) -> int:
        return len(self.seeds)

    def profile(self, name: str) -> RequirementProfile:
        for p in self.profiles:
            if p.name == name:
                return p
        raise ValidationError(f"no profile named {name!r}")

    def scan_index(self) -> int:
        prof = self.profiles[0]
        names = [r.name for r in prof.requirements]
        return names.index(self.scan.requirement)

    def with_chains(self, n: int) -> "ExperimentConfig":
        """Keep the first n seeds, extending past the last one if needed."""
        if n < 1:
            raise ValidationError("--chains must be >= 1")
        seeds = list(self.seeds)
        while len(seeds) < n:
            seeds.append(max(seeds) + 1)
        return replace(self, seeds=tuple(seeds[:n]))

    def with_seed_offset(self, k: int) -> "ExperimentConfig":
        return replace(self, sim=replace(self.sim, seed=self.sim.seed + k),
                       seeds=tuple(s + k for s in self.seeds),
                       gap_seeds=tuple(s + k for s in self.gap_seeds))

    def to_dict(self) -> dict:
        chain = self.chain.to_dict()
        chain.pop("seed")
        chain.pop("rho_bounds")
        sim = self.sim.to_dict()
        sim.pop("n_channels")
        out = {"experiment": self.experiment, "output_dir": str(self.output_dir), "sim": sim,
               "chain": chain, "seeds": [int(s) for s in self.seeds],
               "gap_seeds": [int(s) for s in self.gap_seeds],
               "profiles": [p.to_dict() for p in self.profiles]}
        if self.scan is not None:
            out["scan"] = self.scan.to_dict()
        if self.users:
            out["users"] = [u.to_dict() for u in self.users]
        if self.loop is not None:
            out["loop"] = self.loop.to_dict()
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)


def _section(doc: dict, key: str, allowed: set, errors: list) -> dict:
    sec = doc.get(key) or {}
    if not isinstance(sec, dict):
        errors.append(f"{key}: must be a mapping")
        return {}
    unknown = sorted(set(sec) - allowed)
    if unknown:
        errors.append(f"{key}: unknown keys {unknown}")
    return {k: v for k, v in sec.items() if k in allowed}


def _seed_list(doc: dict, key: str, errors: list, required: bool) -> tuple:
    raw = doc.get(key)
    if raw is None:
        if required:
            errors.append(f"{key}: explicit list of integer seeds is required")
        return ()
    if not isinstance(raw, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in raw):
        errors.append(f"{key}: must be a list of integers")
        return ()
    if len(set(raw)) != len(raw):
        errors.append(f"{key}: seeds must be distinct")
    return tuple(raw)


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a config mapping; every problem is reported in one error."""
    if not isinstance(doc, dict):
        raise ValidationError("config must be a mapping")
    errors: List[str] = []
    known = {"experiment", "output_dir", "sim", "chain", "seeds", "gap_seeds", "profiles",
             "scan", "users", "loop"}
    unknown = sorted(set(doc) - known)
    if unknown:
        errors.append(f"unknown top-level keys {unknown}")
    exp = doc.get("experiment")
    if exp not in EXPERIMENTS:
        errors.append(f"experiment must be one of {list(EXPERIMENTS)}, got {exp!r}")

    sim, chain = SimConfig(), ChainConfig()
    try:
        sim = SimConfig(**_section(doc, "sim", _SIM_KEYS, errors))
    except (ValidationError, TypeError) as exc:
        errors.append(f"sim: {exc}")
    try:
        chain = ChainConfig(**_section(doc, "chain", _CHAIN_KEYS, errors))
    except (ValidationError, TypeError) as exc:
        errors.append(f"chain: {exc}")
    seeds = _seed_list(doc, "seeds", errors, required=True)
    gap_seeds = _seed_list(doc, "gap_seeds", errors, required=False)

    profiles = []
    for i, p in enumerate(doc.get("profiles") or []):
        try:
            profiles.append(RequirementProfile.from_dict(p))
        except ValidationError as exc:
            errors.append(f"profiles[{i}]: {exc}")

    scan = None
    if doc.get("scan") is not None:
        s = _section(doc, "scan", {"requirement", "start", "stop", "num"}, errors)
        try:
            scan = ScanSpec(str(s["requirement"]), float(s["start"]), float(s["stop"]), int(s["num"]))
            if scan.num < 2 or not scan.stop > scan.start:
                errors.append("scan: need num >= 2 and stop > start")
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"scan: missing or bad field ({exc})")

    users = []
    for i, u in enumerate(doc.get("users") or []):
        try:
            users.append(UserModel.from_dict(u))
        except (ValidationError, KeyError, TypeError) as exc:
            errors.append(f"users[{i}]: {exc}")

    loop = None
    if doc.get("loop") is not None:
        lp = _section(doc, "loop", {f.name for f in fields(LoopSpec)}, errors)
        if "styles" in lp:
            lp["styles"] = tuple(lp["styles"])
        try:
            loop = LoopSpec(**lp)
            bad = [s for s in loop.styles if s not in STYLES]
            if bad:
                errors.append(f"loop: unknown styles {bad}")
            if not 0 <= loop.lr <= 1 or not 0 <= loop.contraction < 1 or not loop.std_floor > 0:
                errors.append("loop: need 0 <= lr <= 1, 0 <= contraction < 1, std_floor > 0")
            if int(loop.n_iter) != loop.n_iter or loop.n_iter < 1:
                errors.append("loop: n_iter must be an integer >= 1")
        except TypeError as exc:
            errors.append(f"loop: {exc}")

    # experiment-specific requirements
    if exp in ("P1", "P3") and len(profiles) < 2:
        errors.append(f"{exp}: needs two requirement profiles")
    if exp == "P2":
        if scan is None:
            errors.append("P2: needs a scan section")
        if len(profiles) != 1:
            errors.append("P2: needs exactly one profile to scan")
        elif scan is not None and scan.requirement not in [r.name for r in profiles[0].requirements]:
            errors.append(f"P2: scan requirement {scan.requirement!r} is not in the profile")
    if exp == "Loop":
        if not users:
            errors.append("Loop: needs users")
        if loop is None:
            loop = LoopSpec()
    if exp in ("P2", "GapOnly") and not gap_seeds:
        errors.append(f"{exp}: needs gap_seeds")
    if errors:
        raise ValidationError("invalid config:\n  " + "\n  ".join(errors))
    return ExperimentConfig(exp, sim, chain, seeds, gap_seeds, tuple(profiles), scan,
                            tuple(users), loop, str(doc.get("output_dir") or "results"))


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: not valid YAML ({exc})") from exc
    except OSError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return parse_config(doc)


def canonical_yaml(path: Union[str, Path]) -> str:
    """Canonical text of a config file (parse then dump)."""
    return load_config(path).dump()


def bundled_config(name: str) -> Path:
    """Path to one of the shipped configs (p1, p2, p3, loop, gap)."""
    p = Path(__file__).parent / "configs" / f"{name.lower()}.yaml"
    if not p.exists():
        raise ValidationError(f"no bundled config {name!r}")
    return p
