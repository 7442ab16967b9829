"""Requirement profiles, dead-zone violations and dual ascent on multipliers."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np

from .exceptions import EmptyBlanketError, NonConvergenceError, ValidationError

CHANNELS = ("T_inner", "T_outer", "grad_T", "q", "r", "kappa", "w")
FIXED_POINT_TOL = 1e-9


@dataclass(frozen=True)
class Requirement:
    """Target tau on one channel of the blanket mean, dead zone eps, weight."""
    name: str
    channel: int
    tau: float
    eps: float
    weight: float

    def __post_init__(self):
        if not 0 <= int(self.channel) <= 6 or int(self.channel) != self.channel:
            raise ValidationError(f"{self.name}: channel must be an integer in [0, 6]")
        if not np.isfinite(self.tau):
            raise ValidationError(f"{self.name}: tau must be finite")
        if not self.eps >= 0:
            raise ValidationError(f"{self.name}: eps must be >= 0")
        if not self.weight > 0:
            raise ValidationError(f"{self.name}: weight must be > 0")

    def to_dict(self) -> dict:
        return {"name": self.name, "channel": int(self.channel), "tau": float(self.tau),
                "eps": float(self.eps), "weight": float(self.weight)}


@dataclass(frozen=True)
class RequirementProfile:
    name: str
    requirements: tuple = ()
    allow_empty: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        reqs = tuple(self.requirements)
        object.__setattr__(self, "requirements", reqs)
        if not reqs and not self.allow_empty:
            raise ValidationError(f"profile {self.name!r} needs at least one requirement")
        names = [r.name for r in reqs]
        if len(set(names)) != len(names):
            raise ValidationError(f"profile {self.name!r} has duplicate requirement names")

    @classmethod
    def empty(cls, name: str = "none") -> "RequirementProfile":
        """Profile with no requirements (unconstrained detection)."""
        return cls(name, (), allow_empty=True)

    def __len__(self):
        return len(self.requirements)

    @property
    def channels(self) -> np.ndarray:
        return np.array([r.channel for r in self.requirements], dtype=int)

    @property
    def taus(self) -> np.ndarray:
        return np.array([r.tau for r in self.requirements], dtype=float)

    @property
    def epss(self) -> np.ndarray:
        return np.array([r.eps for r in self.requirements], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([r.weight for r in self.requirements], dtype=float)

    def with_tau(self, index: int, tau: float) -> "RequirementProfile":
        reqs = list(self.requirements)
        reqs[index] = replace(reqs[index], tau=float(tau))
        return RequirementProfile(self.name, tuple(reqs), self.allow_empty)

    def to_dict(self) -> dict:
        return {"name": self.name, "requirements": [r.to_dict() for r in self.requirements]}

    @classmethod
    def from_dict(cls, d: dict) -> "RequirementProfile":
        if not isinstance(d, dict) or "name" not in d:
            raise ValidationError("profile entry needs a 'name'")
        reqs = []
        for i, r in enumerate(d.get("requirements") or []):
            try:
                reqs.append(Requirement(str(r["name"]), int(r["channel"]), float(r["tau"]),
                                        float(r["eps"]), float(r["weight"])))
            except (KeyError, TypeError) as exc:
                raise ValidationError(
                    f"profile {d['name']!r} requirement {i}: missing or bad field ({exc})") from exc
        return cls(str(d["name"]), tuple(reqs), allow_empty=not reqs)


def load_profiles(path: Union[str, Path]) -> List[RequirementProfile]:
    """Read profiles from a YAML file holding a list under 'profiles'."""
    import yaml
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    entries = doc.get("profiles", doc) if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise ValidationError(f"{path}: expected a list of profiles")
    return [RequirementProfile.from_dict(e) for e in entries]


@dataclass(frozen=True)
class Multipliers:
    lam: np.ndarray
    lambda_max: float = 15.0
    alpha_lambda: float = 0.12

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float).reshape(-1)
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        if self.lambda_max <= 0 or self.alpha_lambda < 0:
            raise ValidationError("lambda_max must be > 0 and alpha_lambda >= 0")
        if np.any(lam < 0) or np.any(lam > self.lambda_max) or not np.all(np.isfinite(lam)):
            raise ValidationError(f"multipliers must lie in [0, {self.lambda_max}]")

    @classmethod
    def zeros(cls, k: int, lambda_max: float = 15.0, alpha_lambda: float = 0.12) -> "Multipliers":
        return cls(np.zeros(k), lambda_max, alpha_lambda)

    @property
    def l1(self) -> float:
        return float(np.sum(self.lam))


@dataclass(frozen=True)
class Certificate:
    lambda_star: np.ndarray
    violations: np.ndarray
    saturated: np.ndarray
    fixed_point: bool = True

    def to_dict(self) -> dict:
        return {"lambda_star": [float(x) for x in self.lambda_star],
                "violations": [float(x) for x in self.violations],
                "saturated": [bool(x) for x in self.saturated],
                "fixed_point": bool(self.fixed_point)}


def violation(req: Requirement, phi: float) -> float:
    """Weighted dead-zone hinge w * max(0, |phi - tau| - eps)."""
    return float(req.weight * max(0.0, abs(float(phi) - req.tau) - req.eps))


def violations_from_phi(profile: RequirementProfile, phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    return profile.weights * np.maximum(0.0, np.abs(phi - profile.taus) - profile.epss)


def read_out(profile: RequirementProfile, mu_hat_b) -> np.ndarray:
    """phi_k = mu_hat_b[channel_k]."""
    mu = np.asarray(mu_hat_b, dtype=float).reshape(-1)
    if mu.shape[0] != 7:
        raise ValidationError(f"blanket mean must have 7 channels, got {mu.shape[0]}")
    return mu[profile.channels] if len(profile) else np.zeros(0)


def profile_violations(profile: RequirementProfile, mu_hat_b) -> np.ndarray:
    return violations_from_phi(profile, read_out(profile, mu_hat_b))


def marginal_violation_delta(profile: RequirementProfile, multipliers: Multipliers,
                             blanket: Iterable[int], candidate: int, node_means) -> float:
    """Weighted change in violation from having `candidate` in the blanket.

    For a node outside B this is sum_k lam_k [v_k(B + i) - v_k(B)]; for a
    member it is sum_k lam_k [v_k(B) - v_k(B - i)], so both directions
    measure the cost of membership.
    """
    Y = np.asarray(node_means, dtype=float)
    members = sorted(set(int(b) for b in blanket))
    i = int(candidate)
    if not 0 <= i < Y.shape[0]:
        raise ValidationError(f"candidate {i} out of range")
    if not members:
        raise EmptyBlanketError("blanket is empty; keep the previous blanket mean")
    lam = multipliers.lam
    if len(lam) != len(profile):
        raise ValidationError("multipliers and profile differ in length")
    if not np.any(lam):
        return 0.0
    if i in members:
        rest = [m for m in members if m != i]
        if not rest:
            raise EmptyBlanketError("removing the only blanket node empties B")
        with_i, without_i = members, rest
    else:
        with_i, without_i = members + [i], members
    v_with = profile_violations(profile, Y[with_i].mean(axis=0))
    v_without = profile_violations(profile, Y[without_i].mean(axis=0))
    return float(lam @ (v_with - v_without))


def dual_ascent_step(multipliers: Multipliers, violations) -> Multipliers:
    """lam <- clip(lam + alpha * v, 0, lambda_max)."""
    v = np.asarray(violations, dtype=float).reshape(-1)
    if v.shape != multipliers.lam.shape:
        raise ValidationError("violations and multipliers differ in length")
    lam = np.clip(multipliers.lam + multipliers.alpha_lambda * v, 0.0, multipliers.lambda_max)
    return Multipliers(lam, multipliers.lambda_max, multipliers.alpha_lambda)


def certificate(multipliers: Multipliers, violations, strict: bool = True) -> Certificate:
    """Converged multipliers with saturation flags.

    An unsaturated multiplier paired with a positive violation would still
    move under another dual step; with strict=True that raises.
    """
    v = np.asarray(violations, dtype=float).reshape(-1)
    lam = np.array(multipliers.lam)
    sat = lam >= multipliers.lambda_max
    bad = (~sat) & (v > FIXED_POINT_TOL)
    if strict and np.any(bad):
        idx = [int(k) for k in np.flatnonzero(bad)]
        raise NonConvergenceError(
            f"multipliers {idx} are unsaturated but still violated "
            f"(v = {[float(v[k]) for k in idx]}); run more iterations")
    return Certificate(lam, v, sat, fixed_point=not bool(np.any(bad)))
