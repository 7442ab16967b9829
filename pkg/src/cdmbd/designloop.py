"""Closed design loop: user preference Gaussians against cup contact statistics.

Contact space is (T_outer in C, r in mm, kappa in 1/m).  Cup curvature comes
out of the simulator in 1/mm and is rescaled here so that the user table
(kappa in 1/m) and the cup read-out share units.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .engine import ChainConfig, ChainResult, run_multichain, summarize
from .exceptions import EmptyBlanketError, ValidationError
from .partition import B
from .requirements import RequirementProfile

CONTACT_CHANNELS = (1, 4, 5)  # T_outer, r, kappa
CONTACT_NAMES = ("T_outer", "r", "kappa")
KAPPA_PER_M = 1000.0  # 1/mm -> 1/m
STD_FLOOR = 1e-3
# cup-side std floor used by the shipped loop; absolute gap scale depends on it
CUP_STD_CALIBRATION = 3.0


def _diag(sig, d: int) -> np.ndarray:
    s = np.broadcast_to(np.asarray(sig, dtype=float), (d,)).astype(float)
    if not np.all(np.isfinite(s)) or np.any(s <= 0):
        raise ValidationError("standard deviations must be finite and > 0")
    return s


def gaussian_kl(mu1, sig1, mu2, sig2) -> float:
    """KL(N(mu1, diag sig1^2) || N(mu2, diag sig2^2)); sig are standard deviations."""
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    if mu1.shape != mu2.shape or mu1.ndim != 1:
        raise ValidationError("means must be 1-D vectors of equal length")
    s1, s2 = _diag(sig1, mu1.size), _diag(sig2, mu1.size)
    r2 = (s1 / s2) ** 2
    terms = 0.5 * (r2 + ((mu1 - mu2) / s2) ** 2 - 1.0 - np.log(r2))
    return float(max(0.0, np.sum(terms)))


@dataclass(frozen=True)
class UserModel:
    """Isotropic Gaussian preference over contact channels."""
    name: str
    mu: tuple
    sigma: float
    rho_pref: float = 0.5

    def __post_init__(self):
        mu = tuple(float(x) for x in self.mu)
        object.__setattr__(self, "mu", mu)
        if len(mu) != 3 or not np.all(np.isfinite(mu)):
            raise ValidationError(f"user {self.name!r}: mu must be 3 finite values")
        if not self.sigma > 0:
            raise ValidationError(f"user {self.name!r}: sigma must be > 0")

    @classmethod
    def from_preferences(cls, name: str, T_pref: float, rho_pref: float, kappa_pref: float,
                         sigma: float) -> "UserModel":
        """Build from (T_pref C, rho_pref, kappa_pref 1/m); radius is 1/kappa in mm."""
        if not kappa_pref > 0:
            raise ValidationError("kappa_pref must be > 0")
        return cls(name, (T_pref, KAPPA_PER_M / kappa_pref, kappa_pref), sigma, rho_pref)

    @property
    def mean(self) -> np.ndarray:
        return np.array(self.mu)

    def to_dict(self) -> dict:
        return {"name": self.name, "mu": list(self.mu), "sigma": float(self.sigma),
                "rho_pref": float(self.rho_pref)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "UserModel":
        if "mu" in d:
            return cls(d["name"], d["mu"], d["sigma"], d.get("rho_pref", 0.5))
        return cls.from_preferences(d["name"], d["T_pref"], d["rho_pref"], d["kappa_pref"], d["sigma"])


def default_users() -> List[UserModel]:
    return [UserModel.from_preferences("cold_sensitive", 34.0, 0.50, 22.0, 2.0),
            UserModel.from_preferences("standard", 47.0, 0.51, 20.0, 2.0),
            UserModel.from_preferences("heat_tolerant", 62.0, 0.47, 18.0, 2.0)]


@dataclass(frozen=True)
class ContactDistribution:
    mu: np.ndarray
    sigma: np.ndarray
    style: str = ""

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        sig = np.maximum(np.asarray(self.sigma, dtype=float).reshape(-1), STD_FLOOR)
        if mu.shape != sig.shape:
            raise ValidationError("mu and sigma must have the same length")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sig)

    def to_dict(self) -> dict:
        return {"style": self.style, "mu": self.mu.tolist(), "sigma": self.sigma.tolist()}


def design_gap(user: UserModel, cup: ContactDistribution) -> float:
    """KL from the user's preference to the cup's contact distribution."""
    return gaussian_kl(user.mean, user.sigma, cup.mu, cup.sigma)


def compatibility(cup: ContactDistribution, user: UserModel) -> float:
    """Negative symmetrized KL; 0 only when the two Gaussians coincide."""
    fwd = gaussian_kl(cup.mu, cup.sigma, user.mean, user.sigma)
    rev = gaussian_kl(user.mean, user.sigma, cup.mu, cup.sigma)
    return -0.5 * (fwd + rev)


def b2b_objective(elbo_proxy: float, multipliers, violations, compat: float, gamma: float) -> float:
    """Data fit minus requirement penalty plus gamma times compatibility."""
    if not gamma > 0:
        raise ValidationError("gamma must be > 0")
    lam = np.asarray(getattr(multipliers, "lam", multipliers), dtype=float)
    v = np.asarray(violations, dtype=float)
    if lam.shape != v.shape:
        raise ValidationError("multipliers and violations differ in length")
    return float(elbo_proxy) - float(lam @ v) + gamma * float(compat)


def cup_contact_distribution(tensor, chain_result: ChainResult, style: str = "",
                             std_floor: float = STD_FLOOR) -> ContactDistribution:
    """Blanket centroid and spread over (T_outer, r, kappa)."""
    st = summarize(tensor)
    idx = chain_result.partition.labels == B
    if not np.any(idx):
        raise EmptyBlanketError("cup contact distribution needs a non-empty blanket")
    X = st.raw[idx][:, CONTACT_CHANNELS].copy()
    X[:, 2] *= KAPPA_PER_M
    sd = X.std(axis=0) if X.shape[0] > 1 else np.zeros(3)
    return ContactDistribution(X.mean(axis=0), np.maximum(sd, max(std_floor, STD_FLOOR)), style)


def update_user_model(user: UserModel, target: ContactDistribution, lr: float = 0.3,
                      contraction: float = 0.10) -> UserModel:
    """Move the mean toward the target by lr; shrink the variance by `contraction`."""
    if not 0 <= lr <= 1:
        raise ValidationError("lr must be in [0, 1]")
    if not 0 <= contraction < 1:
        raise ValidationError("contraction must be in [0, 1)")
    mu = user.mean + lr * (target.mu - user.mean)
    sigma = user.sigma * np.sqrt(1.0 - contraction)
    return replace(user, mu=tuple(mu), sigma=float(sigma))


@dataclass
class LoopState:
    iteration: int
    users: List[UserModel]
    styles: List[str]
    gaps: np.ndarray
    optimal: List[str]
    cups: List[ContactDistribution] = field(default_factory=list)

    @property
    def min_gaps(self) -> np.ndarray:
        return self.gaps.min(axis=1)

    def to_dict(self) -> dict:
        return {"iteration": self.iteration, "styles": list(self.styles),
                "users": [u.to_dict() for u in self.users],
                "gaps": [[float(g) for g in row] for row in self.gaps],
                "optimal": list(self.optimal),
                "cups": [c.to_dict() for c in self.cups]}


def gap_matrix(users: Sequence[UserModel], cups: Sequence[ContactDistribution]) -> np.ndarray:
    return np.array([[design_gap(u, c) for c in cups] for u in users])


def infer_cups(tensors: Mapping[str, np.ndarray], cfg: ChainConfig = ChainConfig(),
               n_chains: int = 6, seeds: Optional[Sequence[int]] = None,
               profiles: Optional[Mapping[str, RequirementProfile]] = None,
               std_floor: float = CUP_STD_CALIBRATION) -> List[ContactDistribution]:
    """One multi-chain run per style (sorted by style name) and its contact distribution."""
    out = []
    for style in sorted(tensors):
        prof = (profiles or {}).get(style) or RequirementProfile.empty(style)
        res = run_multichain(tensors[style], prof, cfg, n_chains, seeds)
        out.append(cup_contact_distribution(tensors[style], res.best, style, std_floor))
    return out


def run_design_loop(tensors: Mapping[str, np.ndarray], users: Sequence[UserModel], n_iter: int = 3,
                    cfg: ChainConfig = ChainConfig(), n_chains: int = 6,
                    seeds: Optional[Sequence[int]] = None, lr: float = 0.3,
                    contraction: float = 0.10, std_floor: float = CUP_STD_CALIBRATION,
                    profiles: Optional[Mapping[str, RequirementProfile]] = None) -> List[LoopState]:
    """Gap matrix, optimal style and user update for each iteration."""
    if not tensors:
        raise ValidationError("need at least one style tensor")
    if not users:
        raise ValidationError("need at least one user")
    if n_iter < 1:
        raise ValidationError("n_iter must be >= 1")
    styles = sorted(tensors)
    users = list(users)
    states = []
    for it in range(n_iter):
        # per-style inference is independent; users update after all styles are in
        cups = infer_cups(tensors, cfg, n_chains, seeds, profiles, std_floor)
        gaps = gap_matrix(users, cups)
        best = np.argmin(gaps, axis=1)
        states.append(LoopState(it, list(users), styles, gaps, [styles[k] for k in best], cups))
        users = [update_user_model(u, cups[k], lr, contraction) for u, k in zip(users, best)]
    return states
