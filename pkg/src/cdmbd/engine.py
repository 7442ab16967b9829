"""Hard-assignment C-DMBD loop.

Each iteration runs an E-step (likelihood plus requirement penalty per node),
reads the blanket mean off the current blanket, takes a scalar step on the
blanket spectral radius rho, then a dual-ascent step on the multipliers.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .exceptions import EmptyBlanketError, ValidationError
from .partition import B, S, Z, Partition
from .requirements import (Certificate, Multipliers, RequirementProfile, certificate,
                           dual_ascent_step, read_out, violations_from_phi)
from .statespace import (RHO_BOUNDS, BlanketSignature, LatentDims, ModelParams,
                         enforce_mb_zeros, has_mb_zeros, make_signature, unit_radius_basis)
from .validation import check_tensor

LATENT = LatentDims(4, 4, 4)
SIGMA_FLOOR = 1e-3
JUMP_THRESHOLD = 5


@dataclass(frozen=True)
class ChainConfig:
    n_iter: int = 50
    alpha_rho: float = 0.025
    rho_bounds: tuple = RHO_BOUNDS
    alpha_lambda: float = 0.12
    lambda_max: float = 15.0
    sigma_score: Optional[float] = None
    seed: int = 0
    freeze_lambda: bool = False
    monotone: bool = True

    def __post_init__(self):
        object.__setattr__(self, "rho_bounds", tuple(float(x) for x in self.rho_bounds))
        errors = []
        if int(self.n_iter) != self.n_iter or self.n_iter < 1:
            errors.append("n_iter must be an integer >= 1")
        if tuple(self.rho_bounds) != RHO_BOUNDS:
            errors.append(f"rho_bounds must be {RHO_BOUNDS}")
        if not self.alpha_rho >= 0 or not self.alpha_lambda >= 0:
            errors.append("step sizes must be >= 0")
        if not self.lambda_max > 0:
            errors.append("lambda_max must be > 0")
        if self.sigma_score is not None and not self.sigma_score > 0:
            errors.append("sigma_score must be > 0 when given")
        if errors:
            raise ValidationError("; ".join(errors))

    def to_dict(self) -> dict:
        return {"n_iter": int(self.n_iter), "alpha_rho": float(self.alpha_rho),
                "rho_bounds": list(self.rho_bounds), "alpha_lambda": float(self.alpha_lambda),
                "lambda_max": float(self.lambda_max), "sigma_score": self.sigma_score,
                "seed": int(self.seed), "freeze_lambda": bool(self.freeze_lambda),
                "monotone": bool(self.monotone)}


@dataclass(frozen=True)
class NodeStats:
    """Per-node time averages in raw and z-normalized units."""
    raw: np.ndarray
    z: np.ndarray
    sigma: float


def summarize(tensor) -> NodeStats:
    """Node means plus the pooled within-node temporal std (z units).

    Channels are z-normalized over all samples, so sigma is the typical
    temporal spread of a node around its own mean; on spatially flat data
    it is about 1 and partition scores barely move.
    """
    Y = check_tensor(tensor)
    flat = Y.reshape(-1, Y.shape[2])
    mean = flat.mean(axis=0)
    sd = flat.std(axis=0)
    sd[sd <= 0] = 1.0
    Yz = (Y - mean) / sd
    sigma = float(np.sqrt(np.mean(Yz.var(axis=0))))
    return NodeStats(Y.mean(axis=0), Yz.mean(axis=0), max(sigma, SIGMA_FLOOR))


def _stats(tensor_or_stats) -> NodeStats:
    return tensor_or_stats if isinstance(tensor_or_stats, NodeStats) else summarize(tensor_or_stats)


def _centroids(X: np.ndarray, labels: np.ndarray, previous=None) -> np.ndarray:
    out = np.zeros((3, X.shape[1])) if previous is None else np.array(previous, dtype=float)
    for role in (S, B, Z):
        idx = labels == role
        if np.any(idx):
            out[role] = X[idx].mean(axis=0)
        elif previous is None:
            out[role] = np.nan
    return out


def role_centroids(tensor, partition: Partition, previous=None, normalized: bool = False):
    """3 x 7 role means (rows S, B, Z); an empty role keeps `previous`."""
    st = _stats(tensor)
    X = st.z if normalized else st.raw
    return _centroids(X, _labels(partition, X.shape[0]), previous)


def _labels(partition, n: int) -> np.ndarray:
    lab = partition.labels if isinstance(partition, Partition) else Partition(partition).labels
    if lab.size != n:
        raise ValidationError(f"partition has {lab.size} nodes, data has {n}")
    return lab


def node_score(node_mean, role: int, centroid, sigma: float, lambda_l1: float, delta_B: float) -> float:
    """Log-likelihood of a node under a role minus the blanket penalty."""
    d = np.asarray(node_mean, dtype=float) - np.asarray(centroid, dtype=float)
    score = -float(d @ d) / (2.0 * sigma ** 2)
    if role == B:
        score -= lambda_l1 * max(0.0, float(delta_B))
    return score


def _viol(profile: RequirementProfile, means: np.ndarray) -> np.ndarray:
    """Violations for each row of a (n, 7) stack of blanket means."""
    ch = profile.channels
    return profile.weights * np.maximum(0.0, np.abs(means[:, ch] - profile.taus) - profile.epss)


def marginal_deltas(raw: np.ndarray, labels: np.ndarray, lam: np.ndarray,
                    profile: RequirementProfile) -> np.ndarray:
    """Vectorized cost of blanket membership for every node."""
    N = raw.shape[0]
    if len(profile) == 0 or not np.any(lam):
        return np.zeros(N)
    in_b = labels == B
    m = int(in_b.sum())
    if m == 0:
        return np.zeros(N)
    tot = raw[in_b].sum(axis=0)
    v_cur = _viol(profile, (tot / m)[None])[0]
    delta = np.zeros(N)
    out = ~in_b
    if np.any(out):
        v_add = _viol(profile, (tot[None] + raw[out]) / (m + 1))
        delta[out] = (v_add - v_cur) @ lam
    if m > 1:
        v_drop = _viol(profile, (tot[None] - raw[in_b]) / (m - 1))
        delta[in_b] = (v_cur - v_drop) @ lam
    return delta


def _score_matrix(st: NodeStats, labels, lam, profile, sigma, centroids_z):
    d2 = ((st.z[:, None, :] - centroids_z[None, :, :]) ** 2).sum(axis=2)
    scores = -d2 / (2.0 * sigma ** 2)
    delta = marginal_deltas(st.raw, labels, lam, profile)
    scores[:, B] -= float(np.sum(lam)) * np.maximum(0.0, delta)
    return scores


def _guard_empty(new: np.ndarray, old: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Keep every role occupied by blocking the move that would empty it."""
    new = new.copy()
    for role in (S, B, Z):
        if np.any(new == role):
            continue
        counts = np.bincount(new, minlength=3)
        movable = counts[new] > 1
        prev = (old == role) & movable
        pool = prev if np.any(prev) else movable
        cand = np.flatnonzero(pool)
        gain = scores[cand, role] - scores[cand, new[cand]]
        new[cand[int(np.argmax(gain))]] = role
    return new


def _e_step_core(st: NodeStats, labels, lam, profile, sigma, prev_centroids):
    cz = _centroids(st.z, labels, prev_centroids)
    scores = _score_matrix(st, labels, lam, profile, sigma, cz)
    # argmax takes the first maximum: ties resolve S < B < Z
    new = np.argmax(scores, axis=1).astype(np.int8)
    return _guard_empty(new, labels, scores), cz


def e_step(tensor, partition: Partition, multipliers: Multipliers, profile: RequirementProfile,
           cfg: ChainConfig = ChainConfig(), previous_centroids=None) -> Partition:
    """One hard reassignment of every node."""
    st = _stats(tensor)
    labels = _labels(partition, st.raw.shape[0])
    sigma = cfg.sigma_score or st.sigma
    new, _ = _e_step_core(st, labels, _lam(multipliers, profile), profile, sigma, previous_centroids)
    return Partition(new)


def _lam(multipliers, profile) -> np.ndarray:
    lam = np.zeros(len(profile)) if multipliers is None else np.asarray(multipliers.lam, dtype=float)
    if lam.size != len(profile):
        raise ValidationError("multipliers and profile differ in length")
    return lam


def blanket_mean_surrogate(tensor, partition: Partition) -> np.ndarray:
    """Mean of the blanket nodes' time averages (raw units)."""
    st = _stats(tensor)
    labels = _labels(partition, st.raw.shape[0])
    idx = labels == B
    if not np.any(idx):
        raise EmptyBlanketError("blanket is empty; keep the previous blanket mean")
    return st.raw[idx].mean(axis=0)


def m_step_rho(rho: float, profile: RequirementProfile, multipliers: Multipliers, phi,
               cfg: ChainConfig = ChainConfig()) -> float:
    """Signed step on rho driven by the violated requirements."""
    lam = _lam(multipliers, profile)
    lo, hi = cfg.rho_bounds
    if len(profile) == 0:
        return float(np.clip(rho, lo, hi))
    gap = np.asarray(phi, dtype=float) - profile.taus
    active = np.abs(gap) > profile.epss
    step = float(np.sum(lam * profile.weights * np.sign(gap) * active))
    return float(np.clip(rho + cfg.alpha_rho * step, lo, hi))


def _data_score(st: NodeStats, labels: np.ndarray, sigma: float) -> float:
    cz = _centroids(st.z, labels)
    resid = st.z - cz[labels]
    return -float(np.mean(np.sum(resid ** 2, axis=1))) / (2.0 * sigma ** 2)


def data_log_score(tensor, partition: Partition, sigma: Optional[float] = None) -> float:
    """Mean over nodes of -||z_i - mu_label||^2 / (2 sigma^2)."""
    st = _stats(tensor)
    return _data_score(st, _labels(partition, st.raw.shape[0]), sigma or st.sigma)


def _partition_violations(st: NodeStats, labels, profile) -> np.ndarray:
    if len(profile) == 0:
        return np.zeros(0)
    idx = labels == B
    if not np.any(idx):
        raise EmptyBlanketError("blanket is empty; violations are undefined")
    return _viol(profile, st.raw[idx].mean(axis=0)[None])[0]


def _augmented(st, labels, lam, profile, sigma) -> float:
    pen = float(lam @ _partition_violations(st, labels, profile)) if np.any(lam) else 0.0
    return _data_score(st, labels, sigma) - pen


def augmented_objective(tensor, partition, multipliers, profile, sigma: Optional[float] = None) -> float:
    """Data score minus sum_k lam_k v_k(partition)."""
    st = _stats(tensor)
    return _augmented(st, _labels(partition, st.raw.shape[0]), _lam(multipliers, profile),
                      profile, sigma or st.sigma)


def objective_advantage(tensor, omega1, omega2, multipliers, profile, sigma: Optional[float] = None) -> float:
    """Positive when omega1 beats omega2 under the augmented objective."""
    st = _stats(tensor)
    sigma = sigma or st.sigma
    n = st.raw.shape[0]
    l1, l2 = _labels(omega1, n), _labels(omega2, n)
    if np.array_equal(l1, l2):
        return 0.0
    lam = _lam(multipliers, profile)
    data = _data_score(st, l1, sigma) - _data_score(st, l2, sigma)
    if not np.any(lam):
        return data
    dv = _partition_violations(st, l1, profile) - _partition_violations(st, l2, profile)
    return data - float(lam @ dv)


@dataclass(frozen=True)
class ChainResult:
    partition: Partition
    rho_star: float
    multipliers: Certificate
    elbo_proxy: float
    signature: BlanketSignature
    trace: np.ndarray = field(repr=False)
    seed: int = 0
    data_score: float = 0.0
    rho_history: np.ndarray = field(default=None, repr=False)
    mb_zeros_ok: bool = True
    n_rejected: int = 0

    TRACE_COLUMNS = ("n_blanket", "rho", "lambda_l1", "total_violation", "elbo_proxy")

    @property
    def n_blanket(self) -> int:
        return self.partition.n_blanket

    @property
    def lambda_star(self) -> np.ndarray:
        return self.multipliers.lambda_star

    def to_dict(self) -> dict:
        return {"seed": int(self.seed), "labels": [int(x) for x in self.partition.labels],
                "n_blanket": self.n_blanket, "rho_star": float(self.rho_star),
                "certificate": self.multipliers.to_dict(), "elbo_proxy": float(self.elbo_proxy),
                "data_score": float(self.data_score), "signature": self.signature.digest(),
                "mb_zeros_ok": bool(self.mb_zeros_ok)}


def init_partition(rng: np.random.Generator, n: int) -> Partition:
    labels = rng.integers(0, 3, size=n).astype(np.int8)
    for role in (S, B, Z):
        if not np.any(labels == role):
            counts = np.bincount(labels, minlength=3)
            donors = np.flatnonzero(counts[labels] > 1)
            labels[donors[rng.integers(donors.size)]] = role
    return Partition(labels)


def _template_params(rho: float, Q) -> ModelParams:
    d = LATENT.d
    A = np.zeros((d, d))
    s, z = LATENT.block("S"), LATENT.block("Z")
    A[s, s] = 0.4 * np.eye(LATENT.d_s)
    A[z, z] = 0.4 * np.eye(LATENT.d_z)
    return ModelParams(LATENT, enforce_mb_zeros(A, LATENT), None, 0.5).with_rho(rho, Q)


def run_chain(tensor, profile: RequirementProfile, cfg: ChainConfig = ChainConfig(),
              init: Optional[Partition] = None) -> ChainResult:
    """Run one seeded chain for cfg.n_iter iterations."""
    st = _stats(tensor)
    full_profile = profile
    if cfg.freeze_lambda:
        # requirements detached: the chain is the unconstrained detector
        profile = RequirementProfile.empty(profile.name)
    sigma = cfg.sigma_score or st.sigma
    n = st.raw.shape[0]
    rng = np.random.default_rng(cfg.seed)
    part = init_partition(rng, n)
    rho = float(rng.uniform(0.45, 0.55))
    if init is not None:
        part = Partition(_labels(init, n))
    labels = part.labels.copy()
    Q = unit_radius_basis(LATENT.d_b, seed=0)
    params = _template_params(rho, Q)
    mult = Multipliers.zeros(len(profile), cfg.lambda_max, cfg.alpha_lambda)
    centroids = _centroids(st.z, labels)
    trace = np.zeros((cfg.n_iter, 5))
    rho_hist = np.zeros(cfg.n_iter)
    zeros_ok = has_mb_zeros(params.A, LATENT)
    rejected = 0
    v = np.zeros(len(profile))
    for t in range(cfg.n_iter):
        lam = mult.lam
        proposal, centroids = _e_step_core(st, labels, lam, profile, sigma, centroids)
        if cfg.monotone and not np.array_equal(proposal, labels):
            if _augmented(st, proposal, lam, profile, sigma) < _augmented(st, labels, lam, profile, sigma):
                proposal = labels
                rejected += 1
        labels = proposal
        centroids = _centroids(st.z, labels, centroids)
        mu_b = st.raw[labels == B].mean(axis=0)
        phi = read_out(profile, mu_b)
        v = violations_from_phi(profile, phi)
        rho = m_step_rho(rho, profile, mult, phi, cfg)
        params = params.with_rho(rho, Q)
        zeros_ok = zeros_ok and has_mb_zeros(params.A, LATENT)
        mult = dual_ascent_step(mult, v)
        trace[t] = (np.sum(labels == B), rho, mult.l1, float(np.sum(v)),
                    _augmented(st, labels, mult.lam, profile, sigma))
        rho_hist[t] = rho
    final = Partition(labels)
    if cfg.freeze_lambda and len(full_profile):
        v = _partition_violations(st, labels, full_profile)
        mult = Multipliers.zeros(len(full_profile), cfg.lambda_max, cfg.alpha_lambda)
        cert = Certificate(mult.lam.copy(), v, np.zeros(len(v), dtype=bool), fixed_point=True)
    else:
        cert = certificate(mult, v, strict=False)
    return ChainResult(final, float(rho), cert, float(trace[-1, 4]),
                       make_signature(labels, LATENT), trace, int(cfg.seed),
                       _data_score(st, labels, sigma), rho_hist, bool(zeros_ok), rejected)


def modal_value(values: Sequence[int]) -> int:
    """Most frequent value; ties go to the smaller value."""
    counts = Counter(int(v) for v in values)
    top = max(counts.values())
    return min(k for k, c in counts.items() if c == top)


@dataclass(frozen=True)
class MultiChainResult:
    modal_B: int
    best: ChainResult
    chains: tuple

    def __iter__(self):
        return iter((self.modal_B, self.best, list(self.chains)))


def run_multichain(tensor, profile: RequirementProfile, cfg: ChainConfig = ChainConfig(),
                   n_chains: int = 6, seeds: Optional[Sequence[int]] = None) -> MultiChainResult:
    """Independent chains; modal |B| and the best chain in the modal class."""
    if seeds is None:
        seeds = [cfg.seed + k for k in range(n_chains)]
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValidationError("need at least one chain")
    if len(set(seeds)) != len(seeds):
        raise ValidationError("chain seeds must be distinct")
    st = _stats(tensor)
    chains = tuple(run_chain(st, profile, replace(cfg, seed=s)) for s in sorted(seeds))
    modal = modal_value([c.n_blanket for c in chains])
    in_class = [c for c in chains if c.n_blanket == modal]
    best = max(in_class, key=lambda c: (c.elbo_proxy, -c.seed))
    return MultiChainResult(modal, best, chains)


@dataclass(frozen=True)
class GapScore:
    delta: float
    best_partition: Partition
    runner_up: Partition
    candidate_set_size: int
    best_score: float = 0.0
    runner_up_score: float = 0.0


def gap_score(tensor, candidate_partitions: Sequence[Partition], sigma: Optional[float] = None) -> GapScore:
    """Requirement-free score margin between the best and runner-up candidates."""
    st = _stats(tensor)
    n = st.raw.shape[0]
    uniq, seen = [], set()
    for p in candidate_partitions:
        lab = _labels(p, n)
        key = canonical_key(lab)
        if key not in seen:
            seen.add(key)
            uniq.append(lab)
    if len(uniq) < 2:
        raise ValidationError("gap score needs at least two distinct candidate partitions")
    sigma = sigma or st.sigma
    scores = np.array([_data_score(st, lab, sigma) for lab in uniq])
    order = np.argsort(-scores, kind="stable")
    i, j = int(order[0]), int(order[1])
    return GapScore(float(scores[i] - scores[j]), Partition(uniq[i]), Partition(uniq[j]),
                    len(uniq), float(scores[i]), float(scores[j]))


def canonical_key(labels) -> bytes:
    """Labels renumbered by first appearance; equal for relabeled clusterings.

    With all multipliers at zero the score is symmetric in the role names,
    so two partitions that group nodes identically are one candidate.
    """
    lab = np.asarray(labels)
    remap, out = {}, np.empty(lab.size, dtype=np.int8)
    for i, x in enumerate(lab):
        out[i] = remap.setdefault(int(x), len(remap))
    return out.tobytes()


def band_partitions(n: int, max_b: Optional[int] = None) -> List[Partition]:
    """Contiguous S | B | Z layouts with |B| in 2..n/2 and non-empty S, Z."""
    max_b = n // 2 if max_b is None else max_b
    out = []
    for m in range(2, max_b + 1):
        for start in range(1, n - m):
            lab = np.full(n, Z, dtype=np.int8)
            lab[:start] = S
            lab[start:start + m] = B
            out.append(Partition(lab))
    return out


def gap_candidates(tensor, cfg: ChainConfig, seeds: Sequence[int],
                   truth: Optional[Partition] = None) -> List[Partition]:
    """lambda-frozen chain finals, ground truth and contiguous bands."""
    st = _stats(tensor)
    frozen = replace(cfg, freeze_lambda=True)
    empty = RequirementProfile.empty()
    cands = [run_chain(st, empty, replace(frozen, seed=int(s))).partition for s in seeds]
    if truth is not None:
        cands.append(truth)
    cands.extend(band_partitions(st.raw.shape[0]))
    return cands


@dataclass
class TransitionReport:
    channel: int
    grid: List[float]
    modal_B: List[int]
    lambda_l1: List[float]
    boundary_index: Optional[int]
    boundary_tau: Optional[float]
    jump: int
    advantage: List[float]
    sign_flips: List[int]
    results: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"channel": self.channel, "grid": [float(g) for g in self.grid],
                "modal_B": [int(b) for b in self.modal_B],
                "lambda_l1": [float(x) for x in self.lambda_l1],
                "boundary_index": self.boundary_index, "boundary_tau": self.boundary_tau,
                "jump": int(self.jump), "advantage": [float(a) for a in self.advantage],
                "sign_flips": [int(i) for i in self.sign_flips]}


def scan_family_transition(base_tensor, profile_template: RequirementProfile, req_index: int,
                           grid: Sequence[float], cfg: ChainConfig = ChainConfig(),
                           n_chains: int = 4, seeds: Optional[Sequence[int]] = None,
                           jump_threshold: int = JUMP_THRESHOLD) -> TransitionReport:
    """Sweep one requirement target and locate the first large jump in modal |B|."""
    grid = [float(g) for g in grid]
    if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError("scan grid must be strictly ascending with >= 2 points")
    st = _stats(base_tensor)
    profiles, results = [], []
    for tau in grid:
        prof = profile_template.with_tau(req_index, tau)
        profiles.append(prof)
        results.append(run_multichain(st, prof, cfg, n_chains, seeds))
    modal = [r.modal_B for r in results]
    boundary, jump = None, 0
    for k in range(1, len(grid)):
        if abs(modal[k] - modal[k - 1]) >= jump_threshold:
            boundary, jump = k, modal[k] - modal[k - 1]
            break
    # advantage of the last grid point's partition over the first's, under each run's multipliers
    w_hi, w_lo = results[-1].best.partition, results[0].best.partition
    adv = []
    for prof, res in zip(profiles, results):
        mult = Multipliers(res.best.lambda_star, cfg.lambda_max, cfg.alpha_lambda)
        adv.append(objective_advantage(st, w_hi, w_lo, mult, prof))
    flips = [k for k in range(1, len(adv)) if np.sign(adv[k]) != np.sign(adv[k - 1])]
    return TransitionReport(int(profile_template.requirements[req_index].channel), grid, modal,
                            [float(np.sum(r.best.lambda_star)) for r in results], boundary,
                            grid[boundary] if boundary is not None else None, int(jump), adv,
                            flips, results)
