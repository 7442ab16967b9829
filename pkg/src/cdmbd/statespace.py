"""Linear-Gaussian state-space model with Markov-blanket zero structure.

Latent state is split into three blocks (s, b, z).  The dynamics matrix may
couple s<->b and b<->z but never s<->z directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .exceptions import InstabilityError, ValidationError

ROLES = ("S", "B", "Z")
INSTABILITY_TOL = 1e-9
RHO_BOUNDS = (0.30, 0.96)


@dataclass(frozen=True)
class LatentDims:
    d_s: int
    d_b: int
    d_z: int

    def __post_init__(self):
        for name in ("d_s", "d_b", "d_z"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be an integer >= 1, got {v!r}")

    @property
    def d(self) -> int:
        return self.d_s + self.d_b + self.d_z

    def block(self, role: str) -> slice:
        """Index range of a role's latent block."""
        if role == "S":
            return slice(0, self.d_s)
        if role == "B":
            return slice(self.d_s, self.d_s + self.d_b)
        if role == "Z":
            return slice(self.d_s + self.d_b, self.d)
        raise ValidationError(f"unknown role {role!r}")


def forbidden_mask(dims: LatentDims) -> np.ndarray:
    """Boolean d x d mask, True on the A_sz and A_zs blocks."""
    m = np.zeros((dims.d, dims.d), dtype=bool)
    s, z = dims.block("S"), dims.block("Z")
    m[s, z] = True
    m[z, s] = True
    return m


def _check_square(M, what="matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"{what} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{what} has non-finite entries")
    return M


def enforce_mb_zeros(A, dims: LatentDims) -> np.ndarray:
    """Return a copy of A with the s<->z blocks set to exactly 0.0."""
    A = _check_square(A, "A")
    if A.shape[0] != dims.d:
        raise ValidationError(f"A is {A.shape[0]}x{A.shape[0]} but dims.d = {dims.d}")
    out = A.copy()
    out[forbidden_mask(dims)] = 0.0
    return out


def has_mb_zeros(A, dims: LatentDims) -> bool:
    A = np.asarray(A)
    return bool(np.all(A[forbidden_mask(dims)] == 0.0))


def spectral_radius(M) -> float:
    """Largest eigenvalue modulus of a square real matrix."""
    M = _check_square(M)
    if M.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def _blanket_system(A_bb, C_b, b_bar):
    A_bb = _check_square(np.atleast_2d(A_bb), "A_bb")
    k = A_bb.shape[0]
    C_b = np.asarray(C_b, dtype=float).reshape(-1, k)
    b_bar = np.asarray(b_bar, dtype=float).reshape(k)
    if spectral_radius(A_bb) >= 1.0 - INSTABILITY_TOL:
        raise InstabilityError(
            f"blanket dynamics unstable: spectral radius {spectral_radius(A_bb):.6g} >= 1")
    return A_bb, C_b, b_bar


def stationary_blanket_mean(A_bb, C_b, d_b, b_bar) -> np.ndarray:
    """Long-run mean of the blanket emission, C_b (I - A_bb)^-1 b_bar + d_b."""
    A_bb, C_b, b_bar = _blanket_system(A_bb, C_b, b_bar)
    k = A_bb.shape[0]
    x_inf = np.linalg.solve(np.eye(k) - A_bb, b_bar)
    return C_b @ x_inf + np.asarray(d_b, dtype=float).reshape(C_b.shape[0])


def violation_directional_derivative(A_bb, C_b, b_bar, grad_phi_mu, dA_bb) -> float:
    """Derivative of phi(mu_b) along dA_bb.

    d mu_b = C_b (I - A_bb)^-1 dA_bb (I - A_bb)^-1 b_bar, contracted with
    the gradient of the read-out functional.
    """
    A_bb, C_b, b_bar = _blanket_system(A_bb, C_b, b_bar)
    k = A_bb.shape[0]
    dA = np.asarray(dA_bb, dtype=float).reshape(k, k)
    g = np.asarray(grad_phi_mu, dtype=float).reshape(C_b.shape[0])
    M = np.eye(k) - A_bb
    x_inf = np.linalg.solve(M, b_bar)
    dx = np.linalg.solve(M, dA @ x_inf)
    return float(g @ (C_b @ dx))


def unit_radius_basis(d_b: int, seed: int = 0) -> np.ndarray:
    """Fixed orthogonal matrix Q (spectral radius exactly 1 up to rounding)."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.normal(size=(d_b, d_b)))
    return q * np.sign(np.diag(r))


def materialize_abb(rho: float, Q) -> np.ndarray:
    """Blanket self-dynamics A_bb = rho * Q."""
    return float(rho) * np.asarray(Q, dtype=float)


@dataclass(frozen=True)
class EmissionModel:
    """Per-role emission y = C_l x_l + d_l + eps, eps ~ N(0, Sigma_l)."""
    C: Dict[str, np.ndarray]
    offset: Dict[str, np.ndarray]
    cov: Dict[str, np.ndarray]

    def __post_init__(self):
        for role in ROLES:
            if role not in self.C or role not in self.offset or role not in self.cov:
                raise ValidationError(f"emission missing role {role}")
            S = np.asarray(self.cov[role], dtype=float)
            if S.ndim != 2 or S.shape[0] != S.shape[1] or not np.allclose(S, S.T):
                raise ValidationError(f"Sigma_{role} must be symmetric")
            if np.min(np.linalg.eigvalsh(S)) <= 0:
                raise ValidationError(f"Sigma_{role} must be positive definite")


@dataclass(frozen=True)
class ModelParams:
    dims: LatentDims
    A: np.ndarray
    emission: Optional[EmissionModel] = None
    rho: float = 0.5

    def __post_init__(self):
        lo, hi = RHO_BOUNDS
        if not lo <= self.rho <= hi:
            raise ValidationError(f"rho must lie in [{lo}, {hi}], got {self.rho}")
        A = np.asarray(self.A, dtype=float)
        if A.shape != (self.dims.d, self.dims.d):
            raise ValidationError(f"A has shape {A.shape}, expected {(self.dims.d,) * 2}")
        if not has_mb_zeros(A, self.dims):
            raise ValidationError("A violates the Markov-blanket zero structure")

    @property
    def A_bb(self) -> np.ndarray:
        b = self.dims.block("B")
        return np.asarray(self.A)[b, b]

    def with_rho(self, rho: float, Q) -> "ModelParams":
        """Copy with A_bb rematerialized as rho * Q."""
        A = np.array(self.A, dtype=float)
        b = self.dims.block("B")
        A[b, b] = materialize_abb(rho, Q)
        A = enforce_mb_zeros(A, self.dims)
        return ModelParams(self.dims, A, self.emission, float(rho))


@dataclass(frozen=True)
class BlanketSignature:
    """Partition plus the sparsity pattern of dynamics and emission."""
    partition: tuple
    support_A: np.ndarray = field(repr=False)
    block_C: Dict[str, np.ndarray] = field(repr=False)

    def digest(self) -> str:
        import hashlib
        h = hashlib.sha256()
        h.update(",".join(map(str, self.partition)).encode())
        h.update(np.ascontiguousarray(self.support_A, dtype=np.uint8).tobytes())
        for role in ROLES:
            h.update(np.ascontiguousarray(self.block_C[role], dtype=np.uint8).tobytes())
        return h.hexdigest()


def make_signature(labels, dims: LatentDims, n_channels: int = 7) -> BlanketSignature:
    """Signature of a partition under the Markov-blanket support pattern."""
    support = ~forbidden_mask(dims)
    block_C = {}
    for role in ROLES:
        m = np.zeros((n_channels, dims.d), dtype=bool)
        m[:, dims.block(role)] = True
        block_C[role] = m
    return BlanketSignature(tuple(int(x) for x in labels), support, block_C)
