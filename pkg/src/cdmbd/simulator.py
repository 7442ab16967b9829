"""Synthetic cup simulator.

Each cup is a column of nodes.  Ambient/hand nodes (S) come first, then the
wall (B), then the liquid column (Z).  Node observations follow the
linear-Gaussian recursion driven by a dynamics matrix with the blanket zero
structure, read out through role-specific emissions.

Channels: T_inner (C), T_outer (C), grad_T (C/m), q (W/m^2), r (mm),
kappa = 1/r (1/mm), w (mm).
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from .exceptions import ValidationError
from .partition import B, S, Z, Partition
from .statespace import LatentDims, enforce_mb_zeros, spectral_radius, unit_radius_basis

N_CHANNELS = 7
CHANNEL_NAMES = ("T_inner", "T_outer", "grad_T", "q", "r", "kappa", "w")
T_IN, T_OUT, GRAD, FLUX, RAD, CURV, WALL = range(7)

# per-channel noise reference scales; kappa is propagated from r
REF_SCALE = np.array([1.0, 1.0, 20.0, 5.0, 0.5, np.nan, 0.5])

WALL_MM = {"Single": 3.0, "Double": 8.0}
# radial offset of ambient and interior nodes from the wall (mm)
RADIAL_GAP_MM = 3.0
# thermal conductivities (W/m/K) and gradient fractions relative to the wall
CONDUCTIVITY = {S: 0.026, B: 0.5, Z: 0.6}
GRAD_FRACTION = {S: 0.55, B: 1.0, Z: 0.1}
LATENT_DIMS = LatentDims(4, 4, 4)


@dataclass(frozen=True)
class CupStyle:
    name: str
    volume_ml: float
    T_inner_C: float
    T_outer_single_C: float
    T_outer_double_C: float
    rho_true: float
    r_base_mm: float
    r_top_mm: float

    def T_outer(self, wall: str) -> float:
        return self.T_outer_single_C if wall == "Single" else self.T_outer_double_C


STYLES: Dict[str, CupStyle] = {
    "Espresso": CupStyle("Espresso", 60, 90.0, 86.0, 30.9, 0.47, 34.5, 35.5),
    "Tea": CupStyle("Tea", 250, 85.0, 83.0, 31.0, 0.51, 44.5, 45.5),
    "TravelMug": CupStyle("TravelMug", 350, 80.0, 86.0, 30.9, 0.52, 50.5, 51.5),
}


def get_style(style: Union[str, CupStyle]) -> CupStyle:
    if isinstance(style, CupStyle):
        return style
    try:
        return STYLES[style]
    except KeyError:
        raise ValidationError(f"unknown cup style {style!r}; choose from {sorted(STYLES)}") from None


@dataclass(frozen=True)
class SimConfig:
    style: str = "Tea"
    wall: str = "Single"
    n_nodes: int = 30
    n_steps: int = 50
    n_channels: int = N_CHANNELS
    noise_scale: float = 1.0
    flat_data: bool = False
    flat_variation_frac: float = 0.08
    seed: int = 0

    def __post_init__(self):
        errors = []
        if self.style not in STYLES:
            errors.append(f"style must be one of {sorted(STYLES)}")
        if self.wall not in WALL_MM:
            errors.append("wall must be 'Single' or 'Double'")
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 3:
            errors.append("n_nodes must be an integer >= 3")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            errors.append("n_steps must be an integer >= 2")
        if self.n_channels != N_CHANNELS:
            errors.append("n_channels is fixed at 7")
        if not self.noise_scale >= 0:
            errors.append("noise_scale must be >= 0")
        if not self.flat_variation_frac >= 0:
            errors.append("flat_variation_frac must be >= 0")
        if errors:
            raise ValidationError("; ".join(errors))

    def to_dict(self) -> dict:
        return asdict(self)


def role_sizes(n_nodes: int) -> Tuple[int, int, int]:
    """Ground-truth (|S|, |B|, |Z|); 6/11/13 at N = 30."""
    n_s = max(1, round(n_nodes * 6 / 30))
    n_b = max(1, round(n_nodes * 11 / 30))
    n_z = n_nodes - n_s - n_b
    if n_z < 1:
        n_b -= 1 - n_z
        n_z = 1
    return n_s, n_b, n_z


def ground_truth_partition(n_nodes: int) -> Partition:
    n_s, n_b, n_z = role_sizes(n_nodes)
    return Partition([S] * n_s + [B] * n_b + [Z] * n_z)


def _heights(labels: np.ndarray) -> np.ndarray:
    h = np.zeros(labels.size)
    for role in (S, B, Z):
        idx = np.flatnonzero(labels == role)
        h[idx] = np.linspace(0.0, 1.0, idx.size) if idx.size > 1 else 0.5
    return h


def node_offsets(style: CupStyle, wall: str, labels: np.ndarray) -> np.ndarray:
    """Noise-free N x 7 channel levels."""
    w_mm = WALL_MM[wall]
    t_in, t_out = style.T_inner_C, style.T_outer(wall)
    grad_wall = (t_in - t_out) / (w_mm * 1e-3)
    radius = style.r_base_mm + (style.r_top_mm - style.r_base_mm) * _heights(labels)
    shift = {S: RADIAL_GAP_MM, B: 0.0, Z: -RADIAL_GAP_MM}
    out = np.zeros((labels.size, N_CHANNELS))
    for i, role in enumerate(labels):
        g = GRAD_FRACTION[int(role)] * grad_wall
        r = radius[i] + shift[int(role)]
        out[i] = [t_in, t_out, g, CONDUCTIVITY[int(role)] * g, r, 1.0 / r, w_mm]
    return out


def true_dynamics(rho_true: float, seed: int = 0, dims: LatentDims = LATENT_DIMS) -> np.ndarray:
    """A_true with blanket zeros and spectral radius of A_bb equal to rho_true."""
    rng = np.random.default_rng(seed)
    A = 0.05 * rng.normal(size=(dims.d, dims.d))
    s, b, z = dims.block("S"), dims.block("B"), dims.block("Z")
    A[s, s] = 0.4 * unit_radius_basis(dims.d_s, seed + 1)
    A[b, b] = rho_true * unit_radius_basis(dims.d_b, seed + 2)
    A[z, z] = 0.4 * unit_radius_basis(dims.d_z, seed + 3)
    A = enforce_mb_zeros(A, dims)
    if spectral_radius(A) >= 0.99:
        raise ValidationError("generated dynamics are not stable")
    return A


def _emission(rng, dims: LatentDims) -> Dict[int, np.ndarray]:
    C = {}
    scale = np.nan_to_num(REF_SCALE, nan=0.0) * 0.25
    for role, name in ((S, "S"), (B, "B"), (Z, "Z")):
        d_l = dims.block(name).stop - dims.block(name).start
        C[role] = scale[:, None] * rng.normal(size=(N_CHANNELS, d_l))
    return C


def _latent_path(A: np.ndarray, n_steps: int, noise: float, rng) -> np.ndarray:
    d = A.shape[0]
    x = np.zeros((n_steps, d))
    prev = np.zeros(d)
    eta = 0.5 * noise * rng.normal(size=(n_steps, d))
    for t in range(n_steps):
        prev = A @ prev + eta[t]
        x[t] = prev
    return x


def _emit(x, labels, offsets, C, noise, rng) -> np.ndarray:
    dims = LATENT_DIMS
    T, N = x.shape[0], labels.size
    y = np.empty((T, N, N_CHANNELS))
    for role, name in ((S, "S"), (B, "B"), (Z, "Z")):
        idx = np.flatnonzero(labels == role)
        if idx.size:
            y[:, idx, :] = (x[:, dims.block(name)] @ C[role].T)[:, None, :] + offsets[idx][None]
    # curvature follows the clean radius before noise is added
    y[:, :, CURV] = 1.0 / y[:, :, RAD]
    ref = np.tile(REF_SCALE, (N, 1))
    ref[:, CURV] = REF_SCALE[RAD] / offsets[:, RAD] ** 2
    return y + noise * ref[None] * rng.normal(size=y.shape)


def generate_cup_data(cfg: SimConfig):
    """Return (tensor T x N x 7, ground-truth Partition, A_true)."""
    style = get_style(cfg.style)
    rng = np.random.default_rng(cfg.seed)
    truth = ground_truth_partition(cfg.n_nodes)
    labels = truth.labels
    A = true_dynamics(style.rho_true, seed=int(rng.integers(2**31)))
    C = _emission(rng, LATENT_DIMS)
    x = _latent_path(A, cfg.n_steps, cfg.noise_scale, rng)
    y = _emit(x, labels, node_offsets(style, cfg.wall, labels), C, cfg.noise_scale, rng)
    if cfg.flat_data:
        y = _flatten(y, labels, cfg, rng)
    return y, truth, A


def _flatten(y, labels, cfg: SimConfig, rng) -> np.ndarray:
    # one wall node's series is the shared base signal
    base = y[:, int(np.flatnonzero(labels == B)[labels[labels == B].size // 2]), :]
    sigma = base.std(axis=0)
    g = rng.normal(size=(cfg.n_nodes, N_CHANNELS))
    # standardized draws so the across-node spread is exactly frac * sigma
    g = (g - g.mean(axis=0)) / g.std(axis=0)
    dev = cfg.flat_variation_frac * sigma[None, :] * g
    return base[:, None, :] + dev[None, :, :]


def generate_flat_data(cfg: SimConfig) -> np.ndarray:
    """Spatially flat tensor: every node carries the same base signal.

    Nodes differ only by fixed offsets whose spread is flat_variation_frac
    times the base signal's temporal standard deviation.
    """
    flat_cfg = SimConfig(**{**cfg.to_dict(), "flat_data": True})
    return generate_cup_data(flat_cfg)[0]


def save_csv(tensor, path: Union[str, Path]) -> None:
    """Long format: t, node, then one column per channel."""
    Y = np.asarray(tensor)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "node", *CHANNEL_NAMES])
        for t in range(Y.shape[0]):
            for i in range(Y.shape[1]):
                w.writerow([t, i, *(repr(float(v)) for v in Y[t, i])])


def load_csv(path: Union[str, Path]) -> np.ndarray:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    T, N = int(rows[:, 0].max()) + 1, int(rows[:, 1].max()) + 1
    Y = np.empty((T, N, N_CHANNELS))
    Y[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2:]
    return Y


def save_npz(tensor, path: Union[str, Path], labels=None, cfg: SimConfig = None) -> None:
    """Binary dump with channel names and the generating config embedded."""
    meta = {"channels": list(CHANNEL_NAMES), "shape": list(np.shape(tensor)),
            "config": cfg.to_dict() if cfg is not None else None}
    arrays = {"data": np.asarray(tensor, dtype=float), "meta": np.array(json.dumps(meta))}
    if labels is not None:
        arrays["labels"] = np.asarray(getattr(labels, "labels", labels), dtype=np.int8)
    np.savez(path, **arrays)


def load_npz(path: Union[str, Path]):
    with np.load(path, allow_pickle=False) as f:
        data = f["data"]
        labels = Partition(f["labels"]) if "labels" in f.files else None
        meta = json.loads(str(f["meta"]))
    return data, labels, meta
