"""Denoising quality metrics: TV_PC, Chamfer distance and point-to-surface distance.

Reductions use :func:`math.fsum`, which is exactly rounded, so results do not
depend on point order or on the summation order of any other code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import InvalidK, KnnIndex, as_cloud, build_knn_index, squared_distances
from .noise import rng_from_seed
from .surfaces import AnalyticSurface

WEIGHTINGS = ("constant", "gaussian")


@dataclass(frozen=True)
class TvParams:
    """Neighborhood size, Charbonnier epsilon and edge weighting for :func:`tv_pc`.

    With ``weighting="gaussian"`` each edge is weighted by
    ``exp(-d^2 / (2 kernel_sigma^2))``; ``"constant"`` uses weight 1.
    """

    k_neighbors: int = 8
    epsilon: float = 1e-6
    weighting: str = "constant"
    kernel_sigma: float | None = None

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")
        if self.weighting == "gaussian" and not (self.kernel_sigma and self.kernel_sigma > 0):
            raise ValueError("gaussian weighting needs a positive kernel_sigma")


def neighbors_excluding_self(idx: KnnIndex, k: int) -> np.ndarray:
    """``(N, k)`` indices of each indexed point's k nearest other points."""
    n = idx.n_points
    if not 1 <= k < n:
        raise InvalidK(f"need 1 <= k < n_points ({n}), got k={k}")
    nbr, _ = idx.query(idx.points, k + 1)
    keep = nbr != np.arange(n)[:, None]
    # self missing means k+1 exact duplicates outranked it; drop the last one
    keep[keep.all(axis=1), -1] = False
    return nbr[keep].reshape(n, k)


def tv_pc(pc, params: TvParams = TvParams(), idx: KnnIndex | None = None) -> float:
    """Total variation of a point cloud.

    ``sum_i sum_{j in knn(i)} w_ij * sqrt(||p_i - p_j||^2 + eps^2)`` where
    ``knn(i)`` are the ``k_neighbors`` nearest points other than ``i``.
    """
    pc = as_cloud(pc)
    if idx is None:
        idx = build_knn_index(pc)
    nbr = neighbors_excluding_self(idx, params.k_neighbors)
    d2 = squared_distances(pc[nbr], pc[:, None, :])
    terms = np.sqrt(d2 + params.epsilon * params.epsilon)
    if params.weighting == "gaussian":
        terms = np.exp(-d2 / (2.0 * params.kernel_sigma ** 2)) * terms
    return math.fsum(terms.ravel().tolist())


def _nn_sq(src, dst_idx: KnnIndex):
    nbr, _ = dst_idx.query(src, 1)
    return squared_distances(dst_idx.points[nbr[:, 0]], src)


def chamfer_distance(a, b) -> float:
    """Two-sided Chamfer distance with squared L2 and mean aggregation.

    ``mean_a min_b ||a - b||^2 + mean_b min_a ||a - b||^2``
    """
    a = as_cloud(a)
    b = as_cloud(b)
    ab = _nn_sq(a, build_knn_index(b))
    ba = _nn_sq(b, build_knn_index(a))
    return math.fsum(ab.tolist()) / len(a) + math.fsum(ba.tolist()) / len(b)


def point_to_surface(pc, surf: AnalyticSurface) -> float:
    """Mean unsigned distance from the points to an analytic surface."""
    d = surf.distance(as_cloud(pc))
    return math.fsum(d.tolist()) / len(d)


def shuffle_cloud(pc, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Randomly permute points; returns ``(pc[perm], perm)``."""
    pc = as_cloud(pc)
    perm = rng_from_seed(seed).permutation(len(pc))
    return pc[perm], perm


def inverse_permutation(perm) -> np.ndarray:
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return inv


def transform_cloud(pc, rotation=None, scale: float = 1.0, translation=None) -> np.ndarray:
    """Apply ``p -> scale * R p + t``."""
    out = as_cloud(pc)
    if rotation is not None:
        out = out @ np.asarray(rotation, dtype=np.float64).T
    out = scale * out
    if translation is not None:
        out = out + np.asarray(translation, dtype=np.float64)
    return out
