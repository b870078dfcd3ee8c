"""Point cloud containers, unit-sphere normalization and exact k-NN search.

Point clouds are plain ``(N, 3)`` float64 arrays. Every function here accepts
anything array-like and validates it through :func:`as_cloud`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


class DegenerateCloud(ValueError):
    """All points coincide, so the cloud has no scale."""


class InvalidK(ValueError):
    """Neighbor count outside ``[1, n_points]``."""


def as_cloud(points) -> np.ndarray:
    """Validate and convert to a contiguous ``(N, 3)`` float64 array."""
    pc = np.ascontiguousarray(points, dtype=np.float64)
    if pc.ndim == 1 and pc.shape[0] == 3:
        pc = pc.reshape(1, 3)
    if pc.ndim != 2 or pc.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) array, got shape {pc.shape}")
    if pc.shape[0] == 0:
        raise ValueError("point cloud is empty")
    if not np.all(np.isfinite(pc)):
        raise ValueError("point cloud contains NaN or Inf")
    return pc


def squared_distances(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, summed in fixed x, y, z order.

    Every metric in the package uses this exact expression so that kd-tree
    and brute-force paths agree bit for bit.
    """
    d = points - q
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


@dataclass(frozen=True)
class NormalizationTransform:
    """Maps normalized coordinates back via ``p * scale + centroid``."""

    centroid: np.ndarray
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @classmethod
    def identity(cls) -> "NormalizationTransform":
        return cls(np.zeros(3), 1.0)

    def apply(self, pc) -> np.ndarray:
        """Forward map into the normalized frame."""
        return (as_cloud(pc) - self.centroid) / self.scale


def bounding_sphere_radius(pc) -> float:
    """Largest distance from the centroid to any point."""
    pc = as_cloud(pc)
    centroid = pc.mean(axis=0)
    return float(np.sqrt(squared_distances(pc, centroid).max()))


def normalize_unit_sphere(pc) -> tuple[np.ndarray, NormalizationTransform]:
    """Center on the centroid and scale so the farthest point has norm 1.

    Returns:
        (normalized cloud, transform that maps it back to the input)
    """
    pc = as_cloud(pc)
    centroid = pc.mean(axis=0)
    centered = pc - centroid
    scale = float(np.sqrt(squared_distances(centered, 0.0).max()))
    if scale == 0.0:
        raise DegenerateCloud("all points are identical")
    out = centered / scale
    # division can leave the max norm one ulp away from 1
    norms = np.sqrt(squared_distances(out, 0.0))
    far = int(np.argmax(norms))
    if norms[far] != 1.0:
        out[far] /= norms[far]
    return out, NormalizationTransform(centroid, scale)


def denormalize(pc, t: NormalizationTransform) -> np.ndarray:
    return as_cloud(pc) * t.scale + t.centroid


def _default_workers() -> int:
    value = os.environ.get("N2S3_THREADS")
    if value is None:
        return 1
    return max(1, int(value))


class KnnIndex:
    """Immutable exact k-nearest-neighbor index.

    Backed by a median-split kd-tree. Results are re-ranked with
    :func:`squared_distances` and ties are broken by ascending point index,
    so they are identical to a brute-force scan.
    """

    def __init__(self, points):
        self.points = as_cloud(points)
        self.points.setflags(write=False)
        self.n_points = self.points.shape[0]
        self._tree = cKDTree(self.points, leafsize=16, balanced_tree=True,
                             compact_nodes=True, copy_data=True)

    def __len__(self):
        return self.n_points

    def _check_k(self, k):
        if not (isinstance(k, (int, np.integer)) and 1 <= k <= self.n_points):
            raise InvalidK(f"k must be an integer in [1, {self.n_points}], got {k!r}")

    def query(self, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Batched query.

        Args:
            queries: ``(M, 3)`` query points.
            k: neighbors per query.

        Returns:
            ``(indices, distances)``, both ``(M, k)``, rows sorted by
            ascending distance then ascending index.
        """
        self._check_k(k)
        q = as_cloud(queries)
        workers = _default_workers()
        _, cand = self._tree.query(q, k=k, workers=workers)
        cand = np.asarray(cand, dtype=np.int64).reshape(len(q), k)

        d2 = squared_distances(self.points[cand], q[:, None, :])
        kth = d2.max(axis=1)
        # any point within (a hair above) the k-th distance could tie or
        # displace a candidate; only those queries need the slow path
        radius = np.sqrt(kth) * (1.0 + 1e-9) + 1e-300
        counts = self._tree.query_ball_point(q, radius, return_length=True,
                                             workers=workers)
        for row in np.flatnonzero(counts > k):
            ball = np.asarray(self._tree.query_ball_point(q[row], radius[row]),
                              dtype=np.int64)
            bd2 = squared_distances(self.points[ball], q[row])
            order = np.lexsort((ball, bd2))[:k]
            cand[row] = ball[order]
            d2[row] = bd2[order]

        order = np.lexsort((cand, d2), axis=1)
        idx = np.take_along_axis(cand, order, axis=1)
        d2 = np.take_along_axis(d2, order, axis=1)
        return idx, np.sqrt(d2)


def build_knn_index(pc) -> KnnIndex:
    return KnnIndex(pc)


def knn_query(idx: KnnIndex, q, k: int) -> list[tuple[int, float]]:
    """k nearest neighbors of a single point as ``(index, distance)`` pairs."""
    q = np.asarray(q, dtype=np.float64).reshape(1, 3)
    ind, dist = idx.query(q, k)
    return [(int(i), float(d)) for i, d in zip(ind[0], dist[0])]

