"""One-step Tweedie denoising and TV_PC-based noise level estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import as_cloud, build_knn_index
from .metrics import TvParams, tv_pc
from .model import ScoreNetwork, cloud_scale, extract_patches


@dataclass
class ScoreField:
    """Per-point scores aligned with a cloud's index space."""

    scores: np.ndarray
    source: str = "network"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2 or self.scores.shape[1] != 3:
            raise ValueError(f"scores must be (N, 3), got {self.scores.shape}")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")

    def __len__(self):
        return len(self.scores)


@dataclass
class SigmaSweepResult:
    sigma_star: float
    tv_trace: list[tuple[float, float]]
    denoised: np.ndarray

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([s for s, _ in self.tv_trace])

    @property
    def tv_values(self) -> np.ndarray:
        return np.array([v for _, v in self.tv_trace])


def default_sigma_grid(n: int = 40, lo: float = 0.001, hi: float = 0.06) -> np.ndarray:
    """Log-spaced candidate noise levels for unit-radius clouds."""
    return np.geomspace(lo, hi, n)


def analytic_gaussian_score(pc, mu, sigma: float) -> ScoreField:
    """Exact score of ``N(mu, sigma^2 I)``: ``-(p - mu) / sigma^2``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    pc = as_cloud(pc)
    mu = np.asarray(mu, dtype=np.float64).reshape(3)
    return ScoreField(-(pc - mu) / (sigma * sigma), "analytic_gaussian",
                      {"mu": mu.tolist(), "sigma": sigma})


def analytic_plane_score(pc, normal, offset: float, sigma: float) -> ScoreField:
    """Score of a plane blurred by ``N(0, sigma^2 I)`` noise; acts along the normal only."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    pc = as_cloud(pc)
    n = np.asarray(normal, dtype=np.float64).reshape(3)
    n = n / np.linalg.norm(n)
    d = pc @ n - offset
    return ScoreField(-(d[:, None] * n) / (sigma * sigma), "analytic_plane",
                      {"normal": n.tolist(), "offset": offset, "sigma": sigma})


def tweedie_denoise(pc, scores, sigma: float) -> np.ndarray:
    """Posterior mean under Gaussian noise: ``y + sigma^2 * score``."""
    pc = as_cloud(pc)
    s = scores.scores if isinstance(scores, ScoreField) else np.asarray(scores, dtype=np.float64)
    if s.shape != pc.shape:
        raise ValueError(f"score field {s.shape} does not match cloud {pc.shape}")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return pc + (sigma * sigma) * s


def predict_scores(net: ScoreNetwork, pc, k_patch: int | None = None,
                   batch_size: int = 8192) -> ScoreField:
    """Run the network on every point's patch; patches are built once."""
    pc = as_cloud(pc)
    k = net.arch.k_patch if k_patch is None else k_patch
    idx = build_knn_index(pc)
    patches = extract_patches(pc, idx, k)
    sc = cloud_scale(patches) if net.needs_scale else None
    out = np.empty_like(pc)
    for s in range(0, len(pc), batch_size):
        out[s:s + batch_size] = net.forward_batch(patches[s:s + batch_size], sc)
    return ScoreField(out, "network", {"cloud_scale": sc})


def denoise_known_sigma(net: ScoreNetwork, pc, sigma: float,
                        k_patch: int | None = None) -> np.ndarray:
    return tweedie_denoise(pc, predict_scores(net, pc, k_patch), sigma)


def sigma_sweep(pc, scores, sigma_grid, tv_params: TvParams = TvParams()
                ) -> SigmaSweepResult:
    """Pick the grid value whose Tweedie output has the smallest TV_PC.

    ``scores`` are computed once by the caller and reused for every grid
    value. Ties keep the earliest (smallest) sigma.
    """
    pc = as_cloud(pc)
    grid = np.asarray(sigma_grid, dtype=np.float64).ravel()
    if grid.size == 0:
        raise ValueError("sigma grid is empty")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("sigma grid must be positive and strictly ascending")
    best_tv, best_sigma, best_x = np.inf, None, pc
    trace = []
    for sigma in grid:
        x = tweedie_denoise(pc, scores, float(sigma))
        tv = tv_pc(x, tv_params)
        trace.append((float(sigma), tv))
        if tv < best_tv:
            best_tv, best_sigma, best_x = tv, float(sigma), x
    return SigmaSweepResult(best_sigma, trace, best_x)


def denoise_unknown_sigma(net: ScoreNetwork | ScoreField, pc, sigma_grid=None,
                          k_patch: int | None = None,
                          tv_params: TvParams = TvParams()) -> SigmaSweepResult:
    """Estimate the noise level by minimizing TV_PC and denoise with it.

    ``net`` may also be a precomputed :class:`ScoreField`, e.g. an analytic one.
    """
    if sigma_grid is None:
        sigma_grid = default_sigma_grid()
    scores = net if isinstance(net, ScoreField) else predict_scores(net, pc, k_patch)
    return sigma_sweep(pc, scores, sigma_grid, tv_params)
