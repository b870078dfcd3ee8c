"""Gaussian corruption, training perturbations and the sigma_t schedule.

All randomness goes through ``numpy.random.Generator(PCG64(seed))`` and its
ziggurat ``standard_normal`` sampler. Both are specified bit-for-bit by NumPy
and give identical streams on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import as_cloud


class InvalidEpoch(ValueError):
    pass


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class NoiseSpec:
    """Isotropic Gaussian noise with std ``level`` times the bounding radius."""

    level: float
    kind: str = "gaussian_isotropic"

    def __post_init__(self):
        if self.kind != "gaussian_isotropic":
            raise ValueError(f"unsupported noise kind {self.kind!r}")
        if not self.level > 0:
            raise ValueError("noise level must be positive")

    def absolute_sigma(self, radius: float = 1.0) -> float:
        return self.level * radius


@dataclass(frozen=True)
class AnnealSchedule:
    sigma_max: float = 0.031
    sigma_min: float = 0.001
    total_epochs: int = 400

    def __post_init__(self):
        if not (self.sigma_max >= self.sigma_min > 0):
            raise ValueError("need sigma_max >= sigma_min > 0")
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be >= 1")

    @classmethod
    def fixed(cls, sigma: float, total_epochs: int) -> "AnnealSchedule":
        return cls(sigma, sigma, total_epochs)


def corrupt_gaussian(pc, sigma: float, seed: int) -> np.ndarray:
    """Add iid ``N(0, sigma^2 I)`` displacements to every point."""
    pc = as_cloud(pc)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    eps = rng_from_seed(seed).standard_normal(pc.shape)
    return pc + sigma * eps


def perturb_for_training(pc_noisy, sigma_t: float, seed: int
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``u ~ N(0, I)`` and return ``(y + sigma_t * u, u)``.

    The same ``u`` is the regression target of the AR-DAE loss.
    """
    y = as_cloud(pc_noisy)
    if not sigma_t > 0:
        raise ValueError("sigma_t must be positive")
    u = rng_from_seed(seed).standard_normal(y.shape)
    return y + sigma_t * u, u


def sigma_schedule(epoch: int, sched: AnnealSchedule) -> float:
    """Linear interpolation from ``sigma_max`` at epoch 0 to ``sigma_min`` at the last epoch."""
    if not 0 <= epoch < sched.total_epochs:
        raise InvalidEpoch(f"epoch {epoch} outside [0, {sched.total_epochs})")
    if sched.total_epochs == 1:
        return sched.sigma_max
    last = sched.total_epochs - 1
    if epoch == last:
        return sched.sigma_min
    frac = epoch / last
    return sched.sigma_max + frac * (sched.sigma_min - sched.sigma_max)
