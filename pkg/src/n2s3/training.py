"""AR-DAE / DAE training of the score network with Adam."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import as_cloud, build_knn_index
from .model import ScoreNetwork, cloud_scale, extract_patches
from .noise import AnnealSchedule, perturb_for_training, rng_from_seed, sigma_schedule

log = logging.getLogger(__name__)

LOSS_VARIANTS = ("ardae", "dae")
DIVERGENCE_THRESHOLD = 1e6


class NonFiniteGradient(FloatingPointError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainingConfig:
    learning_rate: float = 0.0002
    weight_decay: float = 0.0001
    epochs: int = 400
    batch_size: int = 512
    anneal: AnnealSchedule | None = None
    loss_variant: str = "ardae"
    seed: int = 0

    def __post_init__(self):
        if self.anneal is None:
            self.anneal = AnnealSchedule(0.031, 0.001, self.epochs)
        elif self.anneal.total_epochs != self.epochs:
            self.anneal = replace(self.anneal, total_epochs=self.epochs)
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValueError(f"loss_variant must be one of {LOSS_VARIANTS}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


@dataclass
class EpochRecord:
    epoch: int
    sigma_t: float
    mean_loss: float
    seconds: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.mean_loss for r in self.records])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([r.sigma_t for r in self.records])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "sigma_t", "mean_loss", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.sigma_t), repr(r.mean_loss), f"{r.seconds:.6f}"])


def ardae_loss(scores, u, sigma_t: float) -> tuple[float, np.ndarray]:
    """Mean of ``||sigma_t * S_i + u_i||^2`` and its gradient w.r.t. each ``S_i``."""
    scores = np.asarray(scores, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if scores.shape != u.shape:
        raise ValueError(f"shape mismatch: scores {scores.shape} vs u {u.shape}")
    n = len(scores)
    if n == 0:
        raise ValueError("empty batch")
    r = sigma_t * scores + u
    loss = float(np.sum(r * r) / n)
    return loss, (2.0 * sigma_t / n) * r


def dae_loss(reconstructions, targets) -> tuple[float, np.ndarray]:
    """Mean squared reconstruction error and its gradient w.r.t. each reconstruction."""
    r = np.asarray(reconstructions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if r.shape != y.shape:
        raise ValueError(f"shape mismatch: {r.shape} vs {y.shape}")
    n = len(r)
    if n == 0:
        raise ValueError("empty batch")
    d = r - y
    return float(np.sum(d * d) / n), (2.0 / n) * d


def adam_step(params, grads, state: AdamState, lr: float, weight_decay: float = 0.0
              ) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; weight decay enters as ``+ wd * param`` in the gradient."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and Adam moments must share a shape")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradient("gradient contains NaN or Inf")
    g = grads + weight_decay * params
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, t=t)


def _epoch_seed(seed: int, epoch: int, cloud: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, epoch, cloud])


def _batch_loss_grad(net, patches, y_noisy, y_pert, u, sigma_t, variant, scale):
    out = net.forward_batch(patches, scale)
    if variant == "ardae":
        loss, g = ardae_loss(out, u, sigma_t)
    else:
        loss, g = dae_loss(y_pert + out, y_noisy)
    return loss, net.backward_batch(patches, g, scale)


def train(noisy_clouds, net: ScoreNetwork, cfg: TrainingConfig
          ) -> tuple[ScoreNetwork, TrainingHistory]:
    """Fit ``net`` to noisy clouds only; no clean data is used.

    Each epoch draws a fresh perturbation ``y' = y + sigma_t u`` for every
    cloud, extracts patches from ``y'`` and takes Adam steps over minibatches
    of points, alternating between clouds. With ``loss_variant="dae"`` the
    network output is read as a displacement ``r(y') - y'`` during training;
    the returned network has its head rescaled by ``1 / sigma_t^2`` of the
    final epoch so that it outputs scores in both cases.
    """
    clouds = [as_cloud(c) for c in noisy_clouds]
    if not clouds:
        raise ValueError("need at least one training cloud")
    k = net.arch.k_patch
    net = net.copy()
    state = AdamState.zeros(net.n_params)
    history = TrainingHistory()
    sigma_t = cfg.anneal.sigma_max

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        sigma_t = sigma_schedule(epoch, cfg.anneal)
        batches = []
        for c, y in enumerate(clouds):
            ss = _epoch_seed(cfg.seed, epoch, c)
            pert_seed, order_seed = ss.spawn(2)
            y_pert, u = perturb_for_training(y, sigma_t, pert_seed)
            patches = extract_patches(y_pert, build_knn_index(y_pert), k)
            order = rng_from_seed(order_seed).permutation(len(y))
            chunks = [order[s:s + cfg.batch_size] for s in range(0, len(y), cfg.batch_size)]
            sc = cloud_scale(patches) if net.needs_scale else None
            batches.append([(patches[b], y[b], y_pert[b], u[b], sc) for b in chunks])

        total, count = 0.0, 0
        for step in range(max(len(b) for b in batches)):
            for per_cloud in batches:
                if step >= len(per_cloud):
                    continue
                patches, y_b, yp_b, u_b, sc = per_cloud[step]
                loss, grad = _batch_loss_grad(net, patches, y_b, yp_b, u_b,
                                              sigma_t, cfg.loss_variant, sc)
                if not np.isfinite(loss) or loss > DIVERGENCE_THRESHOLD:
                    raise TrainingDiverged(
                        f"epoch {epoch}: batch loss {loss:.4g} exceeds {DIVERGENCE_THRESHOLD:g}")
                net.params, state = adam_step(net.params, grad, state,
                                              cfg.learning_rate, cfg.weight_decay)
                total += loss * len(u_b)
                count += len(u_b)

        rec = EpochRecord(epoch, sigma_t, total / count, time.perf_counter() - t0)
        history.records.append(rec)
        log.info("epoch %d sigma_t=%.5f loss=%.6f (%.2fs)", epoch, sigma_t,
                 rec.mean_loss, rec.seconds)

    if cfg.loss_variant == "dae":
        arch = replace(net.arch, output_scale=net.arch.output_scale / sigma_t ** 2)
        net = ScoreNetwork(arch, net.params)
    return net, history


@dataclass
class GradCheckReport:
    max_rel_error: float
    probes: np.ndarray
    analytic: np.ndarray
    numeric: np.ndarray

    @property
    def rel_errors(self) -> np.ndarray:
        denom = np.maximum(np.maximum(np.abs(self.analytic), np.abs(self.numeric)), 1e-300)
        return np.abs(self.analytic - self.numeric) / denom


def gradient_check(net: ScoreNetwork, cfg: TrainingConfig, n_probes: int = 100,
                   seed: int = 0, n_points: int = 64, step: float = 1e-6,
                   grad_fn=None) -> GradCheckReport:
    """Compare the AR-DAE training gradient with central finite differences.

    The differences are evaluated in extended precision (``np.longdouble``)
    so that roundoff does not swamp small gradient components; the analytic
    gradient stays in float64.

    The loss is evaluated on a perturbed random sphere sample at
    ``sigma_t = cfg.anneal.sigma_max``. ``grad_fn(net, patches, upstream, scale)``
    replaces :meth:`ScoreNetwork.backward_batch` when given, which is how
    mutated gradients are fed in as a negative control.
    """
    rng = rng_from_seed(seed)
    k = net.arch.k_patch
    n_points = max(n_points, k)
    v = rng.standard_normal((n_points, 3))
    pts = v / np.linalg.norm(v, axis=1, keepdims=True)
    pts = pts + 0.02 * rng.standard_normal(pts.shape)
    sigma_t = cfg.anneal.sigma_max
    y_pert, u = perturb_for_training(pts, sigma_t, rng.integers(2**63))
    patches = extract_patches(y_pert, build_knn_index(y_pert), k)

    sc = cloud_scale(patches) if net.needs_scale else None
    grad_fn = grad_fn or (lambda n, p, g, s: n.backward_batch(p, g, s))
    _, upstream = ardae_loss(net.forward_batch(patches, sc), u, sigma_t)
    analytic = grad_fn(net, patches, upstream, sc)

    probes = rng.choice(net.n_params, size=min(n_probes, net.n_params), replace=False)
    numeric = np.empty(len(probes))
    trial = net.copy()
    ext = np.longdouble
    u_ext, sig_ext = u.astype(ext), ext(sigma_t)
    for j, p in enumerate(probes):
        base = trial.params[p]
        hi, lo = base + step, base - step
        trial.params[p] = hi
        plus = sig_ext * trial.forward_batch(patches, sc, dtype=ext)
        trial.params[p] = lo
        minus = sig_ext * trial.forward_batch(patches, sc, dtype=ext)
        trial.params[p] = base
        # ||a+u||^2 - ||b+u||^2 == (a-b).(a+b+2u), avoids cancelling two O(1) losses
        diff = np.sum((plus - minus) * (plus + minus + 2 * u_ext)) / len(u)
        numeric[j] = float(diff / (ext(hi) - ext(lo)))

    report = GradCheckReport(0.0, probes, analytic[probes], numeric)
    report.max_rel_error = float(report.rel_errors.max())
    return report
