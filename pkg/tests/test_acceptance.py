"""Acceptance suite. Each test records one PASS/FAIL line, printed in the
terminal summary under "acceptance criteria".

Run with ``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np
import pytest

import bench
from n2s3.denoise import (analytic_gaussian_score, default_sigma_grid, denoise_known_sigma,
                          denoise_unknown_sigma, tweedie_denoise)
from n2s3.geometry import build_knn_index, denormalize, normalize_unit_sphere
from n2s3.metrics import TvParams, chamfer_distance, shuffle_cloud, tv_pc
from n2s3.model import Architecture, init_params
from n2s3.training import TrainingConfig, gradient_check
from oracles import brute_chamfer_matrix, brute_knn_matrix, brute_tv_matrix


def test_c1_oracle_exactness(acceptance):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 3000))
        mu = rng.uniform(-2, 2, 3)
        sigma = float(rng.uniform(0.005, 0.5))
        pc = mu + sigma * rng.standard_normal((n, 3))
        x = tweedie_denoise(pc, analytic_gaussian_score(pc, mu, sigma), sigma)
        worst = max(worst, float(np.abs(x - mu).max()))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 1.0
    acceptance(1, ok, f"max |x - mu| = {worst:.2e} over 200 clouds (<= 1e-12), {dt:.2f} s (< 1 s)")
    assert ok


def test_c2_gradient_check(acceptance):
    net = init_params(Architecture(), 0)
    cfg = TrainingConfig()
    t0 = time.perf_counter()
    rep = gradient_check(net, cfg, n_probes=100, seed=0)
    dt = time.perf_counter() - t0

    first = net.arch.k_patch * 3 * net.arch.hidden[0]

    def flipped(n, p, g, s):
        grad = n.backward_batch(p, g, s)
        grad[:first] *= -1
        return grad

    ctrl = gradient_check(net, cfg, n_probes=100, seed=0, grad_fn=flipped)
    ok = rep.max_rel_error <= 1e-6 and ctrl.max_rel_error > 1e-2 and dt < 30
    acceptance(2, ok, f"max rel error {rep.max_rel_error:.2e} (<= 1e-6), mutated control "
                      f"{ctrl.max_rel_error:.2e} (> 1e-2), {dt:.1f} s (< 30 s)")
    assert ok


def _sphere_projection_reduction():
    """CD reduction of the ideal denoiser that snaps points onto the true sphere."""
    clean, surf = bench.held_out("sphere")
    y = bench.noisy_held_out("sphere", bench.SIGMA)
    d = y - surf.center
    proj = surf.center + surf.radius * d / np.linalg.norm(d, axis=1, keepdims=True)
    return 1 - chamfer_distance(proj, clean) / chamfer_distance(y, clean)


@pytest.mark.slow
def test_c3_denoising_gain(acceptance):
    t0 = time.perf_counter()
    net, _ = bench.trained()
    reductions = {}
    for kind in bench.SHAPES:
        cd_noisy, cd_out = bench.cd_pair(net, kind, bench.SIGMA)
        reductions[kind] = 1 - cd_out / cd_noisy
    dt = time.perf_counter() - t0
    ok = all(r >= 0.5 for r in reductions.values()) and dt < 600
    ceiling = _sphere_projection_reduction()
    acceptance(3, ok, "CD reduction " + ", ".join(f"{k} {r:.1%}" for k, r in reductions.items())
               + f" (>= 50% each; exact projection onto the true sphere gives {ceiling:.1%}), "
               f"{dt:.0f} s (< 600 s)")
    assert ok


@pytest.mark.slow
def test_c4_sigma_estimation(acceptance):
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    analytic = {}
    for sigma in (0.01, 0.02, 0.03):
        mu = rng.uniform(-0.5, 0.5, 3)
        y = mu + sigma * rng.standard_normal((bench.N_POINTS, 3))
        res = denoise_unknown_sigma(analytic_gaussian_score(y, mu, sigma), y, default_sigma_grid())
        analytic[sigma] = res.sigma_star
    net, _ = bench.trained()
    learned = {}
    for sigma in (0.01, 0.02, 0.03):
        y = bench.noisy_held_out("sphere", sigma)
        learned[sigma] = denoise_unknown_sigma(net, y).sigma_star
    dt = time.perf_counter() - t0

    ok_analytic = all(abs(s - t) <= 0.2 * t for t, s in analytic.items())
    ok_net = abs(learned[bench.SIGMA] - bench.SIGMA) <= 0.5 * bench.SIGMA
    ok = ok_analytic and ok_net and dt < 120
    acceptance(4, ok, "analytic sigma* " + ", ".join(f"{t:g}->{s:.4f}" for t, s in analytic.items())
               + f" (+-20%); trained net on sphere {bench.SIGMA:g}->{learned[bench.SIGMA]:.4f} (+-50%)"
               + "; informational " + ", ".join(f"{t:g}->{learned[t]:.4f}" for t in (0.01, 0.03))
               + f"; {dt:.0f} s excluding training (< 120 s)")
    assert ok


def _mean_cd(net, sigma, rep=0):
    return float(np.mean([bench.cd_pair(net, kind, sigma, rep)[1] for kind in bench.SHAPES]))


@pytest.mark.slow
def test_c5_loss_ablation(acceptance):
    wins, pairs = 0, []
    for rep in range(5):
        ardae = _mean_cd(bench.trained(rep)[0], bench.SIGMA, rep)
        dae = _mean_cd(bench.trained(rep, "dae")[0], bench.SIGMA, rep)
        wins += ardae <= dae
        pairs.append(f"{ardae:.2e}/{dae:.2e}")
    ok = wins >= 4
    acceptance(5, ok, f"AR-DAE <= DAE in {wins}/5 seeds (>= 4); CD ardae/dae " + " ".join(pairs))
    assert ok


@pytest.mark.slow
def test_c6_annealing_ablation(acceptance):
    levels = (0.01, 0.03)
    models = {"anneal": bench.trained()[0],
              "fixed 0.01": bench.trained(fixed_sigma=0.01)[0],
              "fixed 0.03": bench.trained(fixed_sigma=0.03)[0]}
    worst = {name: max(_mean_cd(net, s) for s in levels) for name, net in models.items()}
    best_fixed = min(worst["fixed 0.01"], worst["fixed 0.03"])
    ratio = worst["anneal"] / best_fixed
    ok = ratio <= 1.25
    acceptance(6, ok, "max-over-levels CD " + ", ".join(f"{k} {v:.3e}" for k, v in worst.items())
               + f"; anneal / best fixed = {ratio:.3f} (<= 1.25)")
    assert ok


def _random_instance(rng):
    n = int(rng.integers(10, 201))
    if rng.random() < 0.3:
        # coarse lattice: many exact distance ties and duplicate points
        return rng.integers(-3, 4, (n, 3)).astype(float) / 4
    return rng.standard_normal((n, 3)) * rng.uniform(0.01, 10) + rng.uniform(-5, 5, 3)


def test_c7_metric_oracle_equivalence(acceptance):
    rng = np.random.default_rng(707)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        a, b = _random_instance(rng), _random_instance(rng)
        k = int(rng.integers(1, 9))
        eps = float(rng.choice([0.0, 1e-6, 1e-3]))
        mismatches += chamfer_distance(a, b) != brute_chamfer_matrix(a, b)
        mismatches += tv_pc(a, TvParams(k, eps)) != brute_tv_matrix(a, k, eps)
    knn_bad = 0
    for trial in range(6):
        pts = rng.standard_normal((1000, 3))
        if trial % 2:
            pts = np.round(pts * 2) / 2
        idx = build_knn_index(pts)
        queries = np.vstack([pts, rng.standard_normal((200, 3))])
        for k in (1, 8, 32):
            got_i, got_d = idx.query(queries, k)
            want_i, want_d = brute_knn_matrix(pts, queries, k)
            knn_bad += not (np.array_equal(got_i, want_i) and np.array_equal(got_d, want_d))
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and knn_bad == 0 and dt < 60
    acceptance(7, ok, f"{mismatches} CD/TV mismatches in 200 instances, {knn_bad} kNN mismatches "
                      f"in 18 (cloud, k) cases, {dt:.1f} s (< 60 s)")
    assert ok


@pytest.mark.slow
def test_c8_invariance_suite(acceptance):
    rng = np.random.default_rng(808)
    net, _ = bench.trained()
    sources = [bench.noisy_held_out(kind, bench.SIGMA) for kind in bench.SHAPES]
    fails = {"tv translation": 0, "tv permutation": 0, "cd symmetry": 0,
             "pipeline translation": 0, "normalize round trip": 0}
    worst = {"tv": 0.0, "pipeline": 0.0, "round trip": 0.0}
    for _ in range(100):
        pc = _random_instance(rng)
        other = _random_instance(rng)
        t = rng.uniform(-10, 10, 3)
        params = TvParams(int(rng.integers(1, 9)))

        base = tv_pc(pc, params)
        rel = abs(tv_pc(pc + t, params) - base) / base
        worst["tv"] = max(worst["tv"], rel)
        fails["tv translation"] += rel > 1e-12
        fails["tv permutation"] += tv_pc(shuffle_cloud(pc, int(rng.integers(2**31)))[0], params) != base
        fails["cd symmetry"] += chamfer_distance(pc, other) != chamfer_distance(other, pc)

        src = sources[int(rng.integers(2))]
        sub = src[rng.choice(len(src), 400, replace=False)]
        x = denoise_known_sigma(net, sub, bench.SIGMA)
        xt = denoise_known_sigma(net, sub + t, bench.SIGMA)
        err = float(np.abs(xt - t - x).max())
        worst["pipeline"] = max(worst["pipeline"], err)
        fails["pipeline translation"] += err > 1e-9

        q = rng.standard_normal((int(rng.integers(2, 500)), 3)) * rng.uniform(1e-3, 1e3)
        q = q + rng.uniform(-1e3, 1e3, 3)
        n_pc, tr = normalize_unit_sphere(q)
        rt = float(np.abs(denormalize(n_pc, tr) - q).max() / np.abs(q).max())
        worst["round trip"] = max(worst["round trip"], rt)
        fails["normalize round trip"] += rt > 1e-12
    ok = not any(fails.values())
    acceptance(8, ok, "100 trials each, failures: " + ", ".join(f"{k} {v}" for k, v in fails.items())
               + f"; worst tv rel {worst['tv']:.1e}, pipeline abs {worst['pipeline']:.1e}, "
               f"round trip rel {worst['round trip']:.1e}")
    assert ok
