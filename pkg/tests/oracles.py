"""Independent reference implementations used as test oracles.

Everything here is plain Python loops over floats. Squared distances use
the same left-to-right ``dx*dx + dy*dy + dz*dz`` order as the library and
totals use ``math.fsum``, so agreement is expected bit for bit.
"""

import math

import numpy as np


def sq(a, b):
    dx, dy, dz = a[0] - b[0], a[1] - b[1], a[2] - b[2]
    return dx * dx + dy * dy + dz * dz


def brute_knn(points, q, k):
    pts = [tuple(map(float, p)) for p in points]
    q = tuple(map(float, q))
    ranked = sorted((sq(p, q), j) for j, p in enumerate(pts))[:k]
    return [(j, math.sqrt(d)) for d, j in ranked]


def brute_tv(points, k, eps, kernel_sigma=None):
    pts = [tuple(map(float, p)) for p in points]
    terms = []
    for i, p in enumerate(pts):
        ranked = sorted((sq(pts[j], p), j) for j in range(len(pts)) if j != i)[:k]
        for d, _ in ranked:
            w = 1.0 if kernel_sigma is None else math.exp(-d / (2.0 * kernel_sigma ** 2))
            terms.append(w * math.sqrt(d + eps * eps))
    return math.fsum(terms)


def brute_chamfer(a, b):
    a = [tuple(map(float, p)) for p in a]
    b = [tuple(map(float, p)) for p in b]
    ab = [min(sq(q, p) for q in b) for p in a]
    ba = [min(sq(p, q) for p in a) for q in b]
    return math.fsum(ab) / len(a) + math.fsum(ba) / len(b)


def hand_forward(W1, b1, W2, b2, x, act=math.tanh):
    """One hidden layer, evaluated scalar by scalar. W is (in, out)."""
    hidden = []
    for j in range(len(b1)):
        z = b1[j]
        for i in range(len(x)):
            z += x[i] * W1[i][j]
        hidden.append(act(z))
    out = []
    for j in range(len(b2)):
        z = b2[j]
        for i in range(len(hidden)):
            z += hidden[i] * W2[i][j]
        out.append(z)
    return out


def hand_adam(theta, grad_fn, steps, lr, wd=0.0, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar-by-scalar Adam with L2 added to the gradient."""
    theta = list(theta)
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        for i in range(len(theta)):
            gi = g[i] + wd * theta[i]
            m[i] = b1 * m[i] + (1 - b1) * gi
            v[i] = b2 * v[i] + (1 - b2) * gi * gi
            mh = m[i] / (1 - b1 ** t)
            vh = v[i] / (1 - b2 ** t)
            theta[i] -= lr * mh / (math.sqrt(vh) + eps)
    return theta


def torus_distance_dense(points, center, R, r, n_theta=2000):
    """Distance to a z-axis torus by dense search over the tube angle.

    For a point at azimuth phi the nearest surface point shares that
    azimuth, so only the tube angle is searched; a golden-section polish
    refines the best sample.
    """
    c = np.asarray(center, dtype=float)
    out = []
    for p in np.asarray(points, dtype=float) - c:
        rho, z = math.hypot(p[0], p[1]), p[2]

        def f(th):
            return math.hypot(rho - (R + r * math.cos(th)), z - r * math.sin(th))

        grid = [2 * math.pi * i / n_theta for i in range(n_theta)]
        best = min(grid, key=f)
        lo, hi = best - 2 * math.pi / n_theta, best + 2 * math.pi / n_theta
        g = (math.sqrt(5) - 1) / 2
        for _ in range(80):
            a, b = hi - g * (hi - lo), lo + g * (hi - lo)
            if f(a) < f(b):
                hi = b
            else:
                lo = a
        out.append(f(0.5 * (lo + hi)))
    return np.array(out)


def brute_knn_matrix(points, queries, k):
    """All-pairs scan; rows ordered by (squared distance, index)."""
    p = np.asarray(points, dtype=float)
    q = np.asarray(queries, dtype=float)
    d = p[None, :, :] - q[:, None, :]
    d2 = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
    j = np.broadcast_to(np.arange(len(p)), d2.shape)
    order = np.lexsort((j, d2), axis=1)[:, :k]
    return order, np.sqrt(np.take_along_axis(d2, order, axis=1))


def brute_tv_matrix(points, k, eps):
    p = np.asarray(points, dtype=float)
    d = p[None, :, :] - p[:, None, :]
    d2 = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
    np.fill_diagonal(d2, np.inf)
    j = np.broadcast_to(np.arange(len(p)), d2.shape)
    order = np.lexsort((j, d2), axis=1)[:, :k]
    near = np.take_along_axis(d2, order, axis=1)
    return math.fsum(np.sqrt(near + eps * eps).ravel().tolist())


def brute_chamfer_matrix(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = a[:, None, :] - b[None, :, :]
    d2 = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
    return (math.fsum(d2.min(axis=1).tolist()) / len(a)
            + math.fsum(d2.min(axis=0).tolist()) / len(b))
