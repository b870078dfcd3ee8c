"""Analytic ground-truth surfaces: exact unsigned distance and uniform area sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import NormalizationTransform, as_cloud
from .noise import rng_from_seed


def _vec3(v, name):
    v = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


def _positive(x, name):
    x = float(x)
    if not (np.isfinite(x) and x > 0):
        raise ValueError(f"{name} must be positive and finite, got {x}")
    return x


def _tangent_basis(n):
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = np.cross(n, helper)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


def _fmt(values):
    return ",".join(repr(float(v)) for v in values)


class AnalyticSurface:
    kind: str

    def distance(self, pc) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n: int, seed: int) -> np.ndarray:
        raise NotImplementedError

    def normalized(self, t: NormalizationTransform) -> "AnalyticSurface":
        """The same surface expressed in the frame ``p -> (p - centroid) / scale``."""
        raise NotImplementedError

    @property
    def spec(self) -> str:
        """Round-trippable ``kind:params`` string accepted by :func:`parse_surface`."""
        raise NotImplementedError


@dataclass(frozen=True)
class Plane(AnalyticSurface):
    """Plane ``{x : normal . x = offset}``; samples come from a square patch."""

    normal: np.ndarray
    offset: float = 0.0
    half_size: float = 1.0
    kind = "plane"

    def __post_init__(self):
        n = _vec3(self.normal, "normal")
        length = np.linalg.norm(n)
        if length == 0:
            raise ValueError("plane normal must be non-zero")
        object.__setattr__(self, "normal", n / length)
        object.__setattr__(self, "half_size", _positive(self.half_size, "half_size"))

    def distance(self, pc):
        return np.abs(as_cloud(pc) @ self.normal - self.offset)

    def sample(self, n, seed):
        rng = rng_from_seed(seed)
        t1, t2 = _tangent_basis(self.normal)
        uv = rng.uniform(-self.half_size, self.half_size, size=(n, 2))
        return self.offset * self.normal + uv[:, :1] * t1 + uv[:, 1:] * t2

    def normalized(self, t):
        off = (self.offset - float(self.normal @ t.centroid)) / t.scale
        return Plane(self.normal, off, self.half_size / t.scale)

    @property
    def spec(self):
        return f"plane:{_fmt([*self.normal, self.offset])}"


@dataclass(frozen=True)
class Sphere(AnalyticSurface):
    center: np.ndarray
    radius: float = 1.0
    kind = "sphere"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        object.__setattr__(self, "radius", _positive(self.radius, "radius"))

    def distance(self, pc):
        return np.abs(np.linalg.norm(as_cloud(pc) - self.center, axis=1) - self.radius)

    def sample(self, n, seed):
        v = rng_from_seed(seed).standard_normal((n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return self.center + self.radius * v

    def normalized(self, t):
        return Sphere((self.center - t.centroid) / t.scale, self.radius / t.scale)

    @property
    def spec(self):
        return f"sphere:{_fmt([*self.center, self.radius])}"


@dataclass(frozen=True)
class Torus(AnalyticSurface):
    """Torus around the z axis through ``center``; ``R`` to the tube center, ``r`` tube radius."""

    center: np.ndarray
    R: float = 1.0
    r: float = 0.25
    kind = "torus"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        object.__setattr__(self, "R", _positive(self.R, "R"))
        object.__setattr__(self, "r", _positive(self.r, "r"))

    def distance(self, pc):
        p = as_cloud(pc) - self.center
        rho = np.hypot(p[:, 0], p[:, 1])
        return np.abs(np.hypot(rho - self.R, p[:, 2]) - self.r)

    def point(self, theta, phi):
        """Surface point at tube angle ``theta`` and azimuth ``phi``."""
        rad = self.R + self.r * np.cos(theta)
        return self.center + np.stack(
            [rad * np.cos(phi), rad * np.sin(phi), self.r * np.sin(theta)], axis=-1)

    def sample(self, n, seed):
        rng = rng_from_seed(seed)
        # area element is proportional to R + r cos(theta); rejection-sample theta
        theta = np.empty(0)
        while len(theta) < n:
            cand = rng.uniform(0, 2 * np.pi, size=2 * n)
            keep = rng.uniform(0, self.R + self.r, size=2 * n) < self.R + self.r * np.cos(cand)
            theta = np.concatenate([theta, cand[keep]])
        theta = theta[:n]
        phi = rng.uniform(0, 2 * np.pi, size=n)
        return self.point(theta, phi)

    def normalized(self, t):
        return Torus((self.center - t.centroid) / t.scale, self.R / t.scale, self.r / t.scale)

    @property
    def spec(self):
        return f"torus:{_fmt([*self.center, self.R, self.r])}"


@dataclass(frozen=True)
class Box(AnalyticSurface):
    """Surface of an axis-aligned box."""

    center: np.ndarray
    half_extents: np.ndarray
    kind = "box"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        h = _vec3(self.half_extents, "half_extents")
        if np.any(h <= 0):
            raise ValueError("half_extents must be positive")
        object.__setattr__(self, "half_extents", h)

    def distance(self, pc):
        q = np.abs(as_cloud(pc) - self.center) - self.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return np.abs(outside + inside)

    def sample(self, n, seed):
        rng = rng_from_seed(seed)
        hx, hy, hz = self.half_extents
        face_axis = np.array([0, 0, 1, 1, 2, 2])
        areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])
        faces = rng.choice(6, size=n, p=areas / areas.sum())
        pts = rng.uniform(-1.0, 1.0, size=(n, 3)) * self.half_extents
        axis = face_axis[faces]
        side = np.where(faces % 2 == 0, -1.0, 1.0)
        pts[np.arange(n), axis] = side * self.half_extents[axis]
        return self.center + pts

    def normalized(self, t):
        return Box((self.center - t.centroid) / t.scale, self.half_extents / t.scale)

    @property
    def spec(self):
        return f"box:{_fmt([*self.center, *self.half_extents])}"


def parse_surface(spec: str) -> AnalyticSurface:
    """Parse ``kind:comma,separated,params``.

    ``plane:nx,ny,nz,offset`` | ``sphere:cx,cy,cz,r`` |
    ``torus:cx,cy,cz,R,r`` | ``box:cx,cy,cz,hx,hy,hz``
    """
    kind, _, rest = spec.partition(":")
    try:
        vals = [float(v) for v in rest.split(",")] if rest else []
    except ValueError:
        raise ValueError(f"bad surface parameters in {spec!r}") from None
    expected = {"plane": 4, "sphere": 4, "torus": 5, "box": 6}
    if kind not in expected:
        raise ValueError(f"unknown surface kind {kind!r}")
    if len(vals) != expected[kind]:
        raise ValueError(f"{kind} takes {expected[kind]} parameters, got {len(vals)}")
    if kind == "plane":
        return Plane(vals[:3], vals[3])
    if kind == "sphere":
        return Sphere(vals[:3], vals[3])
    if kind == "torus":
        return Torus(vals[:3], vals[3], vals[4])
    return Box(vals[:3], vals[3:])
