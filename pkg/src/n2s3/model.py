"""Patch-based MLP score estimator with hand-written backpropagation.

The network sees only the offsets of a point's ``k_patch`` nearest neighbors
(itself included) relative to that point, ordered by (distance, index), and
returns a 3-vector estimate of the score at that point. Because only offsets
enter, the predicted score field is unchanged when the cloud is translated.

Two input frames are supported:

``"global"``
    Offsets are flattened as they are.
``"local"`` (default)
    Each patch is rotated into the eigenbasis of its neighbor covariance
    (normal axis first, signs fixed by the mean offset) and divided by a
    per-cloud length scale, the median normal spread over all patches. The
    output is divided by the same scale and rotated back, so the score field
    is rotation-equivariant and obeys ``S(a y) = S(y) / a``. One set of
    weights then serves every noise level.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import KnnIndex, as_cloud, build_knn_index
from .noise import rng_from_seed


class ArchMismatch(ValueError):
    pass


class VersionMismatch(ValueError):
    """Parameter file has the wrong magic bytes or format version."""


class ChecksumMismatch(ValueError):
    pass


ACTIVATIONS = ("tanh", "softplus")
FRAMES = ("global", "local")


@dataclass(frozen=True)
class Architecture:
    """Layer layout of the score MLP.

    ``input_scale`` multiplies the (framed) offsets before the first layer
    and ``output_scale`` multiplies the linear head. Both are fixed, not
    trained.
    """

    k_patch: int = 32
    hidden: tuple[int, ...] = (128, 128, 64)
    activation: str = "tanh"
    frame: str = "local"
    input_scale: float = 0.1
    output_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.k_patch < 1:
            raise ValueError("k_patch must be >= 1")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}")
        if self.frame == "local" and self.k_patch < 4:
            raise ValueError("frame='local' needs k_patch >= 4")
        if not (self.input_scale > 0 and self.output_scale > 0):
            raise ValueError("input_scale and output_scale must be positive")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (3 * self.k_patch, *self.hidden, 3)

    @property
    def n_params(self) -> int:
        dims = self.layer_dims
        return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


def _act(name, z):
    if name == "tanh":
        a = np.tanh(z)
        return a, 1.0 - a * a
    a = np.logaddexp(0.0, z)
    return a, 0.5 * (1.0 + np.tanh(0.5 * z))


def local_frames(patches: np.ndarray) -> np.ndarray:
    """Orthonormal frame per patch from the neighbor covariance, ``(M, 3, 3)``.

    Columns are eigenvectors in ascending eigenvalue order, so the first is
    the surface normal estimate. The query row (index 0) is left out, and
    each axis is signed so the mean neighbor offset projects onto it
    non-negatively.
    """
    nbrs = patches[:, 1:]
    mean = nbrs.mean(axis=1)
    centered = nbrs - mean[:, None, :]
    cov = np.einsum("mki,mkj->mij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    proj = np.einsum("mi,mia->ma", mean, vecs)
    return vecs * np.where(proj < 0, -1.0, 1.0)[:, None, :]


def to_local(patches: np.ndarray, frames: np.ndarray) -> np.ndarray:
    return np.einsum("mkj,mja->mka", patches, frames)


def normal_spreads(local_patches: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    """RMS spread of neighbors along the normal axis of each framed patch.

    Floored at ``floor`` times the RMS neighbor radius so noise-free flat
    patches stay positive.
    """
    nbrs = local_patches[:, 1:]
    normal = nbrs[:, :, 0]
    spread = np.sqrt(np.mean((normal - normal.mean(axis=1, keepdims=True)) ** 2, axis=1))
    radius = np.sqrt(np.mean(np.sum(nbrs * nbrs, axis=2), axis=1))
    return np.maximum(spread, floor * radius)


def cloud_scale(patches: np.ndarray) -> float:
    """Median normal spread over all patches of one cloud."""
    patches = np.asarray(patches, dtype=np.float64)
    scale = float(np.median(normal_spreads(to_local(patches, local_frames(patches)))))
    if not scale > 0:
        raise ValueError("patches are degenerate; cloud scale is zero")
    return scale


@dataclass
class ScoreNetwork:
    arch: Architecture
    params: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (self.arch.n_params,):
            raise ArchMismatch(
                f"expected {self.arch.n_params} parameters, got {self.params.shape}")

    @property
    def n_params(self) -> int:
        return self.arch.n_params

    @property
    def needs_scale(self) -> bool:
        return self.arch.frame == "local"

    def layers(self, params=None):
        """Views ``[(W, b), ...]`` into a flat parameter vector; W is (in, out)."""
        p = self.params if params is None else params
        out, pos = [], 0
        dims = self.arch.layer_dims
        for a, b in zip(dims[:-1], dims[1:]):
            W = p[pos:pos + a * b].reshape(a, b)
            pos += a * b
            out.append((W, p[pos:pos + b]))
            pos += b
        return out

    def copy(self) -> "ScoreNetwork":
        return ScoreNetwork(self.arch, self.params.copy())

    def _prepare(self, patches, scale):
        x = np.asarray(patches, dtype=np.float64)
        k = self.arch.k_patch
        if x.ndim != 3 or x.shape[1:] != (k, 3):
            raise ArchMismatch(f"expected patches of shape (M, {k}, 3), got {x.shape}")
        frames = None
        if self.arch.frame == "local":
            if scale is None:
                raise ValueError("frame='local' needs the cloud scale (see cloud_scale)")
            if not scale > 0:
                raise ValueError("cloud scale must be positive")
            frames = local_frames(x) / scale
            x = to_local(x, frames)
        return x.reshape(len(x), 3 * k) * self.arch.input_scale, frames

    def _forward_cache(self, patches, scale, dtype=np.float64):
        h, frames = self._prepare(patches, scale)
        if dtype != np.float64:
            h = h.astype(dtype)
            frames = None if frames is None else frames.astype(dtype)
        cache = []
        layers = self.layers(self.params.astype(dtype, copy=False))
        for W, b in layers[:-1]:
            a, da = _act(self.arch.activation, h @ W + b)
            cache.append((h, da))
            h = a
        W, b = layers[-1]
        cache.append((h, None))
        out = (h @ W + b) * self.arch.output_scale
        if frames is not None:
            out = np.einsum("mja,ma->mj", frames, out)
        return out, cache, frames

    def forward_batch(self, patches, scale: float | None = None, dtype=np.float64) -> np.ndarray:
        """Scores for a stack of ``(M, k_patch, 3)`` patches, shape ``(M, 3)``.

        ``dtype`` sets the layer arithmetic; ``np.longdouble`` serves as a
        high-precision reference for finite-difference checks.
        """
        return self._forward_cache(patches, scale, dtype)[0]

    def forward(self, patch, scale: float | None = None) -> np.ndarray:
        return self.forward_batch(np.asarray(patch)[None], scale)[0]

    def backward_batch(self, patches, upstream, scale: float | None = None) -> np.ndarray:
        """Gradient of ``sum_m upstream[m] . forward(patches[m])`` w.r.t. the parameters.

        The frame and the scale depend on the input only, so they pass the
        upstream gradient through as a fixed linear map.
        """
        out, cache, frames = self._forward_cache(patches, scale)
        g = np.asarray(upstream, dtype=np.float64).reshape(out.shape)
        if frames is not None:
            g = np.einsum("mja,mj->ma", frames, g)
        g = g * self.arch.output_scale
        grads = []
        layers = self.layers()
        for li in range(len(layers) - 1, -1, -1):
            W, _ = layers[li]
            h_in = cache[li][0]
            grads.append((h_in.T @ g, g.sum(axis=0)))
            if li > 0:
                g = (g @ W.T) * cache[li - 1][1]
        flat = []
        for dW, db in reversed(grads):
            flat.append(dW.ravel())
            flat.append(db)
        return np.concatenate(flat)

    def backward(self, patch, upstream_grad, scale: float | None = None) -> np.ndarray:
        return self.backward_batch(np.asarray(patch)[None],
                                   np.asarray(upstream_grad)[None], scale)


def init_params(arch: Architecture, seed: int) -> ScoreNetwork:
    """LeCun-uniform weights ``U(-sqrt(3/fan_in), sqrt(3/fan_in))``, zero biases."""
    rng = rng_from_seed(seed)
    chunks = []
    dims = arch.layer_dims
    for a, b in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(3.0 / a)
        chunks.append(rng.uniform(-lim, lim, size=a * b))
        chunks.append(np.zeros(b))
    return ScoreNetwork(arch, np.concatenate(chunks))


def extract_patches(pc, idx: KnnIndex | None, k_patch: int,
                    indices=None) -> np.ndarray:
    """Centered k-NN offsets for many points, shape ``(M, k_patch, 3)``."""
    pc = as_cloud(pc)
    if idx is None:
        idx = build_knn_index(pc)
    centers = pc if indices is None else pc[np.asarray(indices)]
    nbr, _ = idx.query(centers, k_patch)
    return idx.points[nbr] - centers[:, None, :]


def extract_patch(pc, idx: KnnIndex, i: int, k_patch: int) -> np.ndarray:
    """Offsets of the ``k_patch`` nearest neighbors of point ``i``, shape ``(k_patch, 3)``."""
    return extract_patches(pc, idx, k_patch, indices=[i])[0]


# Parameter file, little-endian throughout:
#   b"N2S3" | u32 version | u32 k_patch | u32 activation | u32 frame
#   | f64 input_scale | f64 output_scale | u32 n_dims | u32 dims[n_dims]
#   | u64 n_params | f64 params[n_params] | u32 crc32(all preceding bytes)
MAGIC = b"N2S3"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIddI")


def save_params(net: ScoreNetwork, path) -> None:
    arch = net.arch
    dims = arch.layer_dims
    body = bytearray(_HEADER.pack(MAGIC, FORMAT_VERSION, arch.k_patch,
                                  ACTIVATIONS.index(arch.activation),
                                  FRAMES.index(arch.frame), arch.input_scale,
                                  arch.output_scale, len(dims)))
    body += struct.pack(f"<{len(dims)}IQ", *dims, net.n_params)
    body += net.params.astype("<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(body))
    Path(path).write_bytes(bytes(body))


def load_params(path) -> ScoreNetwork:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size + 4 or data[:4] != MAGIC:
        raise VersionMismatch(f"{path}: not an N2S3 parameter file")
    (_, version, k_patch, act, frame, input_scale, output_scale,
     n_dims) = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise ChecksumMismatch(f"{path}: CRC32 mismatch")
    pos = _HEADER.size
    if len(data) - 4 < pos + 4 * n_dims + 8:
        raise ArchMismatch(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{n_dims}I", data, pos)
    pos += 4 * n_dims
    (n_params,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    payload = len(data) - 4 - pos
    if payload != 8 * n_params:
        raise ArchMismatch(f"{path}: header declares {n_params} parameters, "
                           f"payload holds {payload / 8:g}")
    if act >= len(ACTIVATIONS) or frame >= len(FRAMES):
        raise ArchMismatch(f"{path}: unknown activation or frame tag")
    if n_dims < 2 or dims[0] != 3 * k_patch or dims[-1] != 3:
        raise ArchMismatch(f"{path}: layer dims {dims} do not match k_patch={k_patch}")
    try:
        arch = Architecture(k_patch=k_patch, hidden=dims[1:-1],
                            activation=ACTIVATIONS[act], frame=FRAMES[frame],
                            input_scale=input_scale, output_scale=output_scale)
        params = np.frombuffer(data, dtype="<f8", count=n_params, offset=pos)
        return ScoreNetwork(arch, params.astype(np.float64))
    except ValueError as exc:
        raise ArchMismatch(f"{path}: {exc}") from None
