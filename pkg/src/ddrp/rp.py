"""Oblivious random projections, their exact variance, and a Monte-Carlo check.

Randomness comes from a counter-based SplitMix64 stream: the ``c``-th
64-bit word under seed ``s`` is ``mix(key(s) + (c + 1) * GOLDEN)``, with
``key(s) = mix(s + GOLDEN)``. A matrix entry is therefore a pure function
of (seed, row, column), which lets many trial seeds be generated in one
vectorized call and keeps threaded runs bit-identical to serial ones.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


class ProjectionKind(str, enum.Enum):
    SIGN = "sign"
    GAUSSIAN = "gaussian"
    IDENTITY = "identity"  # debug only: k == d, R = I


# Constant C of the valid-projection variance bound, per kind.
VARIANCE_CONSTANT = {ProjectionKind.SIGN: 1.0, ProjectionKind.GAUSSIAN: 2.0}


@dataclass(frozen=True)
class ProjectionSpec:
    seed: int
    input_dim: int
    target_dim: int
    kind: ProjectionKind = ProjectionKind.SIGN

    def __post_init__(self):
        object.__setattr__(self, "kind", ProjectionKind(self.kind))
        if self.input_dim < 1 or self.target_dim < 1:
            raise DimensionError("projection dimensions must be positive")
        if self.target_dim > self.input_dim:
            raise DimensionError(
                f"target dim {self.target_dim} exceeds input dim {self.input_dim}")
        if self.kind is ProjectionKind.IDENTITY and self.target_dim != self.input_dim:
            raise DimensionError("identity projection requires k == d")

    def with_seed(self, seed):
        return ProjectionSpec(seed, self.input_dim, self.target_dim, self.kind)

    def with_target(self, k):
        return ProjectionSpec(self.seed, self.input_dim, k, self.kind)


@dataclass(frozen=True)
class ProjectionMatrix:
    spec: ProjectionSpec
    values: np.ndarray  # k x d, already scaled by 1/sqrt(k)

    @property
    def k(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_keys(seeds):
    seeds = np.asarray([int(s) & _MASK for s in np.atleast_1d(seeds)], dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(seeds + _GOLDEN)


def stream_words(keys, counters):
    """Words ``counters`` of the streams ``keys``; shape (len(keys), len(counters))."""
    keys = np.asarray(keys, dtype=np.uint64)[:, None]
    c = np.asarray(counters, dtype=np.uint64)[None, :] + np.uint64(1)
    with np.errstate(over="ignore"):
        return _mix(keys + c * _GOLDEN)


def _signs(keys, k, d):
    """(T, k, d) array of +-1 (int8)."""
    per_row = -(-d // 64)
    words = stream_words(keys, np.arange(k * per_row))
    bits = np.unpackbits(words.view(np.uint8).reshape(len(keys), k, per_row * 8),
                         axis=-1, bitorder="little")[:, :, :d]
    return (1 - 2 * bits.astype(np.int8)).astype(np.int8)


def _normals(keys, k, d):
    """(T, k, d) standard normals by Box-Muller on two words per entry."""
    n = k * d
    words = stream_words(keys, np.arange(2 * n)).reshape(len(keys), n, 2)
    u = ((words >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
    z = np.sqrt(-2.0 * np.log(u[..., 0])) * np.cos(2.0 * np.pi * u[..., 1])
    return z.reshape(len(keys), k, d)


def sample_batch(seeds, k, d, kind=ProjectionKind.SIGN):
    """Unscaled entries for several seeds at once: (T, k, d) float64."""
    kind = ProjectionKind(kind)
    keys = stream_keys(seeds)
    if kind is ProjectionKind.SIGN:
        return _signs(keys, k, d).astype(np.float64)
    if kind is ProjectionKind.GAUSSIAN:
        return _normals(keys, k, d)
    return np.broadcast_to(np.eye(d), (len(keys), d, d)).copy()


def sample_projection(spec):
    """Deterministic k x d matrix for ``spec``, pre-scaled by ``1/sqrt(k)``."""
    k, d = spec.target_dim, spec.input_dim
    if spec.kind is ProjectionKind.IDENTITY:
        return ProjectionMatrix(spec, np.eye(d))
    raw = sample_batch([spec.seed], k, d, spec.kind)[0]
    return ProjectionMatrix(spec, raw / math.sqrt(k))


def identity_projection(d, seed=0):
    return sample_projection(ProjectionSpec(seed, d, d, ProjectionKind.IDENTITY))


def project_rows(m, r):
    """Row i of the output is ``R @ m[i]``; CSR input only touches nonzeros."""
    if m.shape[1] != r.d:
        raise DimensionError(f"data has {m.shape[1]} columns, projection expects {r.d}")
    if sp.issparse(m):
        return np.asarray(sp.csr_matrix(m) @ r.values.T)
    return np.asarray(m, dtype=np.float64) @ r.values.T


def _pair(x, w):
    x = np.asarray(x, dtype=np.float64).ravel()
    w = np.asarray(w, dtype=np.float64).ravel()
    if x.shape != w.shape:
        raise DimensionError(f"vector lengths differ ({x.size} vs {w.size})")
    return x, w


def sign_variance_exact(x, w, k):
    """Exact Var<Rx, Rw> for the scaled sign projection with target dim ``k``."""
    x, w = _pair(x, w)
    ip = float(x @ w)
    cross = float(np.sum(x * x * w * w))
    return (ip * ip + float(x @ x) * float(w @ w) - 2.0 * cross) / k


def gaussian_variance_exact(x, w, k):
    x, w = _pair(x, w)
    ip = float(x @ w)
    return (ip * ip + float(x @ x) * float(w @ w)) / k


def variance_bound(x, w, k, constant=1.0):
    """``(C <x,w>^2 + |x|^2 |w|^2) / k``, the valid-projection envelope."""
    x, w = _pair(x, w)
    ip = float(x @ w)
    return (constant * ip * ip + float(x @ x) * float(w @ w)) / k


def inner_product_estimates(xs, ws, base, trials, chunk=4096):
    """Projected inner products for many vector pairs.

    ``xs``/``ws`` are (P, d); trial ``t`` uses seed ``base.seed + t`` and the
    same projection for every pair. Returns a (trials, P) array.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    ws = np.atleast_2d(np.asarray(ws, dtype=np.float64))
    if xs.shape != ws.shape or xs.shape[1] != base.input_dim:
        raise DimensionError("pair arrays must both be (P, d) with d = spec input dim")
    k, d = base.target_dim, base.input_dim
    n_pairs = xs.shape[0]
    stacked = np.vstack([xs, ws]).T  # d x 2P
    out = np.empty((trials, n_pairs))
    step = max(1, chunk // k)
    for start in range(0, trials, step):
        stop = min(trials, start + step)
        seeds = [base.seed + t for t in range(start, stop)]
        raw = sample_batch(seeds, k, d, base.kind)
        proj = (raw.reshape(-1, d) @ stacked).reshape(stop - start, k, 2 * n_pairs)
        scale = 1.0 if base.kind is ProjectionKind.IDENTITY else 1.0 / k
        out[start:stop] = scale * np.einsum("tkp,tkp->tp", proj[..., :n_pairs], proj[..., n_pairs:])
    return out


def inner_product_mc(x, w, base, trials):
    """Sample mean and unbiased sample variance of ``<Rx, Rw>`` over trials."""
    if trials < 2:
        raise ValueError("need at least 2 trials for a variance")
    x, w = _pair(x, w)
    est = inner_product_estimates(x[None, :], w[None, :], base, trials)[:, 0]
    return float(est.mean()), float(est.var(ddof=1))
