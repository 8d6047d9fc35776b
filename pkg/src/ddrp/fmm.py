"""Approximate matrix multiplication through preprocessed random projections.

Rows are the vectors: ``X`` is n1 x d, ``W`` is n2 x d and the target is
``X @ W.T``. The sketch is ``(X~ R^T)(W~ R^T)^T`` where ``X~``/``W~`` are
the preprocessed inputs and ``R`` is a k x d oblivious projection.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import linalg, moments, preprocess, rp
from .errors import ConfigurationError, DimensionError


class MethodKind(str, enum.Enum):
    OBLIVIOUS = "oblivious"
    QUICK = "quick"
    OPTIMAL = "optimal"


@dataclass(frozen=True)
class FmmMethod:
    kind: MethodKind
    projection_kind: rp.ProjectionKind = rp.ProjectionKind.SIGN

    def __post_init__(self):
        object.__setattr__(self, "kind", MethodKind(self.kind))
        object.__setattr__(self, "projection_kind", rp.ProjectionKind(self.projection_kind))

    @property
    def name(self):
        return self.kind.value


@dataclass(frozen=True)
class TrialStats:
    method: str
    k: int
    trials: int
    mean_sq_error: float
    std_sq_error: float
    sem_sq_error: float
    projection: str = "sign"

    def to_dict(self):
        return {"type": "trial_stats", "method": self.method, "projection": self.projection,
                "k": self.k, "trials": self.trials, "mean_sq_error": self.mean_sq_error,
                "std_sq_error": self.std_sq_error, "sem_sq_error": self.sem_sq_error}

    @classmethod
    def from_dict(cls, d):
        return cls(d["method"], int(d["k"]), int(d["trials"]), float(d["mean_sq_error"]),
                   float(d["std_sq_error"]), float(d["sem_sq_error"]),
                   d.get("projection", "sign"))


def _check_pair(x, w):
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"X has {x.shape[1]} features but W has {w.shape[1]}")


def exact_product(x, w):
    _check_pair(x, w)
    return linalg.matmul_transposed(x, w)


def squared_error(exact, approx):
    exact = np.asarray(exact)
    approx = np.asarray(approx)
    if exact.shape != approx.shape:
        raise DimensionError(f"shape mismatch {exact.shape} vs {approx.shape}")
    diff = exact - approx
    return float(np.sum(diff * diff))


def build_preprocessor(method, moments_x=None, moments_w=None, eps=preprocess.DEFAULT_EPS,
                       floor=linalg.DEFAULT_FLOOR, dim=None):
    method = method if isinstance(method, FmmMethod) else FmmMethod(method)
    if method.kind is MethodKind.OBLIVIOUS:
        return preprocess.Preprocessor(dim if moments_x is None else moments_x.dim)
    if moments_x is None or moments_w is None:
        raise ConfigurationError(f"method {method.name} needs second moments of both inputs")
    if method.kind is MethodKind.QUICK:
        return preprocess.build_quick(moments_x.diag, moments_w.diag, eps)
    if not (moments_x.has_full and moments_w.has_full):
        raise ConfigurationError("optimal method requires full second moments of both inputs")
    return preprocess.build_optimal(moments_x, moments_w, floor)


def estimate_moments(x, w, method_kinds, sample_rows=None, seed=0):
    """Moments for the requested methods, optionally from a row subsample."""
    kinds = {MethodKind(m.kind if isinstance(m, FmmMethod) else m) for m in method_kinds}
    if kinds <= {MethodKind.OBLIVIOUS}:
        return None, None
    if sample_rows:
        rng = np.random.default_rng(seed)
        x = x[np.sort(rng.choice(x.shape[0], min(sample_rows, x.shape[0]), replace=False))]
        w = w[np.sort(rng.choice(w.shape[0], min(sample_rows, w.shape[0]), replace=False))]
    if MethodKind.OPTIMAL in kinds:
        return moments.estimate_full(x), moments.estimate_full(w)
    return moments.estimate_diag(x), moments.estimate_diag(w)


def approx_product(x, w, method, spec, moments_x=None, moments_w=None, preprocessor=None):
    """Sketched ``X W^T`` for one method and one projection."""
    _check_pair(x, w)
    if spec.input_dim != x.shape[1]:
        raise DimensionError(f"projection input dim {spec.input_dim} != {x.shape[1]}")
    p = preprocessor or build_preprocessor(method, moments_x, moments_w, dim=x.shape[1])
    r = rp.sample_projection(spec)
    xs = rp.project_rows(p.apply_x(x), r)
    ws = rp.project_rows(p.apply_w(w), r)
    return xs @ ws.T


def _stats(method, k, errors, projection):
    errors = np.asarray(errors, dtype=np.float64)
    n = errors.size
    mean = math.fsum(errors) / n
    std = math.sqrt(math.fsum((errors - mean) ** 2) / (n - 1)) if n > 1 else 0.0
    return TrialStats(method, k, n, mean, std, std / math.sqrt(n), projection)


def run_benchmark(x, w, methods, ks, trials=100, seed=0, threads=1, moment_rows=None,
                  trial_seeds=None):
    """Mean and std of the squared Frobenius error per (method, k).

    Trial ``t`` uses projection seed ``seed + t`` for every method, so the
    methods are compared on identical projections (paired trials).
    ``trial_seeds`` overrides the per-trial seeds (used in tests).
    """
    if trials < 2:
        raise ValueError("run_benchmark needs at least 2 trials")
    _check_pair(x, w)
    methods = [m if isinstance(m, FmmMethod) else FmmMethod(m) for m in methods]
    d = x.shape[1]
    for k in ks:
        if not 1 <= k <= d:
            raise ConfigurationError(f"target dimension {k} outside [1, {d}]")
    mx, mw = estimate_moments(x, w, methods, moment_rows, seed)
    preps = [build_preprocessor(m, mx, mw, dim=d) for m in methods]
    prepared = [(linalg.as_dense(p.apply_x(x)), linalg.as_dense(p.apply_w(w))) for p in preps]
    exact = exact_product(x, w)
    seeds = list(trial_seeds) if trial_seeds is not None else [seed + t for t in range(trials)]
    if len(seeds) != trials:
        raise ValueError("trial_seeds must have one entry per trial")

    def one_trial(k, kind, t):
        r = rp.sample_projection(rp.ProjectionSpec(seeds[t], d, k, kind))
        out = []
        for (xp, wp), method in zip(prepared, methods):
            if method.projection_kind is not kind:
                out.append(None)
                continue
            approx = rp.project_rows(xp, r) @ rp.project_rows(wp, r).T
            out.append(squared_error(exact, approx))
        return out

    results = []
    for k in ks:
        errors = {i: np.empty(trials) for i in range(len(methods))}
        kinds = sorted({m.projection_kind for m in methods}, key=lambda q: q.value)
        for kind in kinds:
            jobs = range(trials)
            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    rows = list(pool.map(lambda t: one_trial(k, kind, t), jobs))
            else:
                rows = [one_trial(k, kind, t) for t in jobs]
            for t, row in enumerate(rows):
                for i, e in enumerate(row):
                    if e is not None:
                        errors[i][t] = e
        for i, method in enumerate(methods):
            results.append(_stats(method.name, k, errors[i], method.projection_kind.value))
    return results


def ratio_by_k(stats, numerator, denominator):
    """``mean_sq_error`` ratio per k between two methods."""
    table = {(s.method, s.k): s.mean_sq_error for s in stats}
    ks = sorted({s.k for s in stats})
    return {k: table[(numerator, k)] / table[(denominator, k)] for k in ks}
