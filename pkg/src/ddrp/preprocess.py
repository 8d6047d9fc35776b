"""Inner-product-preserving preprocessors and the variance objective phi.

A preprocessor is an invertible map ``A``: one family of vectors is sent
through ``A`` and the other through ``A^{-T}``, so ``<Ax, A^{-T}w> = <x, w>``
exactly while the projection variance term ``E|Ax|^2 |A^{-T}w|^2``
(called phi below) changes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import linalg
from .errors import ConfigurationError, DimensionError, SingularityError
from .moments import SecondMoment

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-9


class Preprocessor:
    """Identity map; base class of the diagonal and full variants."""

    kind = "identity"

    def __init__(self, dim=None):
        self.dim = dim

    def _check(self, m):
        if self.dim is not None and m.shape[-1] != self.dim:
            raise DimensionError(
                f"data has {m.shape[-1]} columns, preprocessor expects {self.dim}")

    def apply_x(self, m):
        self._check(m)
        return m

    def apply_w(self, m):
        self._check(m)
        return m

    def gram_x(self):
        """``A^T A`` (None means identity)."""
        return None

    def gram_w(self):
        """``A^{-1} A^{-T}`` (None means identity)."""
        return None

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class DiagonalPreprocessor(Preprocessor):
    kind = "diagonal"

    def __init__(self, scale):
        scale = np.asarray(scale, dtype=np.float64)
        if scale.ndim != 1:
            raise DimensionError("diagonal scales must be a 1-D sequence")
        if not np.all(np.isfinite(scale)) or np.any(scale <= 0.0):
            raise ValueError("diagonal scales must be finite and strictly positive")
        super().__init__(scale.shape[0])
        self.scale = scale

    def _scaled(self, m, s):
        self._check(m)
        if sp.issparse(m):
            return sp.csr_matrix(m @ sp.diags(s))
        return np.asarray(m, dtype=np.float64) * s

    def apply_x(self, m):
        return self._scaled(m, self.scale)

    def apply_w(self, m):
        return self._scaled(m, 1.0 / self.scale)

    def gram_x(self):
        return np.diag(self.scale ** 2)

    def gram_w(self):
        return np.diag(self.scale ** -2)


class FullPreprocessor(Preprocessor):
    """Dense ``A`` with an explicitly stored ``A^{-T}``."""

    kind = "full"

    def __init__(self, a, a_inv_t, tol=1e-7):
        a = np.asarray(a, dtype=np.float64)
        a_inv_t = np.asarray(a_inv_t, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape != a_inv_t.shape:
            raise DimensionError("A and A^{-T} must be square and of equal shape")
        self.residual = float(np.linalg.norm(a @ a_inv_t.T - np.eye(a.shape[0])))
        resid = self.residual
        if tol is not None and resid > tol:
            raise SingularityError(
                f"stored inverse-transpose is inconsistent with A (residual {resid:.2e})")
        super().__init__(a.shape[0])
        self.a = a
        self.a_inv_t = a_inv_t

    def apply_x(self, m):
        self._check(m)
        return linalg.matmul_transposed(m, self.a)

    def apply_w(self, m):
        self._check(m)
        return linalg.matmul_transposed(m, self.a_inv_t)

    def gram_x(self):
        return self.a.T @ self.a

    def gram_w(self):
        return self.a_inv_t.T @ self.a_inv_t


def apply_x(p, m):
    return p.apply_x(m)


def apply_w(p, m):
    return p.apply_w(m)


def _guarded_diagonals(diag_x, diag_w, eps):
    dx = np.asarray(diag_x, dtype=np.float64)
    dw = np.asarray(diag_w, dtype=np.float64)
    if dx.shape != dw.shape or dx.ndim != 1:
        raise DimensionError(f"diagonal lengths differ ({dx.shape} vs {dw.shape})")
    if np.any(dx < 0) or np.any(dw < 0):
        raise ValueError("second-moment diagonals must be non-negative")
    ok = np.ones(dx.shape, dtype=bool)
    if dx.size:
        ok &= dx >= eps * dx.max()
        ok &= dw >= eps * dw.max()
        ok &= (dx > 0) & (dw > 0)
    return dx, dw, ok


def build_quick(diag_x, diag_w, eps=DEFAULT_EPS):
    """Diagonal minimizer of phi: ``scale_i = (Sigma_W,ii / Sigma_X,ii)^{1/4}``.

    Coordinates where either diagonal falls below ``eps * max`` keep scale 1.
    """
    dx, dw, ok = _guarded_diagonals(diag_x, diag_w, eps)
    scale = np.ones_like(dx)
    scale[ok] = (dw[ok] / dx[ok]) ** 0.25
    return DiagonalPreprocessor(scale)


def lambda_scales(diag_x, lam, eps=DEFAULT_EPS):
    """``(Sigma_X,ii)^lam`` with the same zero guard as :func:`build_quick`.

    Returns ``(scale, log_diag)`` where ``log_diag`` is 0 on guarded
    coordinates, so ``d scale / d lam = scale * log_diag`` everywhere.
    """
    dx = np.asarray(diag_x, dtype=np.float64)
    if dx.ndim != 1:
        raise DimensionError("diag_x must be 1-D")
    if np.any(dx < 0):
        raise ValueError("second-moment diagonal must be non-negative")
    ok = dx > 0
    if dx.size:
        ok &= dx >= eps * dx.max()
    log_diag = np.zeros_like(dx)
    log_diag[ok] = np.log(dx[ok])
    return np.exp(lam * log_diag), log_diag


def build_lambda(diag_x, lam, eps=DEFAULT_EPS):
    """Diagonal power preprocessor ``D_X^lam``; ``lam = 0`` is the identity."""
    scale, _ = lambda_scales(diag_x, lam, eps)
    return DiagonalPreprocessor(scale)


def _require_full(m, name):
    if not isinstance(m, SecondMoment) or m.full is None:
        raise ConfigurationError(f"{name}: a full second-moment matrix is required")
    return m.full


@dataclass(frozen=True)
class OptimalParts:
    """Intermediate factors of the optimal construction, for diagnostics."""

    q_x: linalg.Factorization
    q_w: linalg.Factorization
    cross_svd: linalg.Svd

    @property
    def nuclear_norm(self):
        return float(np.sum(self.cross_svd.singular_values))


def optimal_parts(sigma_x, sigma_w, floor=linalg.DEFAULT_FLOOR):
    sx = _require_full(sigma_x, "build_optimal")
    sw = _require_full(sigma_w, "build_optimal")
    if sx.shape != sw.shape:
        raise DimensionError(f"second moments differ in shape ({sx.shape} vs {sw.shape})")
    try:
        fx = linalg.factor_covariance(sx, floor)
        fw = linalg.factor_covariance(sw, floor)
    except SingularityError as exc:
        raise SingularityError(
            f"{exc}; regularize the second moments or raise the eigenvalue floor") from exc
    for name, f in (("X", fx), ("W", fw)):
        if f.n_clamped:
            log.warning("Sigma_%s: %d eigenvalue(s) clamped to the floor; phi refers to "
                        "the regularized matrix", name, f.n_clamped)
    return OptimalParts(fx, fw, linalg.svd(fx.q @ fw.q.T))


def build_optimal(sigma_x, sigma_w, floor=linalg.DEFAULT_FLOOR):
    """Global minimizer of phi from the canonical correlation structure.

    With ``Sigma_X = Qx^T Qx``, ``Sigma_W = Qw^T Qw`` and ``Qx Qw^T = U D V^T``:
    ``A = D^{1/2} U^T Qx^{-T}`` and ``A^{-T} = D^{1/2} V^T Qw^{-T}``.
    """
    parts = optimal_parts(sigma_x, sigma_w, floor)
    return _from_parts(parts)


def _from_parts(parts):
    s = parts.cross_svd
    root = np.sqrt(s.singular_values)[:, None]
    a = root * (s.u.T @ linalg.inverse_transpose_factor(parts.q_x))
    a_inv_t = root * (s.v.T @ linalg.inverse_transpose_factor(parts.q_w))
    p = FullPreprocessor(a, a_inv_t, tol=None)
    if p.residual > 1e-7:
        log.warning("optimal preprocessor is ill-conditioned: |A A^{-1} - I|_F = %.2e",
                    p.residual)
    return p


def _trace_with(gram, m):
    """``Tr(gram @ Sigma)``; only the diagonal of Sigma is needed for diagonal grams."""
    if gram is None:
        return float(np.sum(m.diag))
    off = gram - np.diag(np.diag(gram))
    if not np.any(off):
        return float(np.diag(gram) @ m.diag)
    if m.full is None:
        raise ConfigurationError("phi of a full preprocessor needs full second moments")
    return float(np.sum(gram * m.full))


def phi_exact(p, sigma_x, sigma_w):
    """``Tr(A^T A Sigma_X) * Tr(A^{-1} A^{-T} Sigma_W)``."""
    if isinstance(p, DiagonalPreprocessor):
        s2 = p.scale ** 2
        return float(s2 @ sigma_x.diag) * float((1.0 / s2) @ sigma_w.diag)
    return _trace_with(p.gram_x(), sigma_x) * _trace_with(p.gram_w(), sigma_w)


def phi_monte_carlo(p, sampler_x, sampler_w, trials, seed, chunk=65536):
    """Sample mean of ``|Ax|^2 |A^{-T}w|^2`` over independent draws.

    Samplers are called as ``sampler(rng, n)`` and return an (n, d) array.
    The x and w streams are spawned from ``seed`` so they are independent.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    ss = np.random.SeedSequence(seed)
    rng_x, rng_w = (np.random.default_rng(s) for s in ss.spawn(2))
    total = 0.0
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        ax = linalg.as_dense(p.apply_x(sampler_x(rng_x, n)))
        aw = linalg.as_dense(p.apply_w(sampler_w(rng_w, n)))
        total += float(np.sum(np.sum(ax * ax, axis=1) * np.sum(aw * aw, axis=1)))
        done += n
    return total / trials


def gaussian_sampler(sigma):
    """Zero-mean Gaussian rows with second moment ``sigma``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    eig = linalg.sym_eig(sigma)
    root = np.sqrt(np.clip(eig.eigenvalues, 0.0, None))[:, None] * eig.eigenvectors.T

    def draw(rng, n):
        return rng.standard_normal((n, sigma.shape[0])) @ root

    return draw


def constant_sampler(vector):
    vector = np.asarray(vector, dtype=np.float64)

    def draw(rng, n):
        return np.broadcast_to(vector, (n, vector.size)).copy()

    return draw


def rows_sampler(data):
    """Uniform draws (with replacement) from the rows of a matrix."""
    data = linalg.as_dense(data)

    def draw(rng, n):
        return data[rng.integers(0, data.shape[0], size=n)]

    return draw


@dataclass(frozen=True)
class PhiReport:
    phi_identity: float
    phi_quick: float
    phi_optimal: float
    optimal_lower_bound: float

    def to_dict(self):
        return {"type": "phi_report", "phi_identity": self.phi_identity,
                "phi_quick": self.phi_quick, "phi_optimal": self.phi_optimal,
                "optimal_lower_bound": self.optimal_lower_bound}

    @classmethod
    def from_dict(cls, d):
        return cls(d["phi_identity"], d["phi_quick"], d["phi_optimal"],
                   d["optimal_lower_bound"])


def phi_report(sigma_x, sigma_w, eps=DEFAULT_EPS, floor=linalg.DEFAULT_FLOOR, slack=1e-9):
    """phi for identity, quick and optimal preprocessors plus the attained bound."""
    dim = sigma_x.dim
    identity = phi_exact(Preprocessor(dim), sigma_x, sigma_w)
    quick = phi_exact(build_quick(sigma_x.diag, sigma_w.diag, eps), sigma_x, sigma_w)
    parts = optimal_parts(sigma_x, sigma_w, floor)
    sx = _regularized(parts.q_x) if parts.q_x.n_clamped else sigma_x
    sw = _regularized(parts.q_w) if parts.q_w.n_clamped else sigma_w
    optimal = phi_exact(_from_parts(parts), sx, sw)
    bound = parts.nuclear_norm ** 2
    report = PhiReport(identity, quick, optimal, bound)
    tol = slack * max(identity, 1.0)
    if not (optimal <= quick + tol and quick <= identity + tol):
        raise ArithmeticError(f"phi ordering violated: {report}")
    return report


def _regularized(f):
    full = f.q.T @ f.q
    return SecondMoment(full.shape[0], np.diag(full).copy(), full)
