"""Dense/sparse containers and Jacobi-based symmetric eigen and SVD routines.

Dense matrices are plain ``numpy.ndarray`` (float64, row-major, rows are
vectors). Sparse matrices are ``scipy.sparse.csr_matrix`` with sorted,
duplicate-free column indices.

Both decompositions use cyclic Jacobi rotations in round-robin ("chess
tournament") order: every round rotates ``n // 2`` disjoint index pairs at
once, so a round is a handful of vectorized numpy operations and a sweep
visits every pair exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    ConvergenceError,
    DegenerateCovarianceError,
    DimensionError,
    SingularityError,
    SymmetryError,
)

MAX_SWEEPS = 60
DEFAULT_FLOOR = 1e-10
MIN_FLOOR = 1e-12


@dataclass(frozen=True)
class SymEig:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns


@dataclass(frozen=True)
class Svd:
    u: np.ndarray
    singular_values: np.ndarray  # descending, >= 0
    v: np.ndarray

    def reconstruct(self):
        return (self.u * self.singular_values) @ self.v.T


@dataclass(frozen=True)
class Factorization:
    """``q.T @ q == sigma`` with ``q = diag(sqrt(eigenvalues)) @ eigenvectors.T``.

    ``eigenvalues`` are the clamped values actually used to build ``q``;
    ``n_clamped`` counts how many were raised to the floor.
    """

    q: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n_clamped: int = 0


def as_dense(m):
    if sp.issparse(m):
        return np.asarray(m.toarray(), dtype=np.float64)
    return np.asarray(m, dtype=np.float64)


def as_csr(m):
    """Canonical CSR copy: sorted indices, duplicates summed."""
    out = sp.csr_matrix(m, dtype=np.float64, copy=True)
    out.sum_duplicates()
    out.sort_indices()
    return out


def check_finite(m, what="matrix"):
    values = m.data if sp.issparse(m) else np.asarray(m)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite entries")


# rounds on matrices up to this size are applied as one dense rotation (BLAS);
# larger ones update the touched rows/columns in place
DENSE_ROUND_MAX = 64


def _round_robin(n):
    """(p, q) index arrays covering every pair once per sweep, p < q."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(players[: m // 2])
        q = np.array(players[m // 2:][::-1])
        keep = (p < n) & (q < n)
        p, q = p[keep], q[keep]
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


class _Round:
    """One round of disjoint rotations with precomputed flat indices."""

    def __init__(self, n, p, q):
        self.p, self.q = p, q
        self.pq = p * n + q
        self.qp = q * n + p
        self.dense = n <= DENSE_ROUND_MAX
        if self.dense:
            self.slots = np.concatenate([p * n + p, q * n + q, self.pq, self.qp])
            self.base = np.eye(n)
            self.base.flat[self.slots] = 0.0

    def matrix(self, c, s):
        j = self.base.copy()
        j.flat[self.slots] = np.concatenate([c, c, s, -s])
        return j

    def _columns(self, m, c, s, active):
        p, q, c, s = self.p[active], self.q[active], c[active], s[active]
        mp, mq = m[:, p], m[:, q]
        m[:, p] = mp * c - mq * s
        m[:, q] = mp * s + mq * c
        return m

    def rotate_pair(self, g, v, c, s, active):
        """``(g @ J, v @ J)``; the large case updates active column pairs in place."""
        if self.dense:
            j = self.matrix(c, s)
            return g @ j, v @ j
        return self._columns(g, c, s, active), self._columns(v, c, s, active)

    def rotate_symmetric(self, a, v, c, s, active):
        """``(J^T a J, v J)`` with the annihilated pairs of ``a`` set to exactly zero."""
        if self.dense:
            j = self.matrix(c, s)
            a = j.T @ a @ j
            v = v @ j
        else:
            p, q, cc, ss = self.p[active], self.q[active], c[active, None], s[active, None]
            ap, aq = a[p, :], a[q, :]
            a[p, :] = cc * ap - ss * aq
            a[q, :] = ss * ap + cc * aq
            a = self._columns(a, c, s, active)
            v = self._columns(v, c, s, active)
        # zero in exact arithmetic; keeping the roundoff residue (~eps*|a_pp|)
        # stalls convergence on graded or rank-deficient input
        a.flat[self.pq[active]] = 0.0
        a.flat[self.qp[active]] = 0.0
        return a, v


def _rounds(n):
    return [_Round(n, p, q) for p, q in _round_robin(n)]


def _rotation(app, aqq, apq, active):
    """Cosine/sine zeroing ``apq`` of each 2x2 symmetric block; identity where inactive."""
    safe = np.where(active, apq, 1.0)
    with np.errstate(over="ignore"):
        tau = (aqq - app) / (2.0 * safe)
        t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
    t = np.where(active, t, 0.0)
    c = 1.0 / np.hypot(1.0, t)
    return c, t * c


def _off_norm(a):
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return np.linalg.norm(off)


def sym_eig(s, tol=1e-15):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Eigenvalues come back sorted descending (stable with respect to the
    Jacobi output order on ties) with the matching unit eigenvectors as
    columns.
    """
    a = as_dense(s)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"sym_eig needs a square matrix, got shape {a.shape}")
    check_finite(a)
    n = a.shape[0]
    norm = np.linalg.norm(a)
    if np.linalg.norm(a - a.T) > 1e-10 * norm:
        raise SymmetryError("sym_eig input is not symmetric within 1e-10 relative")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if n == 1 or norm == 0.0:
        return SymEig(np.diag(a).copy(), v)

    rounds = _rounds(n)
    eps = np.finfo(float).eps
    # entries below eps*|S|/n add at most eps*|S| of backward error in total
    tiny = eps * norm / n
    for _ in range(MAX_SWEEPS):
        if _off_norm(a) <= tol * norm:
            break
        rotated = False
        for r in rounds:
            diag = np.diagonal(a)
            app, aqq, apq = diag[r.p], diag[r.q], a.flat[r.pq]
            # negligible entries are left alone; a sweep without rotations ends the loop
            active = np.abs(apq) > np.maximum(eps * np.sqrt(np.abs(app * aqq)), tiny)
            if not active.any():
                continue
            rotated = True
            c, sn = _rotation(app, aqq, apq, active)
            a, v = r.rotate_symmetric(a, v, c, sn, active)
        if not rotated:
            break
    else:
        raise ConvergenceError(
            f"Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps "
            f"(off-diagonal norm {_off_norm(a):.3e})")

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return SymEig(w[order], v[:, order])


def _complete_basis(u, keep):
    """Replace columns of ``u`` not in ``keep`` with an orthonormal completion."""
    m, r = u.shape
    good = u[:, keep]
    q, _ = np.linalg.qr(np.hstack([good, np.eye(m)]), mode="reduced")
    extra = q[:, good.shape[1]:]
    out = u.copy()
    out[:, ~keep] = extra[:, : int(np.count_nonzero(~keep))]
    return out


def _one_sided_jacobi(g, tol):
    m, n = g.shape
    v = np.eye(n)
    if n == 1:
        return g, v
    rounds = _rounds(n)
    for _ in range(MAX_SWEEPS):
        worst = 0.0
        for r in rounds:
            gp, gq = g[:, r.p], g[:, r.q]
            alpha = np.einsum("ij,ij->j", gp, gp)
            beta = np.einsum("ij,ij->j", gq, gq)
            gamma = np.einsum("ij,ij->j", gp, gq)
            scale = np.sqrt(alpha * beta)
            with np.errstate(divide="ignore", invalid="ignore"):
                rel = np.where(scale > 0.0, np.abs(gamma) / scale, 0.0)
            active = rel > tol
            if not active.any():
                continue
            worst = max(worst, float(rel.max()))
            # same 2x2 rotation as the symmetric case on [[alpha, gamma], [gamma, beta]]
            c, s = _rotation(alpha, beta, gamma, active)
            g, v = r.rotate_pair(g, v, c, s, active)
        if worst <= tol:
            return g, v
    raise ConvergenceError(f"one-sided Jacobi SVD did not converge in {MAX_SWEEPS} sweeps")


def svd(m, tol=1e-15):
    """Thin SVD ``m = u @ diag(s) @ v.T`` by one-sided (Hestenes) Jacobi."""
    a = as_dense(m)
    if a.ndim != 2:
        raise DimensionError(f"svd needs a 2-D matrix, got shape {a.shape}")
    check_finite(a)
    rows, cols = a.shape
    if rows < cols:
        t = svd(a.T, tol)
        return Svd(t.v, t.singular_values, t.u)

    g, v = _one_sided_jacobi(a.copy(), tol)
    sigma = np.linalg.norm(g, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, g, v = sigma[order], g[:, order], v[:, order]
    cutoff = max(rows, cols) * np.finfo(float).eps * (sigma[0] if sigma.size else 0.0)
    keep = sigma > cutoff
    u = np.zeros_like(g)
    u[:, keep] = g[:, keep] / sigma[keep]
    if not np.all(keep):
        u = _complete_basis(u, keep)
    return Svd(u, sigma, v)


def _clamp_floor(floor):
    return max(float(floor), MIN_FLOOR)


def factor_covariance(sigma, floor=DEFAULT_FLOOR):
    """Factor a PSD second-moment matrix as ``q.T @ q``.

    Eigenvalues below ``max(floor, 1e-12) * lambda_max`` are raised to that
    level, so ``q`` is always invertible; the returned factorization then
    describes the regularized matrix.
    """
    eig = sym_eig(sigma)
    lam = eig.eigenvalues
    lam_max = lam[0] if lam.size else 0.0
    if lam_max <= 0.0:
        raise DegenerateCovarianceError(
            "second-moment matrix has no positive eigenvalue (all-zero data?)")
    if lam[-1] < -1e-10 * lam_max:
        raise SymmetryError(
            f"matrix is not positive semidefinite: smallest eigenvalue {lam[-1]:.3e}")
    level = _clamp_floor(floor) * lam_max
    clamped = np.maximum(lam, level)
    n_clamped = int(np.count_nonzero(lam < level))
    q = np.sqrt(clamped)[:, None] * eig.eigenvectors.T
    return Factorization(q, clamped, eig.eigenvectors, n_clamped)


def inverse_transpose_factor(f, floor=0.0):
    """Return ``q^{-T} = diag(eigenvalues^{-1/2}) @ eigenvectors.T``.

    Built from the stored eigenpairs, never by numerical inversion.
    """
    lam = f.eigenvalues
    lam_max = lam.max() if lam.size else 0.0
    bad = np.flatnonzero((lam <= 0.0) | (lam < floor * lam_max))
    if bad.size:
        i = int(bad[0])
        raise SingularityError(
            f"factor eigenvalue {i} is {lam[i]:.3e}, below the inversion floor")
    return (1.0 / np.sqrt(lam))[:, None] * f.eigenvectors.T


def _check_inner(a_cols, b_rows, op):
    if a_cols != b_rows:
        raise DimensionError(f"{op}: inner dimensions differ ({a_cols} vs {b_rows})")


def matmul(a, b):
    """``a @ b`` for dense or CSR operands; always returns a dense array."""
    _check_inner(a.shape[1], b.shape[0], "matmul")
    out = a @ b
    return as_dense(out)


def matmul_transposed(a, b):
    """``a @ b.T``, the row-vs-row inner products of two sample matrices."""
    _check_inner(a.shape[1], b.shape[1], "matmul_transposed")
    out = a @ b.T
    return as_dense(out)


def sparse_dense_mul(s, d):
    """CSR times dense; only stored nonzeros of ``s`` are touched."""
    s = sp.csr_matrix(s)
    d = np.asarray(d, dtype=np.float64)
    _check_inner(s.shape[1], d.shape[0], "sparse_dense_mul")
    return np.asarray(s @ d)
