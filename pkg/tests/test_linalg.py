import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_psd
from ddrp import linalg
from ddrp.errors import (ConvergenceError, DegenerateCovarianceError, DimensionError,
                         SingularityError, SymmetryError)


def test_sym_eig_identity():
    e = linalg.sym_eig(np.eye(3))
    np.testing.assert_allclose(e.eigenvalues, [1, 1, 1])
    v = e.eigenvectors
    np.testing.assert_allclose(v.T @ v, np.eye(3), atol=1e-14)


def test_sym_eig_diagonal_already():
    e = linalg.sym_eig(np.diag([1.0, 4.0]))
    np.testing.assert_allclose(e.eigenvalues, [4, 1])
    np.testing.assert_allclose(np.abs(e.eigenvectors), [[0, 1], [1, 0]])


def test_sym_eig_two_by_two():
    e = linalg.sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(e.eigenvalues, [3, 1], atol=1e-14)
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(np.abs(e.eigenvectors[:, 0]), [s, s], atol=1e-14)
    assert e.eigenvectors[0, 1] * e.eigenvectors[1, 1] < 0


@pytest.mark.parametrize("d", [1, 2, 5, 17, 40])
def test_sym_eig_reconstructs(rng, d):
    a = rng.standard_normal((d, d))
    s = a + a.T
    e = linalg.sym_eig(s)
    v = e.eigenvectors
    assert np.linalg.norm(v.T @ v - np.eye(d)) < 1e-12
    assert np.linalg.norm((v * e.eigenvalues) @ v.T - s) <= 1e-12 * np.linalg.norm(s)
    assert np.all(np.diff(e.eigenvalues) <= 0)
    np.testing.assert_allclose(e.eigenvalues, np.sort(np.linalg.eigvalsh(s))[::-1], atol=1e-12)


def test_sym_eig_rejects_asymmetric():
    with pytest.raises(SymmetryError):
        linalg.sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(DimensionError):
        linalg.sym_eig(np.ones((2, 3)))
    with pytest.raises(ValueError):
        linalg.sym_eig(np.array([[np.nan, 0], [0, 1.0]]))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(-1e3, 1e3)))
def test_sym_eig_property(a):
    s = a + a.T
    e = linalg.sym_eig(s)
    scale = max(np.linalg.norm(s), 1e-300)
    assert np.linalg.norm((e.eigenvectors * e.eigenvalues) @ e.eigenvectors.T - s) <= 1e-11 * scale + 1e-300


def test_svd_identity_and_signs():
    np.testing.assert_allclose(linalg.svd(np.eye(4)).singular_values, 1.0)
    f = linalg.svd(np.diag([3.0, -2.0]))
    np.testing.assert_allclose(f.singular_values, [3, 2])
    np.testing.assert_allclose(f.reconstruct(), np.diag([3.0, -2.0]), atol=1e-14)


def test_svd_matches_eig_of_gram(rng):
    m = rng.standard_normal((4, 4))
    f = linalg.svd(m)
    eig = linalg.sym_eig(m.T @ m).eigenvalues
    np.testing.assert_allclose(f.singular_values, np.sqrt(np.clip(eig, 0, None)), rtol=1e-12)


@pytest.mark.parametrize("shape", [(7, 3), (3, 7), (6, 6)])
def test_svd_rectangular_and_rank_deficient(rng, shape):
    m = rng.standard_normal(shape)
    m[:, 0] = m[:, 1]  # force a zero singular value when possible
    f = linalg.svd(m)
    np.testing.assert_allclose(f.reconstruct(), m, atol=1e-12)
    r = min(shape)
    np.testing.assert_allclose(f.u.T @ f.u, np.eye(r), atol=1e-12)
    np.testing.assert_allclose(f.v.T @ f.v, np.eye(r), atol=1e-12)
    assert np.all(np.diff(f.singular_values) <= 0)


def test_factor_covariance_examples(rng):
    f = linalg.factor_covariance(np.eye(3))
    np.testing.assert_allclose(f.q.T @ f.q, np.eye(3), atol=1e-15)
    f = linalg.factor_covariance(np.diag([4.0, 1.0]))
    np.testing.assert_allclose(f.q.T @ f.q, np.diag([4.0, 1.0]), atol=1e-12)
    s = random_psd(rng, 5)
    f = linalg.factor_covariance(s)
    assert np.linalg.norm(f.q.T @ f.q - s) / np.linalg.norm(s) <= 1e-9
    assert f.n_clamped == 0


def test_factor_covariance_clamps_rank_deficient(rng):
    s = random_psd(rng, 5, rank=3)
    f = linalg.factor_covariance(s)
    assert f.n_clamped == 2
    lam_max = f.eigenvalues[0]
    assert np.min(f.eigenvalues) >= 1e-10 * lam_max * (1 - 1e-12)


def test_factor_covariance_errors():
    with pytest.raises(DegenerateCovarianceError):
        linalg.factor_covariance(np.zeros((2, 2)))
    with pytest.raises(SymmetryError):
        linalg.factor_covariance(np.diag([1.0, -1.0]))


def test_inverse_transpose_factor(rng):
    for s in (np.eye(3), np.diag([4.0, 1.0]), random_psd(rng, 5)):
        f = linalg.factor_covariance(s)
        m = linalg.inverse_transpose_factor(f)
        d = s.shape[0]
        assert np.linalg.norm(f.q @ m.T - np.eye(d)) <= 1e-8
    np.testing.assert_allclose(
        linalg.inverse_transpose_factor(linalg.factor_covariance(np.eye(2))).T
        @ linalg.factor_covariance(np.eye(2)).q, np.eye(2), atol=1e-15)


def test_inverse_transpose_factor_singular():
    f = linalg.Factorization(np.diag([1.0, 0.0]), np.array([1.0, 0.0]), np.eye(2), 0)
    with pytest.raises(SingularityError, match="1"):
        linalg.inverse_transpose_factor(f)


def test_matmul_helpers(rng):
    m = rng.standard_normal((2, 2))
    np.testing.assert_array_equal(linalg.matmul(np.eye(2), m), m)
    assert linalg.matmul(np.array([[2.0]]), np.array([[3.0]]))[0, 0] == 6.0
    a, b = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
    naive = np.array([[sum(a[i, t] * b[t, j] for t in range(2)) for j in range(2)] for i in range(2)])
    np.testing.assert_allclose(linalg.matmul(a, b), naive, rtol=1e-14)
    np.testing.assert_allclose(linalg.matmul_transposed(a, b), a @ b.T, rtol=1e-14)
    s = sp.random(5, 4, density=0.4, random_state=1, format="csr")
    d = rng.standard_normal((4, 3))
    np.testing.assert_allclose(linalg.sparse_dense_mul(s, d), s.toarray() @ d, atol=1e-14)
    with pytest.raises(DimensionError):
        linalg.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(DimensionError):
        linalg.matmul_transposed(np.ones((2, 3)), np.ones((2, 2)))


def test_convergence_error_is_arithmetic():
    assert issubclass(ConvergenceError, ArithmeticError)


@pytest.mark.parametrize("d,rank", [(40, 5), (100, 10)])
def test_sym_eig_rank_deficient_gram_converges(rng, d, rank):
    # few samples in many dimensions: a large null cluster next to O(1) eigenvalues
    x = rng.standard_normal((rank, d)) * rng.uniform(0.1, 3.0, d)
    s = x.T @ x / rank
    e = linalg.sym_eig(s)
    v = e.eigenvectors
    assert np.linalg.norm((v * e.eigenvalues) @ v.T - s) <= 1e-12 * np.linalg.norm(s)
    assert np.linalg.norm(v.T @ v - np.eye(d)) <= 1e-12
    assert np.all(np.abs(e.eigenvalues[rank:]) <= 1e-13 * e.eigenvalues[0])


def test_svd_large_path(rng):
    m = rng.standard_normal((90, 70))
    f = linalg.svd(m)
    np.testing.assert_allclose(f.reconstruct(), m, atol=1e-12)
    np.testing.assert_allclose(f.singular_values, np.linalg.svd(m, compute_uv=False), rtol=1e-12)
