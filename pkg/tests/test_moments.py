import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ddrp import moments
from ddrp.errors import DimensionError, EmptyDataError


def test_single_row():
    m = moments.estimate_full(np.array([[1.0, 0.0]]))
    np.testing.assert_array_equal(m.full, [[1, 0], [0, 0]])
    assert m.n_samples == 1


def test_cross_terms_cancel():
    m = moments.estimate_full(np.array([[1.0, 1.0], [1.0, -1.0]]))
    np.testing.assert_allclose(m.full, np.eye(2))


def test_not_centered():
    m = moments.estimate_full(np.full((4, 2), 3.0))
    np.testing.assert_allclose(m.full, np.full((2, 2), 9.0))


def test_full_matches_naive(rng):
    x = rng.standard_normal((100, 5))
    naive = np.zeros((5, 5))
    for i in range(5):
        for j in range(5):
            naive[i, j] = sum(x[t, i] * x[t, j] for t in range(100)) / 100
    m = moments.estimate_full(x)
    np.testing.assert_allclose(m.full, naive, atol=1e-12)
    np.testing.assert_allclose(m.diag, np.diag(naive), atol=1e-12)


def test_sparse_matches_dense(rng):
    s = sp.random(50, 8, density=0.3, random_state=3, format="csr")
    a, b = moments.estimate_full(s), moments.estimate_full(s.toarray())
    np.testing.assert_allclose(a.full, b.full, atol=1e-14)
    np.testing.assert_allclose(moments.estimate_diag(s).diag, b.diag, atol=1e-14)


def test_empty_rejected():
    with pytest.raises(EmptyDataError):
        moments.estimate_full(np.zeros((0, 3)))
    with pytest.raises(EmptyDataError):
        moments.DiagAccumulator().result()


def test_streaming_examples():
    m = moments.estimate_diag_streaming([np.array([2.0, 0.0]), np.array([0.0, 2.0])])
    np.testing.assert_allclose(m.diag, [2, 2])
    m = moments.estimate_diag_streaming(np.zeros((3, 4)))
    np.testing.assert_array_equal(m.diag, np.zeros(4))


def test_streaming_matches_full(rng):
    x = rng.standard_normal((10_000, 6)) * np.array([1, 10, 100, 0.1, 1e3, 1e-3])
    blocks = (x[i:i + 37] for i in range(0, len(x), 37))
    stream = moments.estimate_diag_streaming(blocks)
    full = moments.estimate_full(x)
    np.testing.assert_allclose(stream.diag, np.diag(full.full), rtol=1e-12)


def test_streaming_mixed_rows_and_sparse(rng):
    x = rng.standard_normal((20, 3))
    acc = moments.DiagAccumulator()
    acc.update(x[0])
    acc.update(sp.csr_matrix(x[1:10]))
    acc.update(x[10:])
    np.testing.assert_allclose(acc.result().diag, np.mean(x * x, axis=0), rtol=1e-13)


def test_streaming_ragged_row():
    acc = moments.DiagAccumulator().update(np.ones(3))
    with pytest.raises(DimensionError, match="row 1"):
        acc.update(np.ones(4))


def test_accumulator_merge(rng):
    x = rng.standard_normal((500, 4))
    a = moments.DiagAccumulator().update(x[:123])
    b = moments.DiagAccumulator().update(x[123:])
    np.testing.assert_allclose(a.merge(b).result().diag, np.mean(x * x, axis=0), rtol=1e-13)
    g1 = moments.GramAccumulator(4).update(x[:200])
    g2 = moments.GramAccumulator(4).update(x[200:])
    full = g1.merge(g2).result()
    np.testing.assert_allclose(full.full, x.T @ x / 500, rtol=1e-12)


def test_second_moment_merge(rng):
    x = rng.standard_normal((30, 3))
    merged = moments.estimate_full(x[:10]).merge(moments.estimate_full(x[10:]))
    np.testing.assert_allclose(merged.full, moments.estimate_full(x).full, atol=1e-14)
    assert merged.n_samples == 30


def test_from_matrices():
    m = moments.from_matrices(full=np.diag([4.0, 1.0]))
    np.testing.assert_array_equal(m.diag, [4, 1])
    assert m.has_full
    assert not moments.from_matrices(diag=[1.0, 2.0]).has_full
    with pytest.raises(ValueError):
        moments.from_matrices(diag=[-1.0])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.integers(1, 6)),
              elements=st.floats(-1e6, 1e6)))
def test_streaming_equals_full_diagonal(x):
    stream = moments.estimate_diag_streaming(iter(x))
    full = moments.estimate_full(x)
    np.testing.assert_allclose(stream.diag, np.diag(full.full), rtol=1e-12, atol=1e-300)
