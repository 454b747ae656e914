import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import eigh_tridiagonal as scipy_eigh

from metawalk._tridiag import eigh_tridiagonal, mmatrix_lu, mmatrix_solve, slowest_mode


def dense(diag, off):
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


@given(st.integers(min_value=1, max_value=60), st.integers(min_value=0, max_value=2**32 - 1))
def test_ql_matches_lapack(n, seed):
    rng = np.random.default_rng(seed)
    diag = rng.normal(size=n)
    off = rng.normal(size=n - 1)
    w, V = eigh_tridiagonal(diag, off)
    ref = np.sort(scipy_eigh(diag, off, eigvals_only=True))[::-1]
    scale = max(1.0, np.abs(ref).max())
    np.testing.assert_allclose(w, ref, rtol=0, atol=1e-12 * scale)
    assert np.all(np.diff(w) <= 0)
    np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-12)
    np.testing.assert_allclose(V @ np.diag(w) @ V.T, dense(diag, off), atol=1e-11 * scale)


def test_two_by_two():
    w, V = eigh_tridiagonal(np.array([-1.0, -1.0]), np.array([1.0]))
    np.testing.assert_allclose(w, [0.0, -2.0], atol=1e-15)


def test_lapack_method_agrees():
    rng = np.random.default_rng(3)
    diag, off = rng.normal(size=40), rng.normal(size=39)
    w1, _ = eigh_tridiagonal(diag, off, "ql")
    w2, _ = eigh_tridiagonal(diag, off, "lapack")
    np.testing.assert_allclose(w1, w2, atol=1e-12)


def test_unknown_method():
    with pytest.raises(ValueError):
        eigh_tridiagonal(np.zeros(2), np.ones(1), "jacobi")


def test_graded_matrix():
    # entries spanning many orders of magnitude, as for strongly drifting chains
    n = 30
    diag = -np.geomspace(1e-6, 1e6, n)
    off = np.sqrt(np.abs(diag[:-1] * diag[1:])) * 0.4
    w, V = eigh_tridiagonal(diag, off)
    ref = np.sort(scipy_eigh(diag, off, eigvals_only=True))[::-1]
    np.testing.assert_allclose(w, ref, rtol=1e-9, atol=1e-9)


def _mmatrix(rng, n):
    lo = np.concatenate(([0.0], rng.uniform(0.1, 2.0, n - 1)))
    hi = np.concatenate((rng.uniform(0.1, 2.0, n - 1), [0.0]))
    s = np.zeros(n)
    s[0] = rng.uniform(0.1, 1.0)
    s[-1] = rng.uniform(0.1, 1.0)
    # A = diag(lo + hi + s) - lo * shift_down - hi * shift_up is a nonsingular M-matrix
    A = np.diag(lo + hi + s) - np.diag(lo[1:], -1) - np.diag(hi[:-1], 1)
    return lo, hi, s, A


def test_mmatrix_solve():
    rng = np.random.default_rng(5)
    lo, hi, s, A = _mmatrix(rng, 25)
    u, _ = mmatrix_lu(lo, hi, s)
    x = rng.random(25)
    z = mmatrix_solve(lo, hi, u, x)
    np.testing.assert_allclose(A @ z, x, rtol=1e-10, atol=1e-12)


def test_slowest_mode_matches_dense():
    rng = np.random.default_rng(6)
    lo, hi, s, A = _mmatrix(rng, 20)
    lam, x, ok = slowest_mode(lo, hi, s)
    assert ok
    ev = np.linalg.eigvals(A)
    assert lam == pytest.approx(np.min(ev.real), rel=1e-10)
    np.testing.assert_allclose(A @ x, lam * x, rtol=1e-8, atol=1e-12)
    assert np.all(x > 0)
