"""Symmetric tridiagonal eigensolver and M-matrix kernels used by the transient solver.

The eigensolver is the implicit-shift QL algorithm with Wilkinson-type shifts,
accumulating rotations into the rows of ``zt`` (row ``i`` ends up holding the
eigenvector of ``d[i]``). Keeping eigenvectors in rows makes every rotation a
pair of contiguous row updates.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import FactorizationError

MAX_QL_ITER = 80


@njit(cache=True, nogil=True)
def _tql(d, e, zt, max_iter):
    """In-place QL iteration. Returns -1 on success or the index that failed to converge.

    ``e[i]`` couples ``i`` and ``i + 1``; ``e[n - 1]`` must be 0.
    """
    n = d.shape[0]
    eps = 2.220446049250313e-16
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                return l
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            early = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    early = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = zt[i]
                zi1 = zt[i + 1]
                for k in range(n):
                    f = zi1[k]
                    zi1[k] = s * zi[k] + c * f
                    zi[k] = c * zi[k] - s * f
                i -= 1
            if early:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


def eigh_tridiagonal(diag, off, method="ql"):
    """Eigen-decomposition of a symmetric tridiagonal matrix, eigenvalues descending.

    Parameters
    ----------
    diag : (n,) array
    off : (n-1,) array
        Off-diagonal entries.
    method : {"ql", "lapack"}
        ``"ql"`` runs the in-package QL kernel; ``"lapack"`` defers to
        :func:`scipy.linalg.eigh_tridiagonal`, which is much faster on
        large matrices.

    Returns
    -------
    w : (n,) array
    V : (n, n) array
        Orthonormal eigenvectors in columns, ``V[:, i]`` for ``w[i]``.
    """
    diag = np.asarray(diag, dtype=np.float64)
    off = np.asarray(off, dtype=np.float64)
    n = diag.shape[0]
    if n == 1:
        return diag.copy(), np.ones((1, 1))
    if method == "lapack":
        from scipy.linalg import eigh_tridiagonal as _lapack

        w, V = _lapack(diag, off)
        return w[::-1].copy(), np.ascontiguousarray(V[:, ::-1])
    if method != "ql":
        raise ValueError(f"unknown eigensolver {method!r}")
    d = diag.copy()
    e = np.zeros(n)
    e[:-1] = off
    zt = np.eye(n)
    info = _tql(d, e, zt, MAX_QL_ITER)
    if info >= 0:
        raise FactorizationError(f"QL iteration did not converge for eigenvalue {info} "
                                 f"within {MAX_QL_ITER} sweeps")
    order = np.argsort(-d, kind="stable")
    return d[order], np.ascontiguousarray(zt[order].T)


# -- nonsingular M-matrix kernels -------------------------------------------
#
# A = -Q restricted to the non-absorbing states is an irreducible M-matrix
# with diagonal a_k = lo_k + hi_k + s_k, off-diagonals -lo_k, -hi_k and
# nonnegative row sums s_k (the flow into absorbing states). Elimination in
# terms of (lo, hi, s) never subtracts, so every computed quantity is
# accurate to a few ulps componentwise, however ill-conditioned A is.

@njit(cache=True, nogil=True)
def mmatrix_lu(lo, hi, s):
    """Return ``(u, sp)``: pivots and pivot row sums of the LU factors."""
    n = s.shape[0]
    u = np.empty(n)
    sp = np.empty(n)
    sp[0] = s[0]
    u[0] = s[0] + hi[0]
    for k in range(1, n):
        sp[k] = s[k] + lo[k] * (sp[k - 1] / u[k - 1])
        u[k] = sp[k] + hi[k]
    return u, sp


@njit(cache=True, nogil=True)
def mmatrix_solve(lo, hi, u, x):
    """Solve ``A z = x`` for nonnegative ``x`` using the factors from :func:`mmatrix_lu`."""
    n = x.shape[0]
    y = np.empty(n)
    y[0] = x[0]
    for k in range(1, n):
        y[k] = x[k] + (lo[k] / u[k - 1]) * y[k - 1]
    z = np.empty(n)
    z[n - 1] = y[n - 1] / u[n - 1]
    for k in range(n - 2, -1, -1):
        z[k] = (y[k] + hi[k] * z[k + 1]) / u[k]
    return z


def slowest_mode(lo, hi, s, rtol=1e-13, max_iter=500):
    """Perron root and vector of ``A**-1`` by inverse iteration.

    Returns ``(lam, x, converged)`` with ``lam = 1 / rho(A**-1)`` the smallest
    eigenvalue of ``A`` and ``x`` its positive right eigenvector, max-normalized.
    Stops when the Collatz-Wielandt bracket on ``rho(A**-1)`` is within ``rtol``.
    """
    lo = np.ascontiguousarray(lo, dtype=np.float64)
    hi = np.ascontiguousarray(hi, dtype=np.float64)
    s = np.ascontiguousarray(s, dtype=np.float64)
    u, _ = mmatrix_lu(lo, hi, s)
    if not np.all(np.isfinite(u)) or np.any(u <= 0):
        raise FactorizationError("absorbing generator block is numerically singular")
    x = np.ones_like(s)
    lower = upper = np.nan
    for _ in range(max_iter):
        z = mmatrix_solve(lo, hi, u, x)
        ratio = z / x
        lower, upper = ratio.min(), ratio.max()
        x = z / z.max()
        if upper - lower <= rtol * lower:
            return 1.0 / (math.sqrt(lower) * math.sqrt(upper)), x, True
    return 1.0 / (math.sqrt(lower) * math.sqrt(upper)), x, False
