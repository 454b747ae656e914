"""Exact time-t laws of birth-death chains.

The generator restricted to the non-absorbing states is similar, through a
diagonal matrix ``D = diag(d)`` with ``d[k+1]/d[k] = sqrt(up[k]/down[k+1])``,
to a symmetric tridiagonal matrix ``S``. With ``S = V diag(w) V^T``,

    p(t) = d * (V @ (exp(w t) * (V.T @ (p0 / d))))

for any ``t``, including times far beyond the reach of step-based methods.
Uniformization (a Poisson mixture of powers of ``I + Q/Lambda``) serves as the
independent oracle and as a short burn-in when ``p0`` sits where ``d`` is tiny.
"""

from __future__ import annotations

import csv
import io
import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.stats import poisson

from . import _tridiag
from .errors import AccuracyError, FactorizationError, GuardError, ModelError
from .model import ChainSpec, IntegerInterval, build_generator
from .report import BoundReport
from .stationary import ProbVector, l1_distance

__all__ = [
    "SpectralFactorization",
    "factorize",
    "TransientPropagator",
    "transient_distribution",
    "uniformized_transient",
    "expected_position",
    "absorption_probability",
    "expected_position_ode_check",
    "series_rows",
    "write_series_csv",
    "as_initial",
    "UNIFORMIZATION_GUARD",
    "CLIP_LIMIT",
]

UNIFORMIZATION_GUARD = 1e7
CLIP_LIMIT = 1e-9
COND_LIMIT = 1e-10
_EPS = np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class SpectralFactorization:
    """Eigen-decomposition of the symmetrized non-absorbing block of a generator.

    ``log_d`` holds log symmetrizer weights, shifted so the largest is 0.
    ``eigenvalues`` are sorted descending and ``eigenvectors[:, i]`` belongs
    to ``eigenvalues[i]``.

    Chains with a one-directional edge inside the block are not similar to a
    symmetric matrix. For those, ``eigenvectors`` is None and the eigenvalues
    are the union over the symmetrizable sub-blocks between such edges (the
    generator is block triangular).
    """

    spec: ChainSpec
    interior: IntegerInterval
    log_d: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    method: str
    exit_lo: float
    exit_hi: float
    slowest_refined: bool

    @property
    def d(self) -> np.ndarray:
        return np.exp(self.log_d)

    @property
    def size(self) -> int:
        return len(self.interior)

    @property
    def symmetric(self) -> bool:
        return self.eigenvectors is not None

    @property
    def max_rate(self) -> float:
        return self.spec.max_rate

    @property
    def irreducible(self) -> bool:
        return self.spec.is_irreducible

    def generator_block(self) -> np.ndarray:
        """Dense generator restricted to the non-absorbing states."""
        i, j = self.spec.support.index(self.interior.lo), self.spec.support.index(self.interior.hi) + 1
        return build_generator(self.spec).to_dense()[i:j, i:j]

    def reconstruction_error(self) -> float:
        """``max |Q - D^-1 V diag(w) V^T D|`` over the non-absorbing block."""
        if not self.symmetric:
            raise FactorizationError("no eigenvectors for a non-symmetrizable chain")
        d = self.d
        V = self.eigenvectors
        R = (V * self.eigenvalues) @ V.T
        R = R * d[None, :] / d[:, None]
        return float(np.max(np.abs(self.generator_block() - R)))


_CACHE: OrderedDict = OrderedDict()
_CACHE_LOCK = threading.Lock()
_CACHE_SIZE = 8


def clear_cache():
    with _CACHE_LOCK:
        _CACHE.clear()


def factorize(spec: ChainSpec, method: str = "ql", cache: bool = True) -> SpectralFactorization:
    """Factorize the non-absorbing block of ``spec``.

    ``method`` picks the eigensolver: ``"ql"`` (in-package implicit QL) or
    ``"lapack"``. For chains with absorbing states the eigenpair closest to 0
    is then recomputed by inverse iteration with subtraction-free M-matrix
    solves, which pins it to full relative accuracy even when it is
    exponentially small. For irreducible chains it is set to exactly
    ``(0, sqrt(pi)/|sqrt(pi)|)``.
    """
    key = (spec.fingerprint(), method)
    if cache:
        with _CACHE_LOCK:
            if key in _CACHE:
                _CACHE.move_to_end(key)
                return _CACHE[key]
    fac = _factorize(spec, method)
    if cache:
        with _CACHE_LOCK:
            _CACHE[key] = fac
            while len(_CACHE) > _CACHE_SIZE:
                _CACHE.popitem(last=False)
    return fac


def _replace_slowest(V: np.ndarray, v: np.ndarray) -> None:
    """Put the accurate slowest mode ``v`` in column 0 and project it out of the others.

    When the spectral gap is tiny the computed first two columns mix, so the
    remaining columns must be re-orthogonalized against the substitute.
    """
    v = v / np.linalg.norm(v)
    V[:, 0] = v
    rest = V[:, 1:]
    rest -= np.outer(v, v @ rest)
    rest /= np.linalg.norm(rest, axis=0)


def _factorize(spec: ChainSpec, method: str) -> SpectralFactorization:
    interior = spec.interior
    i0 = spec.support.index(interior.lo)
    i1 = spec.support.index(interior.hi) + 1
    lu = spec.log_up[i0:i1]
    ld = spec.log_down[i0:i1]
    up, down = spec.up[i0:i1], spec.down[i0:i1]
    n = i1 - i0
    exit_lo = float(down[0]) if spec.boundary.absorbs_lo else 0.0
    exit_hi = float(up[-1]) if spec.boundary.absorbs_hi else 0.0
    diag = -(up + down)

    up_ok = np.isfinite(lu[:-1])
    down_ok = np.isfinite(ld[1:])
    both = up_ok & down_ok
    if not np.all(both):
        # block triangular: eigenvalues are those of the sub-blocks
        cuts = np.flatnonzero(~both) + 1
        w_parts = []
        for lo, hi in zip(np.concatenate(([0], cuts)), np.concatenate((cuts, [n]))):
            sub = slice(lo, hi)
            off = np.exp(0.5 * (lu[lo:hi - 1] + ld[lo + 1:hi]))
            w_parts.append(_tridiag.eigh_tridiagonal(diag[sub], off, method)[0])
        w = np.sort(np.concatenate(w_parts))[::-1].copy()
        return SpectralFactorization(spec, interior, np.zeros(n), w, None, method,
                                     exit_lo, exit_hi, False)

    half = 0.5 * (lu[:-1] - ld[1:])
    log_d = np.concatenate(([0.0], np.cumsum(half)))
    log_d -= log_d.max()
    off = np.exp(0.5 * (lu[:-1] + ld[1:]))
    w, V = _tridiag.eigh_tridiagonal(diag, off, method)
    refined = False
    if n > 1:
        if spec.is_irreducible:
            _replace_slowest(V, np.exp(log_d))
            w[0] = 0.0
            refined = True
        else:
            lo_c = np.concatenate(([0.0], down[1:]))
            hi_c = np.concatenate((up[:-1], [0.0]))
            s = np.zeros(n)
            s[0] += down[0]
            s[-1] += up[-1]
            lam, x, ok = _tridiag.slowest_mode(lo_c, hi_c, s)
            if ok and -lam >= w[1]:
                _replace_slowest(V, x * np.exp(log_d - log_d.max()))
                w[0] = -lam
                refined = True
    return SpectralFactorization(spec, interior, log_d, w, V, method, exit_lo, exit_hi, refined)


# -- uniformization oracle ---------------------------------------------------

@njit(cache=True, nogil=True)
def _uniformize(p, stay, up_s, down_s, weights, k_first):
    n = p.shape[0]
    acc = np.zeros(n)
    cur = p.copy()
    nxt = np.empty(n)
    k_last = k_first + weights.shape[0] - 1
    for k in range(k_last + 1):
        if k >= k_first:
            wk = weights[k - k_first]
            for i in range(n):
                acc[i] += wk * cur[i]
        if k == k_last:
            break
        for i in range(n):
            nxt[i] = cur[i] * stay[i]
        for i in range(n - 1):
            nxt[i + 1] += cur[i] * up_s[i]
            nxt[i] += cur[i + 1] * down_s[i + 1]
        cur, nxt = nxt, cur
    return acc


def as_initial(spec: ChainSpec, p0) -> np.ndarray:
    """Initial law as a mass array on ``spec.support``; ``p0`` may be a state or a ProbVector."""
    if isinstance(p0, ProbVector):
        if p0.support.intersect(spec.support) != p0.support:
            extra = 1.0 - math.fsum(p0.aligned(spec.support))
            if extra > 1e-15:
                raise ModelError("initial law puts mass outside the chain's support")
        m = p0.aligned(spec.support)
    elif isinstance(p0, (int, np.integer)):
        m = np.zeros(len(spec.support))
        m[spec.support.index(int(p0))] = 1.0
    else:
        m = np.asarray(p0, dtype=np.float64)
        if m.shape != (len(spec.support),):
            raise ModelError("initial mass array does not match the support")
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise ModelError("initial law must be nonnegative")
    return m


def _wrap(spec: ChainSpec, mass: np.ndarray) -> ProbVector:
    return ProbVector(spec.support, mass, normalized=True, absorbing=spec.absorbing_states)


def uniformized_transient(spec: ChainSpec, p0, t: float, tol: float = 1e-13) -> ProbVector:
    """Law at time ``t`` as ``sum_k Pois(k; Lambda t) p0 P**k`` with ``P = I + Q/Lambda``.

    The Poisson series is truncated once the neglected weight is below
    ``tol``, which bounds the L1 error. Every step is subtraction-free.

    Raises
    ------
    GuardError
        If ``Lambda * t`` exceeds ``1e7``; use :func:`transient_distribution`.
    """
    m = as_initial(spec, p0)
    total0 = math.fsum(m)
    if t < 0:
        raise ValueError("t must be nonnegative")
    rate = spec.max_rate
    if t == 0 or rate == 0:
        return _wrap(spec, m)
    lt = rate * t
    if lt > UNIFORMIZATION_GUARD:
        raise GuardError(f"t * max_rate = {lt:.3g} exceeds {UNIFORMIZATION_GUARD:.0e}; "
                         "use the spectral transient_distribution instead")
    k_hi = int(poisson.isf(tol / 2, lt)) + 1
    k_lo = max(0, int(poisson.ppf(tol / 2, lt)) - 1)
    ks = np.arange(k_lo, k_hi + 1)
    weights = np.exp(poisson.logpmf(ks, lt))
    up, down = spec.up, spec.down
    stay = (rate - (up + down)) / rate
    stay = np.clip(stay, 0.0, 1.0)
    out = _uniformize(m, stay, up / rate, down / rate, weights, k_lo)
    # the neglected Poisson weight is put back proportionally; without it the
    # result would be short by at most ``tol``
    s = math.fsum(out)
    if s > 0:
        out *= total0 / s
    return _wrap(spec, out)


# -- spectral propagation ----------------------------------------------------

def _clip(p: np.ndarray, what: str) -> np.ndarray:
    neg = -math.fsum(p[p < 0])
    if neg > CLIP_LIMIT:
        raise AccuracyError(f"{what}: negative mass {neg:.3g} from round-off exceeds {CLIP_LIMIT:g}")
    return np.where(p < 0, 0.0, p)


class TransientPropagator:
    """Evaluates the law of a chain at many times from one factorization.

    When the initial law sits where the symmetrizer weights are tiny, the
    spectral coefficients ``V.T @ (p0/d)`` are huge and the reconstruction
    would cancel catastrophically. The propagator then first advances by
    uniformization in geometrically growing steps until the condition number
    ``sum p/d`` is acceptable, and continues spectrally from there.
    """

    def __init__(self, spec: ChainSpec, p0, *, method: str = "ql",
                 factorization: SpectralFactorization | None = None, cond_limit: float = COND_LIMIT):
        self.spec = spec
        self.p0 = as_initial(spec, p0)
        self.total0 = math.fsum(self.p0)
        self.fac = factorization if factorization is not None else factorize(spec, method)
        self.cond_limit = cond_limit
        self._start = None  # (s, full mass at s, coefficients)
        self._lock = threading.Lock()
        self.burn_in_time = 0.0

    # interior helpers
    def _split(self, m):
        sup, I = self.spec.support, self.fac.interior
        i0, i1 = sup.index(I.lo), sup.index(I.hi) + 1
        return m[i0:i1], i0, i1

    def _condition(self, q: np.ndarray) -> float:
        return float(np.sum(q * np.exp(-self.fac.log_d)))

    def _well_conditioned(self, q) -> bool:
        return _EPS * self.fac.size * self._condition(q) <= self.cond_limit

    def _prepare(self):
        with self._lock:
            if self._start is not None:
                return self._start
            m = self.p0
            s = 0.0
            rate = self.spec.max_rate
            j = 0
            q, _, _ = self._split(m)
            while not self._well_conditioned(q):
                dt = 2.0**j / rate
                if rate * (s + dt) > UNIFORMIZATION_GUARD:
                    raise AccuracyError("initial law is too ill-conditioned for the spectral "
                                        "method and burn-in exceeded the uniformization guard")
                m = uniformized_transient(self.spec, m, dt, tol=1e-15).mass.copy()
                s += dt
                j += 1
                q, _, _ = self._split(m)
            coef = self.fac.eigenvectors.T @ (q * np.exp(-self.fac.log_d))
            self.burn_in_time = s
            self._start = (s, m, coef)
            return self._start

    def at(self, t: float) -> ProbVector:
        if t < 0:
            raise ValueError("t must be nonnegative")
        if t == 0:
            return _wrap(self.spec, self.p0.copy())
        if not self.fac.symmetric:
            return uniformized_transient(self.spec, self.p0, t)
        try:
            s, m, coef = self._prepare()
        except AccuracyError:
            if self.spec.max_rate * t <= UNIFORMIZATION_GUARD:
                return uniformized_transient(self.spec, self.p0, t)
            raise
        if t <= s:
            return uniformized_transient(self.spec, self.p0, t)
        return self._spectral(t - s, m, coef)

    def _spectral(self, tau, m, coef) -> ProbVector:
        fac = self.fac
        w, V, d = fac.eigenvalues, fac.eigenvectors, fac.d
        q, i0, i1 = self._split(m)
        q_mass = math.fsum(q)
        p = d * (V @ (coef * np.exp(w * tau)))
        p = _clip(p, "transient_distribution")
        out = m.copy()
        if fac.irreducible:
            out[i0:i1] = p * (q_mass / math.fsum(p))
            return _wrap(self.spec, out)
        live = math.fsum(p)
        if live > q_mass:
            if live - q_mass > CLIP_LIMIT:
                raise AccuracyError(f"interior mass grew by {live - q_mass:.3g}")
            p *= q_mass / live
            live = q_mass
        absorbed = max(q_mass - live, 0.0)
        out[i0:i1] = p
        lo_abs, hi_abs = self.spec.boundary.absorbs_lo, self.spec.boundary.absorbs_hi
        if lo_abs and hi_abs:
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.where(w != 0.0, np.expm1(w * tau) / w, tau)
            f_lo = fac.exit_lo * d[0] * float(np.dot(V[0], coef * g))
            f_hi = fac.exit_hi * d[-1] * float(np.dot(V[-1], coef * g))
            f_lo, f_hi = max(f_lo, 0.0), max(f_hi, 0.0)
            share = f_lo / (f_lo + f_hi) if f_lo + f_hi > 0 else 0.5
            out[0] += absorbed * share
            out[-1] += absorbed * (1.0 - share)
        elif lo_abs:
            out[0] += absorbed
        else:
            out[-1] += absorbed
        return _wrap(self.spec, out)

    def many(self, times, workers: int = 1) -> list[ProbVector]:
        times = list(times)
        if workers <= 1 or len(times) < 2:
            return [self.at(t) for t in times]
        self._prepare_quietly()
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(self.at, times))

    def _prepare_quietly(self):
        if self.fac.symmetric:
            try:
                self._prepare()
            except AccuracyError:
                pass


def transient_distribution(spec: ChainSpec, p0, t, *, method: str = "ql",
                           factorization: SpectralFactorization | None = None):
    """Law of the chain at time ``t`` (a scalar or a sequence of times).

    The result lives on the full support; mass on absorbing states is the
    absorbed probability, recovered as one minus the live mass and split
    between the two ends by the time-integrated boundary fluxes.
    """
    prop = TransientPropagator(spec, p0, method=method, factorization=factorization)
    if np.ndim(t) == 0:
        return prop.at(float(t))
    return prop.many([float(x) for x in t])


def expected_position(p: ProbVector, conditioned: bool = False) -> float:
    """``sum k p_k``.

    With ``conditioned=True`` absorbed atoms are dropped and the mean is taken
    under the live mass renormalized to one.
    """
    if conditioned:
        return p.interior().mean(conditioned=True)
    return p.mean()


def absorption_probability(spec: ChainSpec, p0, t) -> dict[int, float]:
    """Mass held by each absorbing state at time ``t``."""
    if not spec.absorbing_states:
        raise ModelError("chain has no absorbing states")
    return transient_distribution(spec, p0, t).absorbed_mass()


def expected_position_ode_check(spec: ChainSpec, p0, t_grid, h: float | None = None,
                                rtol: float = 1e-6) -> BoundReport:
    """Compare a five-point derivative of ``E[Y_t]`` with ``E[up(Y_t) - down(Y_t)]`` along ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=float)
    prop = TransientPropagator(spec, p0)
    speed = spec.up - spec.down
    if h is None:
        span = float(t_grid.max()) if t_grid.size else 1.0
        h = 1e-3 * max(span, 1.0) / max(1.0, spec.max_rate ** 0.5)
    states = spec.states

    def E(t):
        return prop.at(t).mean()

    worst = 0.0
    rows = []
    for t in t_grid:
        if t - 2 * h >= 0:
            dE = (-E(t + 2 * h) + 8 * E(t + h) - 8 * E(t - h) + E(t - 2 * h)) / (12 * h)
        else:
            e = [E(t + i * h) for i in range(5)]
            dE = (-25 * e[0] + 48 * e[1] - 36 * e[2] + 16 * e[3] - 3 * e[4]) / (12 * h)
        p = prop.at(t).mass
        rhs = math.fsum(speed * p)
        scale = max(abs(rhs), float(np.max(np.abs(speed))) * 1e-3, 1e-300)
        rel = abs(dE - rhs) / scale
        worst = max(worst, rel)
        rows.append((float(t), dE, rhs, rel))
    rep = BoundReport("expected_position_ode_check", {"h": h, "rtol": rtol, "n_points": int(t_grid.size),
                                                      "spec": repr(spec)}, value=worst)
    rep.add_check("max relative mismatch", worst <= rtol, worst, rtol)
    rep.extras["rows"] = rows
    rep.comparison = {"states": int(states.size)}
    return rep


# -- time series export --------------------------------------------------------

SERIES_COLUMNS = ("t", "expected", "absorbed_left", "absorbed_right", "l1_to_gaussian")


def series_rows(spec: ChainSpec, p0, times, reference=None, workers: int = 1) -> list[dict]:
    """One row per time: mean, absorbed mass at each end and L1 distance to ``reference``."""
    prop = TransientPropagator(spec, p0)
    out = []
    lo, hi = spec.support.lo, spec.support.hi
    for t, p in zip(times, prop.many(times, workers=workers)):
        ab = p.absorbed_mass()
        out.append({
            "t": float(t),
            "expected": p.mean(),
            "absorbed_left": ab.get(lo, 0.0) if spec.boundary.absorbs_lo else 0.0,
            "absorbed_right": ab.get(hi, 0.0) if spec.boundary.absorbs_hi else 0.0,
            "l1_to_gaussian": l1_distance(p, reference) if reference is not None else math.nan,
        })
    return out


def write_series_csv(rows, fh=None, header: str | None = None):
    buf = io.StringIO() if fh is None else fh
    if header:
        for line in header.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    for r in rows:
        w.writerow([repr(float(r[c])) for c in SERIES_COLUMNS])
    return buf.getvalue() if fh is None else None
