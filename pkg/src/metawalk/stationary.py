"""Stationary distributions, Gaussian references and distances between laws on ℤ."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import ModelError, StationaryError
from .model import ChainSpec, IntegerInterval
from .report import BoundReport

__all__ = [
    "ProbVector",
    "GaussRef",
    "stationary_distribution",
    "jump_chain_stationary",
    "gaussian_reference",
    "l1_distance",
    "tv_distance",
    "kolmogorov_distance",
    "statdist_certificate",
    "gaussian_sum_check",
    "NORMALIZATION_TOL",
]

NORMALIZATION_TOL = 1e-12
SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class ProbVector:
    """Probability mass function on a contiguous integer interval.

    ``normalized=False`` marks a sub-probability vector (for example the
    non-absorbed part of a transient law). ``absorbing`` lists states whose
    mass is an absorbed atom rather than live probability.
    """

    support: IntegerInterval
    mass: np.ndarray
    normalized: bool = True
    absorbing: tuple[int, ...] = field(default=())

    def __post_init__(self):
        m = np.array(self.mass, dtype=np.float64).reshape(-1)
        if m.shape != (len(self.support),):
            raise ModelError(f"mass has {m.size} entries for a support of width {len(self.support)}")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ModelError("probability masses must be finite and nonnegative")
        total = math.fsum(m)
        if self.normalized and abs(total - 1.0) > NORMALIZATION_TOL:
            raise ModelError(f"vector flagged normalized but sums to {total!r}")
        if not self.normalized and total > 1.0 + NORMALIZATION_TOL:
            raise ModelError(f"sub-probability vector sums to {total!r} > 1")
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "absorbing", tuple(int(k) for k in self.absorbing))

    @classmethod
    def point_mass(cls, support: IntegerInterval, k: int, absorbing=()) -> "ProbVector":
        m = np.zeros(len(support))
        m[support.index(k)] = 1.0
        return cls(support, m, True, absorbing)

    @property
    def states(self) -> np.ndarray:
        return self.support.states()

    @property
    def total(self) -> float:
        return math.fsum(self.mass)

    def __getitem__(self, k: int) -> float:
        return float(self.mass[k - self.support.lo]) if k in self.support else 0.0

    def aligned(self, support: IntegerInterval) -> np.ndarray:
        """Masses on ``support``, zero-padded; mass outside ``support`` is dropped."""
        out = np.zeros(len(support))
        common = self.support.intersect(support)
        if common is not None:
            out[common.lo - support.lo: common.hi - support.lo + 1] = \
                self.mass[common.lo - self.support.lo: common.hi - self.support.lo + 1]
        return out

    def absorbed_mass(self) -> dict[int, float]:
        return {k: self[k] for k in self.absorbing}

    def interior(self) -> "ProbVector":
        """Sub-probability vector with the absorbed atoms removed."""
        lo, hi = self.support.lo, self.support.hi
        if lo in self.absorbing:
            lo += 1
        if hi in self.absorbing and hi >= lo:
            hi -= 1
        sub = IntegerInterval(lo, hi)
        return ProbVector(sub, self.aligned(sub), normalized=False)

    def mean(self, conditioned: bool = False) -> float:
        """``sum k p_k``; with ``conditioned`` divide by the total mass."""
        raw = math.fsum(self.states * self.mass)
        if conditioned:
            total = self.total
            return raw / total if total > 0 else math.nan
        return raw

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.mass)

    def argmax(self) -> int:
        return int(self.support.lo + np.argmax(self.mass))

    def to_csv(self, fh=None, header: str | None = None) -> str | None:
        """Write ``k,mass`` rows. Returns the text when ``fh`` is None."""
        buf = io.StringIO() if fh is None else fh
        if header:
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "mass"])
        for k, m in zip(self.states.tolist(), self.mass.tolist()):
            w.writerow([k, repr(m)])
        return buf.getvalue() if fh is None else None


@dataclass(frozen=True)
class GaussRef:
    """Discretized Gaussian ``N(mean, sigma**2)`` on an integer interval.

    ``mode="pdf-values"`` stores raw density values ``f(k)``;
    ``mode="lattice-normalized"`` rescales them to sum to one on ``support``.
    """

    sigma: float
    support: IntegerInterval
    mode: str = "pdf-values"
    mean: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelError("sigma must be positive")
        if self.mode not in ("pdf-values", "lattice-normalized"):
            raise ModelError(f"unknown Gaussian reference mode {self.mode!r}")

    @property
    def states(self) -> np.ndarray:
        return self.support.states()

    @property
    def mass(self) -> np.ndarray:
        z = (self.states - self.mean) / self.sigma
        f = np.exp(-0.5 * z * z) / (SQRT_2PI * self.sigma)
        if self.mode == "lattice-normalized":
            f = f / math.fsum(f)
        return f

    def aligned(self, support: IntegerInterval) -> np.ndarray:
        return _aligned_raw(self.support, self.mass, support)


def _aligned_raw(src: IntegerInterval, mass: np.ndarray, dst: IntegerInterval) -> np.ndarray:
    out = np.zeros(len(dst))
    common = src.intersect(dst)
    if common is not None:
        out[common.lo - dst.lo: common.hi - dst.lo + 1] = \
            mass[common.lo - src.lo: common.hi - src.lo + 1]
    return out


def gaussian_reference(sigma: float, support: IntegerInterval, mode: str = "pdf-values",
                       mean: float = 0.0) -> GaussRef:
    if not isinstance(support, IntegerInterval):
        support = IntegerInterval(*support)
    return GaussRef(float(sigma), support, mode, float(mean))


# -- stationary laws ---------------------------------------------------------

def _normalize_log(logw: np.ndarray) -> np.ndarray:
    w = np.exp(logw - logw.max())
    return w / math.fsum(w)


def stationary_distribution(spec: ChainSpec) -> ProbVector:
    """Stationary law from detailed balance ``pi(k+1)/pi(k) = up(k)/down(k+1)``.

    The recursion runs on log-masses, anchored at the largest one before
    exponentiating, so neither huge rates nor Gaussian tails overflow.
    """
    if spec.absorbing_states:
        raise StationaryError("chain has absorbing states; its stationary law is a point mass. "
                              "Use the transient solver instead")
    lu, ld = spec.log_up[:-1], spec.log_down[1:]
    if not (np.all(np.isfinite(lu)) and np.all(np.isfinite(ld))):
        bad = int(np.flatnonzero(~(np.isfinite(lu) & np.isfinite(ld)))[0]) + spec.support.lo
        raise StationaryError(f"chain is reducible across the edge ({bad}, {bad + 1})")
    logw = np.concatenate(([0.0], np.cumsum(lu - ld)))
    return ProbVector(spec.support, _normalize_log(logw))


def _log_jump_probs(spec: ChainSpec) -> tuple[np.ndarray, np.ndarray]:
    lu, ld = spec.log_up, spec.log_down
    with np.errstate(invalid="ignore"):
        tot = np.logaddexp(lu, ld)
        log_p = lu - tot
        log_q = ld - tot
    # lazy boundary rows: hold or step inward with probability 1/2 each
    log_p[0] = log_q[-1] = math.log(0.5)
    return log_p, log_q


def jump_chain_stationary(spec: ChainSpec) -> ProbVector:
    """Stationary law of the embedded jump chain with lazy end states.

    Interior states step up with probability ``up/(up+down)``; the two end
    states stay put or step inward with probability 1/2 each.
    """
    if spec.absorbing_states:
        raise StationaryError("jump-chain stationary law needs a reflecting chain")
    if len(spec.support) == 1:
        return ProbVector(spec.support, np.ones(1))
    log_p, log_q = _log_jump_probs(spec)
    inc = log_p[:-1] - log_q[1:]
    if not np.all(np.isfinite(inc)):
        raise StationaryError("jump chain is reducible")
    logw = np.concatenate(([0.0], np.cumsum(inc)))
    return ProbVector(spec.support, _normalize_log(logw))


# -- distances ---------------------------------------------------------------

def _as_mass(x) -> tuple[IntegerInterval, np.ndarray]:
    if isinstance(x, (ProbVector, GaussRef)):
        return x.support, np.asarray(x.mass)
    raise TypeError(f"expected ProbVector or GaussRef, got {type(x).__name__}")


def l1_distance(p, q) -> float:
    """``sum_k |p_k - q_k|`` over the union of supports; mass outside the overlap counts fully."""
    sp, mp = _as_mass(p)
    sq, mq = _as_mass(q)
    hull = sp.hull(sq)
    return math.fsum(np.abs(_aligned_raw(sp, mp, hull) - _aligned_raw(sq, mq, hull)))


def tv_distance(p, q) -> float:
    return 0.5 * l1_distance(p, q)


def kolmogorov_distance(p: ProbVector, mean: float, sigma: float) -> float:
    """``sup_x |P(X <= x) - Phi((x - mean)/sigma)|`` for a lattice law ``p``.

    Between lattice points the step CDF is constant and ``Phi`` monotone, so
    the supremum is attained at a lattice point from the left or the right.
    """
    F = np.clip(p.cdf(), 0.0, None)
    F_left = np.concatenate(([0.0], F[:-1]))
    Phi = ndtr((p.states - mean) / sigma)
    d = np.maximum(np.abs(F - Phi), np.abs(F_left - Phi))
    # beyond the last lattice point the law is complete only up to p.total
    tail = abs(F[-1] - 1.0)
    return float(max(d.max(), tail))


# -- verification of the Gaussian stationary law -----------------------------

def statdist_certificate(spec: ChainSpec, a_n: int, sigma_n: float, K: float | None = None,
                         eta_n: float | None = None, K_max: float = 10.0) -> BoundReport:
    """Check the Gaussian stationary-law estimate on a reflecting walk on ``[-b, b]``.

    The rate hypothesis is checked from the actual rates:
    ``log(up[k]/down[k+1]) = -k/sigma_n**2 + delta(k)`` on ``[-a_n, a_n]``, and
    at least ``eta_n`` (resp. at most ``-eta_n``) left (resp. right) of it.
    When ``K`` is omitted it is fitted as ``sum|delta| * sigma_n**2 / a_n``;
    a fitted ``K`` above ``K_max`` counts as a violated hypothesis.

    The conclusions checked against the exact stationary law are the
    per-state error bound ``|eps_k| <= (4 + 2K) a_n / sigma_n**2`` and the
    tail bound ``sum_{|k| > a_n} pi(k) <= (a_n/sigma_n**2) exp((3 + 2K) a_n / sigma_n**2)``.
    """
    sup = spec.support
    b_lo, b_hi = -sup.lo, sup.hi
    b = min(b_lo, b_hi)
    a = int(a_n)
    s2 = float(sigma_n) ** 2
    rep = BoundReport("statdist_certificate",
                      {"a_n": a, "sigma_n": float(sigma_n), "b_n": b, "K": K, "eta_n": eta_n,
                       "K_max": K_max, "spec": repr(spec)})
    rep.add_precondition("symmetric support [-b, b] containing [-a, a]",
                         b_lo == b_hi and b >= a >= 0, detail=f"support [{sup.lo}, {sup.hi}]")
    a_min = math.ceil(float(sigma_n) * math.sqrt(2.0 * math.log(sigma_n))) if sigma_n > 1 else 0
    rep.add_precondition("ceil(sigma sqrt(2 log sigma)) <= a_n", a >= a_min, a, a_min)
    rep.extras["a_over_sigma2"] = a / s2

    edges = sup.states()[:-1]
    log_ratio = spec.log_up[:-1] - spec.log_down[1:]
    inner = (edges >= -a) & (edges <= a)
    delta = log_ratio[inner] + edges[inner] / s2
    sum_delta = math.fsum(np.abs(delta)) if delta.size else 0.0
    if not np.all(np.isfinite(delta)):
        sum_delta = math.inf
    fitted = K is None
    K_fit = sum_delta * s2 / a if a > 0 else 0.0
    K_used = K_fit if fitted else float(K)
    rep.extras.update(delta_abs_sum=sum_delta, K_fitted=fitted, K_used=K_used, delta=delta)
    if fitted:
        rep.add_precondition("fitted K within K_max", K_fit <= K_max, K_fit, K_max,
                             detail="K auto-fitted from the rates")
    rep.add_precondition("sum |delta| <= K a_n / sigma_n^2", sum_delta <= K_used * a / s2 * (1 + 1e-12),
                         sum_delta, K_used * a / s2)

    left = edges < -a
    right = edges > a
    far_left = log_ratio[left]
    far_right = log_ratio[right]
    eta_avail = float(min(np.min(far_left) if far_left.size else math.inf,
                          -np.max(far_right) if far_right.size else math.inf))
    eta = eta_avail if eta_n is None else float(eta_n)
    rep.extras["eta_available"] = eta_avail
    rep.add_precondition("far-region drift at least eta_n toward 0", eta_avail >= eta and eta >= 0,
                         eta_avail, eta)
    z = a * a / (2 * s2)
    eta_need = math.sqrt(2 / math.pi) * (sigma_n / a) * math.exp(-z) if a > 0 else math.inf
    width_allow = math.sqrt(math.pi / 2) * (a / sigma_n) * math.exp(z) if a > 0 else 0.0
    rep.add_precondition("eta_n large enough or b_n - a_n small enough",
                         eta >= eta_need or (b - a) <= width_allow, eta, eta_need,
                         detail=f"b-a={b - a}, allowed width {width_allow:.6g}")

    pi = stationary_distribution(spec)
    k = np.arange(-a, a + 1)
    pk = pi.aligned(IntegerInterval(-a, a))
    with np.errstate(divide="ignore"):
        eps = np.log(pk * SQRT_2PI * sigma_n) + 0.5 * k * k / s2
    eps_max = float(np.max(np.abs(eps)))
    eps_bound = (4 + 2 * K_used) * a / s2
    rep.extras["eps"] = eps
    rep.add_check("|eps_k| <= (4+2K) a_n / sigma_n^2", eps_max <= eps_bound, eps_max, eps_bound)
    tail = max(0.0, 1.0 - math.fsum(pk))
    tail_bound = a / s2 * math.exp((3 + 2 * K_used) * a / s2)
    rep.add_check("tail mass <= (a_n/sigma_n^2) exp((3+2K) a_n/sigma_n^2)", tail <= tail_bound,
                  tail, tail_bound)
    rep.value = eps_bound
    rep.comparison = {"max_abs_eps": eps_max, "tail_mass": tail}
    return rep


def gaussian_sum_check(sigma: float, b: int) -> BoundReport:
    """Compare ``sum_{|k| <= b} exp(-k**2 / (2 sigma**2))`` with its additive and multiplicative bounds.

    Raises :class:`ValueError` when ``b < sigma * sqrt(2 log sigma)``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    threshold = sigma * math.sqrt(2.0 * math.log(sigma)) if sigma > 1 else 0.0
    if b < threshold:
        raise ValueError(f"b={b} is below sigma*sqrt(2 log sigma) = {threshold:.6g}")
    k = np.arange(1, int(b) + 1, dtype=np.float64)
    total = 1.0 + 2.0 * math.fsum(np.exp(-0.5 * (k / sigma) ** 2))
    base = SQRT_2PI * sigma
    add_lo, add_hi = base - (1 + 2 * SQRT_2PI), base + 1
    mul_lo, mul_hi = base * math.exp(-b / sigma**2), base * math.exp(b / sigma**2)
    rep = BoundReport("gaussian_sum_check", {"sigma": sigma, "b": int(b)}, value=total,
                      log_value=math.log(total))
    rep.add_precondition("b >= sigma sqrt(2 log sigma)", True, b, threshold)
    rep.add_check("additive lower", total >= add_lo, total, add_lo)
    rep.add_check("additive upper", total <= add_hi, total, add_hi)
    rep.add_check("multiplicative lower", total >= mul_lo, total, mul_lo)
    rep.add_check("multiplicative upper", total <= mul_hi, total, mul_hi)
    rep.comparison = {"additive": [add_lo, add_hi], "multiplicative": [mul_lo, mul_hi]}
    return rep
