"""Closed-form extinction, mixing and boundary-hitting bounds, and the metastable window.

Every bound is returned as a :class:`~metawalk.report.BoundReport` carrying its
inputs, its value (and log-value, since several of these quantities overflow)
and the status of each hypothesis it depends on.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import ChainSpec, drift_profile
from .report import BoundReport

__all__ = [
    "ExtinctionConstants",
    "extinction_constants",
    "chain_extinction_constants",
    "discrete_extinction_bound",
    "continuous_extinction_bound",
    "linear_speed_extinction_bound",
    "mixing_bound",
    "boundary_hit_bound",
    "WindowParams",
    "Window",
    "metastable_window",
    "theorem_conditions_check",
    "window_params_from_spec",
    "exact_speed_derivative",
    "K_MAX",
]

K_MAX = 10.0


def _log_or_neg_inf(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _exp_or_inf(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


# -- extinction --------------------------------------------------------------

def discrete_extinction_bound(p: float, n: int, i: int) -> BoundReport:
    """``P(T_n < i) <= (i - 1) (q/p)**(n - 1)`` for the discrete walk on ``[0, n]`` with up-probability ``p``."""
    if not p > 0.5 or not p <= 1:
        raise ValueError("need 1/2 < p <= 1")
    q = 1.0 - p
    if i <= 1 or q == 0:
        log_v = -math.inf
    else:
        log_v = math.log(i - 1) + (n - 1) * (math.log(q) - math.log(p))
    rep = BoundReport("discrete_extinction_bound", {"p": p, "n": n, "i": i},
                      value=_exp_or_inf(log_v), log_value=log_v)
    rep.add_precondition("p > 1/2", True, p, 0.5)
    return rep


@dataclass(frozen=True)
class ExtinctionConstants:
    """Constants of the continuous-time extinction estimate for a given ``eps``."""

    eps: float
    delta: float
    eta: float
    C1: float
    C2: float


def extinction_constants(eps: float) -> ExtinctionConstants:
    """``delta = log((1 + 3eps/4)/(1 + eps/2))``, ``eta = e**-delta - (1 - delta)``,
    ``C1 = max(log(2/eps)/eta, 2 + 4/eps)``, ``C2 = 1/eta``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    delta = math.log1p(0.75 * eps) - math.log1p(0.5 * eps)
    eta = math.expm1(-delta) + delta
    C1 = max(math.log(2.0 / eps) / eta, 2.0 + 4.0 / eps)
    return ExtinctionConstants(eps, delta, eta, C1, 1.0 / eta)


def chain_extinction_constants(spec: ChainSpec) -> tuple[float, float]:
    """``(kappa, rho)`` for a chain on ``[0, n]`` absorbed at 0.

    ``kappa = max_k (up + down)``, ``rho = max_{0 < k < n} down/up``.
    """
    up, down = spec.up[1:], spec.down[1:]
    kappa = float(np.max(up + down))
    with np.errstate(divide="ignore"):
        rho = float(np.max(down[:-1] / up[:-1])) if up.size > 1 else math.inf
    return kappa, rho


def continuous_extinction_bound(kappa: float, rho: float, n: int, t: float, eps: float = 1.0) -> BoundReport:
    """``P(T_n < t) <= (1 + eps) kappa t rho**(n - 1)``, valid once ``kappa t >= C1 + C2 n log(1/rho)``."""
    c = extinction_constants(eps)
    rep = BoundReport("continuous_extinction_bound",
                      {"kappa": kappa, "rho": rho, "n": n, "t": t, "eps": eps})
    rep.extras.update(asdict(c))
    rep.add_precondition("rho < 1", rho < 1, rho, 1.0)
    rep.add_precondition("eps > 0", eps > 0, eps, 0.0)
    need = c.C1 + c.C2 * n * (-math.log(rho)) if 0 < rho < 1 else math.inf
    rep.add_precondition("kappa t >= C1 + C2 n log(1/rho)", kappa * t >= need, kappa * t, need)
    log_v = math.log1p(eps) + _log_or_neg_inf(kappa * t) + (n - 1) * _log_or_neg_inf(rho)
    rep.value, rep.log_value = _exp_or_inf(log_v), log_v
    return rep


def linear_speed_extinction_bound(n: int, d: float, t: float) -> BoundReport:
    """``P(T_n > t) <= n exp(-d t)`` when ``up(k) - down(k) = -d k``."""
    rep = BoundReport("linear_speed_extinction_bound", {"n": n, "d": d, "t": t})
    rep.add_precondition("d > 0", d > 0, d, 0.0)
    log_v = _log_or_neg_inf(n) - d * t
    rep.value, rep.log_value = n * _exp_or_inf(-d * t), log_v
    return rep


def mixing_bound(a_n: int, d: float, t: float) -> BoundReport:
    """``|P(W_t <= k) - P(W_inf <= k)| <= 2 a_n exp(-d t)``."""
    rep = BoundReport("mixing_bound", {"a_n": a_n, "d": d, "t": t})
    rep.add_precondition("d > 0", d > 0, d, 0.0)
    log_v = _log_or_neg_inf(2 * a_n) - d * t
    rep.value, rep.log_value = 2 * a_n * _exp_or_inf(-d * t), log_v
    rep.extras["t_star"] = math.log(2 * a_n) / d if d > 0 and a_n > 0 else math.nan
    return rep


# -- window --------------------------------------------------------------------

@dataclass(frozen=True)
class WindowParams:
    """Constants entering the metastable window.

    ``c_n`` defaults to ``1 / log(a_n)``.
    """

    n: float
    sigma_n: float
    a_n: int
    d_n: float
    rho_n: float
    kappa_n: float
    c_n: float | None = None

    def __post_init__(self):
        if self.c_n is None:
            object.__setattr__(self, "c_n", 1.0 / math.log(self.a_n))
        for name in ("sigma_n", "d_n", "rho_n", "kappa_n", "c_n"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def flags(self) -> dict[str, bool]:
        """Which parameter invariants hold (violations are reported, not raised)."""
        s = self.sigma_n
        a_min = math.ceil(s * math.sqrt(2 * math.log(s))) if s > 1 else 0
        return {
            "rho_n in (1/e, 1)": math.exp(-1) < self.rho_n < 1,
            "a_n >= ceil(sigma sqrt(2 log sigma))": self.a_n >= a_min,
        }


@dataclass(frozen=True)
class Window:
    """``[t_lo, t_hi]`` with both ends also kept as logarithms."""

    log_t_lo: float
    log_t_hi: float

    @property
    def t_lo(self) -> float:
        return _exp_or_inf(self.log_t_lo)

    @property
    def t_hi(self) -> float:
        return _exp_or_inf(self.log_t_hi)

    @property
    def empty(self) -> bool:
        return self.log_t_lo > self.log_t_hi

    @property
    def log_length_ratio(self) -> float:
        return self.log_t_hi - self.log_t_lo

    def as_tuple(self):
        return None if self.empty else (self.t_lo, self.t_hi)

    def contains(self, lo: float, hi: float) -> bool:
        return (not self.empty) and self.log_t_lo <= math.log(lo) and math.log(hi) <= self.log_t_hi


def metastable_window(params: WindowParams) -> Window:
    """``t_lo = log(a_n)/(d_n c_n)`` and ``t_hi = c_n rho_n**(-a_n/2) / kappa_n``, in log-space."""
    p = params
    log_lo = math.log(math.log(p.a_n)) - math.log(p.d_n) - math.log(p.c_n)
    log_hi = math.log(p.c_n) - 0.5 * p.a_n * math.log(p.rho_n) - math.log(p.kappa_n)
    return Window(log_lo, log_hi)


def boundary_hit_bound(params: WindowParams, t: float, eps: float = 1.0) -> BoundReport:
    """``P(T_n < t) <= (2 + eps) kappa_n t rho_n**(a_n/2 - 1)`` for the exit time of ``[-a_n, a_n]``."""
    p = params
    c = extinction_constants(eps)
    rep = BoundReport("boundary_hit_bound", {**asdict(p), "t": t, "eps": eps})
    rep.extras.update(asdict(c))
    rep.add_precondition("rho_n < 1", p.rho_n < 1, p.rho_n, 1.0)
    need = c.C1 + c.C2 * p.a_n * (-math.log(p.rho_n)) if p.rho_n < 1 else math.inf
    rep.add_precondition("kappa t >= C1 + C2 a_n log(1/rho)", p.kappa_n * t >= need, p.kappa_n * t, need)
    log_v = math.log(2 + eps) + _log_or_neg_inf(p.kappa_n * t) + (0.5 * p.a_n - 1) * math.log(p.rho_n)
    rep.value, rep.log_value = _exp_or_inf(log_v), log_v
    return rep


# -- theorem conditions --------------------------------------------------------

def exact_speed_derivative(spec: ChainSpec):
    """Derivative of the natural interpolant ``h`` of ``up - down`` for built-in chains, else None.

    The interpolant comes from the rate formula of the named chain, shifted by
    any translation applied to it.
    """
    p = spec.params
    shift = p.get("shift", 0)
    kind = spec.kind
    if kind == "example_walk":
        n = p["n"]
        return lambda x: np.full_like(np.asarray(x, float), -1.0 / n)
    if kind == "contact":
        n, lam = p["n"], p["lambda"]
        return lambda x: lam * (n - 2 * (np.asarray(x, float) - shift)) / n - 1.0
    if kind == "linear_speed_walk":
        return lambda x: np.full_like(np.asarray(x, float), -p["d"])
    if kind == "gaussian_ratio":
        s2 = p["sigma"] ** 2
        return lambda x: -np.exp(-(np.asarray(x, float) - shift) / s2) / s2
    if kind == "symmetric_walk":
        return lambda x: np.zeros_like(np.asarray(x, float))
    return None


def _ratio_pow(up, down, sgn):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(sgn > 0, up / down, down / up)


def theorem_conditions_check(spec: ChainSpec, sigma_n: float, a_n: int, K: float | None = None,
                             eps: float = 1.0, K_max: float = K_MAX) -> BoundReport:
    """Check the three rate conditions of the metastability theorem on ``[-a_n, a_n]``.

    1. ``log(up[k]/down[k+1]) = -k/sigma_n**2 + delta(k)`` with
       ``sum|delta| <= K a_n/sigma_n**2``; the multiplicative form
       ``up[k]/down[k+1] = 1 - k/sigma_n**2 + delta(k)`` is accepted too.
    2. Speed differences ``s(k+1) - s(k) <= -d_n``; the largest admissible
       ``d_n`` is reported. For named chains the exact derivative of the
       rate formula is checked as well.
    3. ``1/e < rho_n < 1 - (2 + eps) log(a_n)/a_n``, with ``rho_n`` and
       ``kappa_n`` maximized over ``a_n/2 <= |k| <= a_n``.
    """
    a = int(a_n)
    s2 = float(sigma_n) ** 2
    sup = spec.support
    rep = BoundReport("theorem_conditions_check",
                      {"sigma_n": sigma_n, "a_n": a, "K": K, "eps": eps, "spec": repr(spec)})
    inside = -a in sup and a in sup
    rep.add_precondition("[-a_n, a_n] inside the support", inside, detail=f"[{sup.lo}, {sup.hi}]")
    if not inside:
        return rep
    i0 = sup.index(-a)
    ks = np.arange(-a, a)  # edges k -> k+1 with k in [-a, a-1]
    lu = spec.log_up[i0:i0 + 2 * a]
    ld = spec.log_down[i0 + 1:i0 + 2 * a + 1]
    log_ratio = lu - ld
    delta_log = log_ratio + ks / s2
    with np.errstate(over="ignore"):
        delta_lin = np.exp(log_ratio) - (1.0 - ks / s2)
    sums = {
        "log": math.fsum(np.abs(delta_log)) if np.all(np.isfinite(delta_log)) else math.inf,
        "linear": math.fsum(np.abs(delta_lin)) if np.all(np.isfinite(delta_lin)) else math.inf,
    }
    form = min(sums, key=sums.get)
    K_fit = sums[form] * s2 / a if a > 0 else 0.0
    K_used = K_fit if K is None else float(K)
    rep.extras.update(delta_log=delta_log, delta_linear=delta_lin, delta_sums=sums, delta_form=form,
                      K_fitted=K is None, K_used=K_used)
    ok1 = sums[form] <= K_used * a / s2 * (1 + 1e-12) + 1e-300
    if K is None:
        ok1 = ok1 and K_fit <= K_max
    rep.add_check("condition 1: sum |delta| <= K a_n / sigma_n^2", ok1, sums[form], K_used * a / s2,
                  detail=f"{form} form, K {'fitted' if K is None else 'given'} = {K_used:.6g}")

    prof = drift_profile(spec)
    speed = prof.speed[i0:i0 + 2 * a + 1]
    diffs = np.diff(speed)
    d_disc = float(-np.max(diffs)) if diffs.size else math.inf
    h_prime = exact_speed_derivative(spec)
    d_exact = None
    if h_prime is not None:
        d_exact = float(-max(h_prime(-a), h_prime(a), np.max(h_prime(np.linspace(-a, a, 257)))))
    rep.extras.update(d_discrete=d_disc, d_exact=d_exact)
    ok2 = d_disc > 0 and (d_exact is None or d_exact > 0)
    rep.add_check("condition 2: speed decreases at rate d_n > 0", ok2, d_disc, 0.0,
                  detail="discrete differences" + ("" if d_exact is None else f"; exact h' gives {d_exact:.6g}"))

    kk = sup.states()
    band = (np.abs(kk) * 2 >= a) & (np.abs(kk) <= a)
    up, down = spec.up[band], spec.down[band]
    rho = float(np.max(_ratio_pow(up, down, np.sign(kk[band]))))
    kappa = float(np.max(up + down))
    rho_cap = 1 - (2 + eps) * math.log(a) / a if a > 1 else -math.inf
    rep.extras.update(rho_n=rho, kappa_n=kappa, rho_upper=rho_cap)
    rep.add_check("condition 3: 1/e < rho_n < 1 - (2+eps) log(a_n)/a_n",
                  math.exp(-1) < rho < rho_cap, rho, rho_cap)
    d_for_obs = d_disc if d_exact is None else d_exact
    rep.add_check("2 kappa_n >= 2 d_n a_n", 2 * kappa >= 2 * d_for_obs * a, 2 * kappa, 2 * d_for_obs * a)
    rep.value = d_disc
    return rep


def window_params_from_spec(spec: ChainSpec, sigma_n: float, a_n: int, c_n: float | None = None,
                            n: float | None = None, prefer_exact: bool = True) -> tuple[WindowParams, BoundReport]:
    """Window constants measured from the rates, with the condition report they came from."""
    rep = theorem_conditions_check(spec, sigma_n, a_n)
    ex = rep.extras
    d_n = ex["d_exact"] if (prefer_exact and ex.get("d_exact") is not None) else ex["d_discrete"]
    params = WindowParams(n if n is not None else spec.params.get("n", math.nan), sigma_n, a_n,
                          d_n, ex["rho_n"], ex["kappa_n"], c_n)
    return params, rep
