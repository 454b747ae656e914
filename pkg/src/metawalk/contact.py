"""Supercritical contact process on the complete graph: constants, window and distances.

The infected count is the chain of :func:`metawalk.model.contact_spec`.
Shifting it by ``k0 = ceil((1 - 1/lam) n)`` gives a walk attracted to 0 to
which the general window machinery applies with ``sigma_n**2 = n/lam``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import Window, WindowParams, metastable_window, theorem_conditions_check
from .model import Boundary, contact_equilibrium, contact_spec, restrict, translate
from .report import BoundReport
from .simulate import hitting_time_samples
from .stationary import IntegerInterval, gaussian_reference, kolmogorov_distance, l1_distance
from .transient import TransientPropagator

__all__ = [
    "ContactParams",
    "contact_constants",
    "lemma_threshold",
    "theorem_threshold",
    "MetastabilityDistance",
    "metastability_distance",
    "distance_series",
    "write_distance_csv",
    "early_phase_check",
    "window_report",
    "translated_contact_spec",
    "reflecting_contact_spec",
    "contact_delta",
    "MAX_DESK_N",
]

MAX_DESK_N = 4096


def lemma_threshold(lam: float) -> float:
    """Initial-condition constant of the early-phase lemma, ``(2 lam + 2)/(lam - 1)``."""
    return (2 * lam + 2) / (lam - 1)


def theorem_threshold(lam: float) -> float:
    """Initial-condition constant of the metastability theorem, ``2 (lam + 2)/(lam - 1)``."""
    return 2 * (lam + 2) / (lam - 1)


def translated_contact_spec(n: int, lam: float):
    k0, _ = contact_equilibrium(n, lam)
    return translate(contact_spec(n, lam), -k0)


def reflecting_contact_spec(n: int, lam: float):
    """Contact chain with the absorbing state removed (reflecting at 1)."""
    return restrict(contact_spec(n, lam), 1, n, Boundary.REFLECTING)


def contact_delta(n: int, lam: float, a: int) -> np.ndarray:
    """``delta(k)`` in ``up(k)/down(k+1) = (1 - k lam/n)(1 + delta(k))`` for the shifted chain, ``-a <= k <= a-1``."""
    spec = translated_contact_spec(n, lam)
    ks = np.arange(-a, a)
    i = spec.support.index(-a)
    ratio = np.exp(spec.log_up[i:i + 2 * a] - spec.log_down[i + 1:i + 2 * a + 1])
    return ratio / (1.0 - ks * lam / n) - 1.0


@dataclass(frozen=True)
class ContactParams:
    """Constants of the contact chain for given ``n``, ``lam`` and window scale ``g``.

    Exact values come from the shifted rates; ``*_asym`` fields hold the
    leading-order formulas for comparison.
    """

    n: int
    lam: float
    k0: int
    eps0: float
    mu: float
    sigma_n: float
    g: float
    a_n: int
    a_capped: bool
    d_n: float
    d_n_exact_h: float | None
    rho_n: float
    kappa_n: float
    d_n_asym: float
    rho_n_asym: float
    kappa_n_asym: float
    c_lemma: float
    c_theorem: float
    flags: dict = field(default_factory=dict)

    @property
    def a_over_n(self) -> float:
        return self.a_n / self.n

    def window_params(self, c_n: float | None = None) -> WindowParams:
        if c_n is None:
            c_n = 2.0 * math.log(self.a_n) / (self.d_n * self.n)
        return WindowParams(self.n, self.sigma_n, self.a_n, self.d_n, self.rho_n, self.kappa_n, c_n)


def contact_constants(n: int, lam: float, g: float | None = None) -> ContactParams:
    """Compute ``k0``, ``sigma_n``, ``a_n = ceil(2 n sqrt(g))`` and the exact ``d_n, rho_n, kappa_n``.

    ``g`` defaults to ``log(n)/n``. When ``a_n`` exceeds the room on either
    side of ``k0`` it is capped there and ``a_capped`` is set.
    """
    if not lam > 1:
        raise ValueError("only lam > 1 is supported")
    if g is None:
        g = math.log(n) / n
    k0, eps0 = contact_equilibrium(n, lam)
    mu = (1 - 1 / lam) * n
    sigma = math.sqrt(n / lam)
    a_raw = math.ceil(2 * n * math.sqrt(g) - 1e-9)
    room = min(k0 - 1, n - k0)
    a = min(a_raw, room)
    spec = translated_contact_spec(n, lam)
    rep = theorem_conditions_check(spec, sigma, a)
    ex = rep.extras
    a_lower = 2 * math.sqrt(n * math.log(n) / lam)
    flags = {
        "g >= log(n)/n": g >= math.log(n) / n * (1 - 1e-12),
        "a_n > 2 sqrt(n log n / lam)": a > a_lower,
        "a_n not capped": a == a_raw,
        "|k0 - mu| < 1": abs(k0 - mu) < 1,
        "conditions 1-3 hold": rep.passed,
    }
    return ContactParams(
        n=n, lam=lam, k0=k0, eps0=eps0, mu=mu, sigma_n=sigma, g=g, a_n=a, a_capped=a != a_raw,
        d_n=ex["d_discrete"], d_n_exact_h=ex["d_exact"], rho_n=ex["rho_n"], kappa_n=ex["kappa_n"],
        d_n_asym=lam - 1, rho_n_asym=1 - lam * a / (2 * n), kappa_n_asym=2 * (lam - 1) * n / lam,
        c_lemma=lemma_threshold(lam), c_theorem=theorem_threshold(lam), flags=flags,
    )


@dataclass(frozen=True)
class MetastabilityDistance:
    """Distances between the exact law of the infected count and ``N(mu, n/lam)``."""

    n: int
    lam: float
    x0: int
    t: float
    kolmogorov: float
    l1: float
    absorbed: float
    mean: float

    def __float__(self) -> float:
        return self.kolmogorov


def _reference(n, lam):
    mu = (1 - 1 / lam) * n
    sigma = math.sqrt(n / lam)
    return mu, sigma, gaussian_reference(sigma, IntegerInterval(0, n), "lattice-normalized", mean=mu)


def metastability_distance(n: int, lam: float, x0: int, t: float, method: str = "ql",
                           max_n: int = MAX_DESK_N) -> MetastabilityDistance:
    """Kolmogorov and L1 distance of the exact law at time ``t`` to the Gaussian.

    The law includes the atom at the absorbing state 0. The Kolmogorov
    distance is taken against ``N(mu, n/lam)`` with ``mu = (1 - 1/lam) n``;
    the L1 distance against its lattice-normalized discretization on ``[0, n]``.
    """
    return distance_series(n, lam, x0, [t], method=method, max_n=max_n)[0]


def distance_series(n: int, lam: float, x0: int, times, method: str = "ql",
                    max_n: int = MAX_DESK_N, workers: int = 1) -> list[MetastabilityDistance]:
    if n > max_n:
        raise ValueError(f"n={n} exceeds the desk-scale cap {max_n}; raise max_n to override")
    spec = contact_spec(n, lam)
    mu, sigma, ref = _reference(n, lam)
    prop = TransientPropagator(spec, int(x0), method=method)
    out = []
    for t, p in zip(times, prop.many(list(times), workers=workers)):
        out.append(MetastabilityDistance(n, lam, int(x0), float(t), kolmogorov_distance(p, mu, sigma),
                                         l1_distance(p, ref), p[0], p.mean()))
    return out


DISTANCE_COLUMNS = ("t", "kolmogorov", "l1", "absorbed", "mean")


def write_distance_csv(rows, fh=None, header: str | None = None):
    buf = io.StringIO() if fh is None else fh
    if header:
        for line in header.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DISTANCE_COLUMNS)
    for r in rows:
        w.writerow([repr(float(getattr(r, c))) for c in DISTANCE_COLUMNS])
    return buf.getvalue() if fh is None else None


def early_phase_check(n: int, lam: float, c: float, reps: int, seed: int, g: float | None = None,
                      tolerance: float = 0.05, workers: int = 1) -> BoundReport:
    """Estimate ``P(T > n/2)`` for the entry time ``T`` of ``[k0 - a_n/2, k0 + a_n/2]`` from ``ceil(c log n)``.

    The lemma's constant is the precondition; the theorem's larger constant
    is reported alongside, since the two differ.
    """
    params = contact_constants(n, lam, g)
    x0 = math.ceil(c * math.log(n))
    lo = math.ceil(params.k0 - params.a_n / 2)
    hi = math.floor(params.k0 + params.a_n / 2)
    spec = contact_spec(n, lam)
    rep = BoundReport("early_phase_check", {"n": n, "lambda": lam, "c": c, "reps": reps, "seed": seed,
                                            "x0": x0, "window": [lo, hi], "horizon": n / 2})
    rep.add_precondition("c > (2 lam + 2)/(lam - 1)", c > params.c_lemma, c, params.c_lemma)
    rep.extras["theorem_threshold_met"] = c > params.c_theorem
    rep.extras["c_theorem"] = params.c_theorem
    x0 = min(x0, n)
    samples = hitting_time_samples(spec, x0, range(lo, hi + 1), n / 2, reps, seed, workers=workers)
    p = samples.tail(n / 2)
    se = samples.se(p)
    rep.value = p
    rep.comparison = {"tail": p, "se": se, "median_T": samples.median()}
    rep.add_check(f"P(T > n/2) < {tolerance}", p < tolerance, p, tolerance)
    rep.extras["samples"] = samples
    return rep


def window_report(n: int, lam: float, g: float | None = None) -> BoundReport:
    """Window ``I_n`` with ``c_n = 2 log(a_n)/(d_n n)`` and the containment ``[n/2, exp(g n)]`` in ``I_n``."""
    params = contact_constants(n, lam, g)
    g = params.g
    if not (params.d_n > 0 and 0 < params.rho_n < 1):
        rep = BoundReport("contact_window_report", {"n": n, "lambda": lam, "g": g, "a_n": params.a_n,
                                                    "d_n": params.d_n, "rho_n": params.rho_n})
        for name, ok in params.flags.items():
            rep.add_precondition(name, ok)
        why = f"no window: d_n = {params.d_n:.6g}, rho_n = {params.rho_n:.6g}"
        rep.add_check("n/2 >= t_lo", False, math.nan, 0.0, detail=why)
        rep.add_check("exp(g n) <= t_hi", False, math.nan, 0.0, detail=why)
        rep.comparison = {"log_t_lo": math.nan, "log_t_hi": math.nan, "lam_g_n": lam * g * n, "empty": True}
        rep.extras["params"] = params
        return rep
    wp = params.window_params()
    win: Window = metastable_window(wp)
    rep = BoundReport("contact_window_report", {"n": n, "lambda": lam, "g": g, "a_n": params.a_n,
                                                "c_n": wp.c_n, "d_n": wp.d_n, "rho_n": wp.rho_n,
                                                "kappa_n": wp.kappa_n})
    for name, ok in params.flags.items():
        rep.add_precondition(name, ok)
    margin_lo = math.log(n / 2) - win.log_t_lo
    margin_hi = win.log_t_hi - g * n
    tol = 1e-12 * max(1.0, abs(win.log_t_lo))
    rep.add_check("n/2 >= t_lo", margin_lo >= -tol, margin_lo, 0.0, detail="log-time margin")
    rep.add_check("exp(g n) <= t_hi", margin_hi >= 0, margin_hi, 0.0, detail="log-time margin")
    rep.value = win.log_t_hi
    rep.log_value = win.log_t_hi
    rep.comparison = {"log_t_lo": win.log_t_lo, "log_t_hi": win.log_t_hi, "lam_g_n": lam * g * n,
                      "log_t_hi_over_g_n": win.log_t_hi / (g * n), "empty": win.empty}
    rep.extras["params"] = params
    return rep
