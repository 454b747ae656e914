"""Chain specifications, generators and drift profiles for nearest-neighbour walks.

A :class:`ChainSpec` is a birth-death chain on a contiguous integer interval.
Rates are held in log-space (``log_up``, ``log_down``); a zero rate is ``-inf``.
Linear rates are derived on demand, so ratios such as ``up[k] / down[k + 1]``
stay exact even when the rates themselves overflow double precision.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .errors import ModelError

__all__ = [
    "IntegerInterval",
    "Boundary",
    "ChainSpec",
    "Generator",
    "DriftProfile",
    "build_generator",
    "drift_profile",
    "figure1_spec",
    "example_walk_spec",
    "example_walk_radius",
    "contact_spec",
    "contact_equilibrium",
    "gaussian_ratio_spec",
    "linear_speed_spec",
    "linear_speed_walk_spec",
    "pure_death_spec",
    "constant_rate_spec",
    "symmetric_walk_spec",
    "restrict",
    "translate",
]


@dataclass(frozen=True)
class IntegerInterval:
    """Closed integer interval ``[lo, hi]``; vectors on it are indexed by ``k - lo``."""

    lo: int
    hi: int

    def __post_init__(self):
        object.__setattr__(self, "lo", int(self.lo))
        object.__setattr__(self, "hi", int(self.hi))
        if self.lo > self.hi:
            raise ModelError(f"empty interval [{self.lo}, {self.hi}]")
        if self.hi - self.lo + 1 > 2**31:
            raise ModelError("interval too wide to address as a vector")

    def __len__(self) -> int:
        return self.hi - self.lo + 1

    def __contains__(self, k) -> bool:
        return self.lo <= k <= self.hi

    def __iter__(self):
        return iter(range(self.lo, self.hi + 1))

    @property
    def width(self) -> int:
        return len(self)

    def states(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1, dtype=np.int64)

    def index(self, k: int) -> int:
        if k not in self:
            raise ModelError(f"state {k} outside [{self.lo}, {self.hi}]")
        return int(k) - self.lo

    def intersect(self, other: "IntegerInterval") -> "IntegerInterval | None":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return IntegerInterval(lo, hi) if lo <= hi else None

    def hull(self, other: "IntegerInterval") -> "IntegerInterval":
        return IntegerInterval(min(self.lo, other.lo), max(self.hi, other.hi))


class Boundary(str, enum.Enum):
    REFLECTING = "reflecting"
    ABSORBING_LO = "absorbing-at-lo"
    ABSORBING_HI = "absorbing-at-hi"
    ABSORBING_BOTH = "absorbing-both"

    @property
    def absorbs_lo(self) -> bool:
        return self in (Boundary.ABSORBING_LO, Boundary.ABSORBING_BOTH)

    @property
    def absorbs_hi(self) -> bool:
        return self in (Boundary.ABSORBING_HI, Boundary.ABSORBING_BOTH)

    @classmethod
    def coerce(cls, value) -> "Boundary":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(b.value for b in cls)
            raise ModelError(f"unknown boundary {value!r}; expected one of {names}") from None


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """Birth-death chain: support, per-state log up/down rates and boundary behaviour.

    Boundary normalization happens on construction: the up rate at ``hi`` and
    the down rate at ``lo`` are forced to zero, and absorbing boundary states
    get both rates zero.
    """

    support: IntegerInterval
    log_up: np.ndarray
    log_down: np.ndarray
    boundary: Boundary = Boundary.REFLECTING
    kind: str = "tabulated"
    params: Mapping[str, float] = field(default_factory=dict)
    linear: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        boundary = Boundary.coerce(self.boundary)
        object.__setattr__(self, "boundary", boundary)
        n = len(self.support)
        log_up = np.array(self.log_up, dtype=np.float64).reshape(-1)
        log_down = np.array(self.log_down, dtype=np.float64).reshape(-1)
        if log_up.shape != (n,) or log_down.shape != (n,):
            raise ModelError(f"rate arrays must have length {n} to match the support")
        if np.isnan(log_up).any() or np.isnan(log_down).any():
            raise ModelError("rates must not be NaN")
        if np.isposinf(log_up).any() or np.isposinf(log_down).any():
            raise ModelError("rates must be finite")
        log_up[-1] = -np.inf
        log_down[0] = -np.inf
        if boundary.absorbs_lo:
            log_up[0] = log_down[0] = -np.inf
        if boundary.absorbs_hi:
            log_up[-1] = log_down[-1] = -np.inf
        if self.linear is None:
            with np.errstate(over="ignore"):
                up, down = np.exp(log_up), np.exp(log_down)
        else:
            # exact linear rates from the caller; the log arrays carry the same zeros
            up = np.array(self.linear[0], dtype=np.float64).reshape(-1)
            down = np.array(self.linear[1], dtype=np.float64).reshape(-1)
            if up.shape != (n,) or down.shape != (n,):
                raise ModelError(f"rate arrays must have length {n} to match the support")
            up[~np.isfinite(log_up)] = 0.0
            down[~np.isfinite(log_down)] = 0.0
        object.__setattr__(self, "log_up", _readonly(log_up))
        object.__setattr__(self, "log_down", _readonly(log_down))
        object.__setattr__(self, "linear", (_readonly(up), _readonly(down)))
        object.__setattr__(self, "params", dict(self.params))

    @classmethod
    def from_rates(cls, support, up, down, boundary=Boundary.REFLECTING, kind="tabulated", params=None):
        """Build from linear rates; negative or non-finite values raise :class:`ModelError`."""
        if not isinstance(support, IntegerInterval):
            support = IntegerInterval(*support)
        up = np.asarray(up, dtype=np.float64)
        down = np.asarray(down, dtype=np.float64)
        for name, r in (("up", up), ("down", down)):
            if not np.all(np.isfinite(r)):
                raise ModelError(f"{name} rates must be finite")
            if np.any(r < 0):
                k = support.lo + int(np.flatnonzero(r < 0)[0])
                raise ModelError(f"negative {name} rate at state {k}")
        with np.errstate(divide="ignore"):
            return cls(support, np.log(up), np.log(down), boundary, kind, params or {}, (up, down))

    # -- linear views -------------------------------------------------------
    @property
    def up(self) -> np.ndarray:
        return self.linear[0]

    @property
    def down(self) -> np.ndarray:
        return self.linear[1]

    def up_rate(self, k: int) -> float:
        return float(self.up[self.support.index(k)])

    def down_rate(self, k: int) -> float:
        return float(self.down[self.support.index(k)])

    @property
    def states(self) -> np.ndarray:
        return self.support.states()

    @property
    def max_rate(self) -> float:
        return float(np.max(self.up + self.down))

    @property
    def absorbing_states(self) -> tuple[int, ...]:
        out = []
        if self.boundary.absorbs_lo:
            out.append(self.support.lo)
        if self.boundary.absorbs_hi and self.support.hi not in out:
            out.append(self.support.hi)
        return tuple(out)

    @property
    def interior(self) -> IntegerInterval:
        """Non-absorbing states; raises if every state is absorbing."""
        lo = self.support.lo + (1 if self.boundary.absorbs_lo else 0)
        hi = self.support.hi - (1 if self.boundary.absorbs_hi else 0)
        if lo > hi:
            raise ModelError("chain has no non-absorbing states")
        return IntegerInterval(lo, hi)

    @property
    def is_irreducible(self) -> bool:
        if self.absorbing_states:
            return False
        return bool(np.all(np.isfinite(self.log_up[:-1])) and np.all(np.isfinite(self.log_down[1:])))

    def fingerprint(self) -> str:
        h = hashlib.sha1()
        h.update(f"{self.support.lo}:{self.support.hi}:{self.boundary.value}".encode())
        h.update(self.log_up.tobytes())
        h.update(self.log_down.tobytes())
        return h.hexdigest()

    def __repr__(self) -> str:
        p = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return (f"ChainSpec({self.kind}[{p}], support=[{self.support.lo}, {self.support.hi}], "
                f"boundary={self.boundary.value})")


@dataclass(frozen=True)
class Generator:
    """Tridiagonal CTMC generator on ``support``.

    ``sub[i]`` is the rate from state ``lo + i + 1`` down to ``lo + i``;
    ``super[i]`` the rate from ``lo + i`` up to ``lo + i + 1``.
    """

    support: IntegerInterval
    sub: np.ndarray
    diag: np.ndarray
    super: np.ndarray

    def row_sums(self) -> np.ndarray:
        off = np.zeros_like(self.diag)
        off[:-1] += self.super
        off[1:] += self.sub
        return off + self.diag

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.super, 1) + np.diag(self.sub, -1)

    def left_apply(self, p: np.ndarray) -> np.ndarray:
        """Row vector times generator, ``p @ Q``."""
        out = p * self.diag
        out[1:] += p[:-1] * self.super
        out[:-1] += p[1:] * self.sub
        return out


def build_generator(spec: ChainSpec) -> Generator:
    up, down = spec.up, spec.down
    if not (np.all(np.isfinite(up)) and np.all(np.isfinite(down))):
        raise ModelError("rates overflow double precision; use the log-rate APIs")
    # diag is minus the exact float sum of the two off-diagonal entries, so
    # (up + down) + diag cancels to zero bit-for-bit.
    return Generator(spec.support, sub=down[1:].copy(), diag=-(up + down), super=up[:-1].copy())


@dataclass(frozen=True)
class DriftProfile:
    """Per-state long-term drift, short-term drift and speed.

    Undefined ratios are NaN and flagged in the ``*_defined`` masks.
    """

    states: np.ndarray
    speed: np.ndarray
    log_long_term: np.ndarray
    log_short_term: np.ndarray
    long_term_defined: np.ndarray
    short_term_defined: np.ndarray

    @property
    def long_term(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_long_term)

    @property
    def short_term(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_short_term)


def drift_profile(spec: ChainSpec) -> DriftProfile:
    lu, ld = spec.log_up, spec.log_down
    n = len(spec.support)
    long_def = np.zeros(n, dtype=bool)
    long_def[:-1] = np.isfinite(ld[1:])
    short_def = np.isfinite(ld)
    log_long = np.full(n, np.nan)
    log_long[:-1][long_def[:-1]] = lu[:-1][long_def[:-1]] - ld[1:][long_def[:-1]]
    log_short = np.full(n, np.nan)
    log_short[short_def] = lu[short_def] - ld[short_def]
    with np.errstate(invalid="ignore", over="ignore"):
        speed = spec.up - spec.down
    return DriftProfile(spec.states, speed, log_long, log_short, long_def, short_def)


# -- named chains ----------------------------------------------------------

def figure1_spec(n: int, eps: float) -> ChainSpec:
    """Walk on ``[0, n]`` with up rate ``(1+eps)**(k*k)`` and down rate ``(1+eps)**(k*(k-1))``."""
    if n < 2:
        raise ModelError("figure1_spec needs n >= 2")
    if not eps > 0:
        raise ModelError("eps must be positive")
    k = np.arange(n + 1, dtype=np.float64)
    step = math.log1p(eps)
    log_up = k * k * step
    log_down = k * (k - 1) * step
    return ChainSpec(IntegerInterval(0, n), log_up, log_down, Boundary.REFLECTING,
                     kind="figure1", params={"n": n, "eps": eps})


def example_walk_radius(n: int) -> int:
    """Smallest integer ``a`` with ``a**4 >= n**3``, i.e. ``ceil(n**0.75)`` without rounding error."""
    a = max(1, int(round(n ** 0.75)))
    while a**4 < n**3:
        a += 1
    while a > 1 and (a - 1) ** 4 >= n**3:
        a -= 1
    return a


def example_walk_spec(n: int) -> ChainSpec:
    """Up rate ``1 - k/n``, down rate 1 on ``[-a, a]``, absorbing at ``+-(a + 1)``, ``a = ceil(n**0.75)``."""
    if n < 2:
        raise ModelError("example_walk_spec needs n >= 2")
    a = example_walk_radius(n)
    if a >= n:
        raise ModelError(f"n={n} too small: up rate 1 - k/n vanishes inside [-a, a]")
    support = IntegerInterval(-a - 1, a + 1)
    k = support.states().astype(np.float64)
    up = 1.0 - k / n
    down = np.ones_like(k)
    return ChainSpec.from_rates(support, up, down, Boundary.ABSORBING_BOTH, kind="example_walk",
                                params={"n": n, "a_n": a, "sigma_n": math.sqrt(n), "d_n": 1.0 / n})


def contact_equilibrium(n: int, lam: float) -> tuple[int, float]:
    """``k0 = ceil((1 - 1/lam) n)`` and the offset ``k0 - (1 - 1/lam) n`` in ``[0, 1)``."""
    mu = (1 - 1 / Fraction(lam)) * n
    k0 = math.ceil(mu)
    return k0, float(k0 - mu)


def contact_spec(n: int, lam: float) -> ChainSpec:
    """Infected count of the contact process on the complete graph ``K_n`` with infection rate ``lam / n``."""
    if n < 2:
        raise ModelError("contact_spec needs n >= 2")
    if not lam > 1:
        raise ModelError("only the supercritical regime lam > 1 is supported")
    k = np.arange(n + 1, dtype=np.float64)
    up = k * (n - k) * lam / n
    return ChainSpec.from_rates(IntegerInterval(0, n), up, k.copy(), Boundary.ABSORBING_LO,
                                kind="contact", params={"n": n, "lambda": lam})


def gaussian_ratio_spec(sigma: float, a: int, b: int | None = None, eta: float = 1.0) -> ChainSpec:
    """Reflecting walk on ``[-b, b]`` with ``up[k]/down[k+1] = exp(-k/sigma**2)`` on ``[-a, a]``.

    Outside ``[-a, a]`` the log-ratio is ``+eta`` (left) or ``-eta`` (right).
    Down rates are 1.
    """
    b = a if b is None else b
    if b < a:
        raise ModelError("need b >= a")
    support = IntegerInterval(-b, b)
    k = support.states().astype(np.float64)
    log_up = np.where(k < -a, eta, np.where(k > a, -eta, -k / sigma**2))
    return ChainSpec(support, log_up, np.zeros_like(k), Boundary.REFLECTING, kind="gaussian_ratio",
                     params={"sigma": sigma, "a": a, "b": b, "eta": eta})


def linear_speed_spec(n: int, d: float, birth: float = 1.0) -> ChainSpec:
    """Chain on ``[0, n]`` absorbed at 0 whose speed is exactly ``-d * k``."""
    k = np.arange(n + 1, dtype=np.float64)
    up = np.where((k >= 1) & (k < n), birth, 0.0)
    down = np.where(k < n, birth + d * k, d * n)
    down[0] = 0.0
    return ChainSpec.from_rates(IntegerInterval(0, n), up, down, Boundary.ABSORBING_LO,
                                kind="linear_speed", params={"n": n, "d": d, "birth": birth})


def linear_speed_walk_spec(a: int, d: float) -> ChainSpec:
    """Reflecting Ehrenfest-type walk on ``[-a, a]``: up ``d(a-k)/2``, down ``d(a+k)/2``, speed ``-d k``."""
    support = IntegerInterval(-a, a)
    k = support.states().astype(np.float64)
    return ChainSpec.from_rates(support, d * (a - k) / 2, d * (a + k) / 2, Boundary.REFLECTING,
                                kind="linear_speed_walk", params={"a": a, "d": d})


def pure_death_spec(n: int, d: float = 1.0) -> ChainSpec:
    k = np.arange(n + 1, dtype=np.float64)
    return ChainSpec.from_rates(IntegerInterval(0, n), np.zeros_like(k), d * k, Boundary.ABSORBING_LO,
                                kind="pure_death", params={"n": n, "d": d})


def constant_rate_spec(n: int, birth: float, death: float) -> ChainSpec:
    """Chain on ``[0, n]`` absorbed at 0, reflecting at ``n``, constant birth and death rates."""
    k = np.arange(n + 1)
    up = np.where(k < n, birth, 0.0)
    down = np.full(n + 1, float(death))
    return ChainSpec.from_rates(IntegerInterval(0, n), up, down, Boundary.ABSORBING_LO,
                                kind="constant_rate", params={"n": n, "birth": birth, "death": death})


def symmetric_walk_spec(lo: int, hi: int, rate: float = 1.0) -> ChainSpec:
    support = IntegerInterval(lo, hi)
    r = np.full(len(support), float(rate))
    return ChainSpec.from_rates(support, r, r, Boundary.REFLECTING, kind="symmetric_walk",
                                params={"lo": lo, "hi": hi, "rate": rate})


def restrict(spec: ChainSpec, lo: int, hi: int, boundary=Boundary.REFLECTING) -> ChainSpec:
    """Copy of ``spec`` on ``[lo, hi]``; outward rates at the new ends are dropped."""
    sub = IntegerInterval(lo, hi)
    if sub.intersect(spec.support) != sub:
        raise ModelError(f"[{lo}, {hi}] is not inside the support of {spec!r}")
    i, j = spec.support.index(lo), spec.support.index(hi) + 1
    params = dict(spec.params, restricted_from=spec.kind)
    return ChainSpec(sub, spec.log_up[i:j], spec.log_down[i:j], boundary, kind="tabulated", params=params,
                     linear=(spec.up[i:j], spec.down[i:j]))


def translate(spec: ChainSpec, shift: int) -> ChainSpec:
    """Same chain with every state moved by ``shift``."""
    sup = IntegerInterval(spec.support.lo + shift, spec.support.hi + shift)
    params = dict(spec.params)
    params["shift"] = params.get("shift", 0) + shift
    return ChainSpec(sup, spec.log_up, spec.log_down, spec.boundary, kind=spec.kind, params=params,
                     linear=spec.linear)
