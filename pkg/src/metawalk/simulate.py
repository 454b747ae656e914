"""Seeded stochastic simulation of birth-death chains and of the meeting couplings.

All kernels draw from :mod:`metawalk.rng`; replicate ``r`` uses the key
``derive_seed(seed, r)`` with its own counter starting at 0, so results do not
depend on how replicates are split across workers.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import GuardError, ModelError
from .model import ChainSpec, drift_profile
from .report import BoundReport
from .rng import as_master, derive_seed, derive_seeds, uniform
from .stationary import ProbVector

__all__ = [
    "Trajectory",
    "SampleSet",
    "sample_path",
    "hitting_time_samples",
    "coupled_pair_meeting",
    "coupled_pair_path",
    "triple_coupling_check",
    "TripleCouplingSamples",
    "triple_coupling_samples",
    "empirical_distribution",
    "states_at",
    "DEFAULT_BUDGET",
    "MAX_PATH_EVENTS",
]

DEFAULT_BUDGET = 1e9
MAX_PATH_EVENTS = 10_000_000


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One SSA path: jump times, the state after each jump and the final time."""

    seed: int
    x0: int
    times: np.ndarray
    states: np.ndarray
    t_max: float

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    def state_at(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t, side="right"))
        return self.x0 if i == 0 else int(self.states[i - 1])

    def to_csv(self, fh=None, header: str | None = None) -> str | None:
        buf = io.StringIO() if fh is None else fh
        if header:
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "state"])
        w.writerow([repr(0.0), self.x0])
        for t, k in zip(self.times.tolist(), self.states.tolist()):
            w.writerow([repr(t), k])
        return buf.getvalue() if fh is None else None


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Replicated first-passage outcomes, censored at ``horizon``.

    ``outcome[r]`` is the observed time, or ``horizon`` when ``censored[r]``.
    ``clock`` is ``"time"`` for continuous time or ``"events"`` when times
    count jumps of the embedded chain.
    """

    seed: int
    outcome: np.ndarray
    censored: np.ndarray
    horizon: float
    clock: str = "time"
    label: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def reps(self) -> int:
        return int(self.outcome.size)

    def tail(self, t: float) -> float:
        """Empirical ``P(T > t)``; censored replicates count as exceeding the horizon."""
        if t > self.horizon:
            raise ValueError("cannot estimate beyond the censoring horizon")
        return float(np.mean(self.censored | (self.outcome > t)))

    def below(self, t: float) -> float:
        """Empirical ``P(T < t)``."""
        if t > self.horizon:
            raise ValueError("cannot estimate beyond the censoring horizon")
        return float(np.mean(~self.censored & (self.outcome < t)))

    @staticmethod
    def standard_error(p: float, reps: int) -> float:
        return math.sqrt(max(p * (1 - p), 0.0) / reps)

    def se(self, p: float) -> float:
        return self.standard_error(p, self.reps)

    def median(self) -> float:
        """Median outcome; ``inf`` if more than half the replicates are censored."""
        srt = np.sort(np.where(self.censored, np.inf, self.outcome))
        return float(srt[(self.reps - 1) // 2])

    def to_csv(self, fh=None, header: str | None = None) -> str | None:
        buf = io.StringIO() if fh is None else fh
        if header:
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate", "outcome", "censored"])
        for r, (o, c) in enumerate(zip(self.outcome.tolist(), self.censored.tolist())):
            w.writerow([r, repr(o), int(c)])
        return buf.getvalue() if fh is None else None


# -- kernels -----------------------------------------------------------------

@njit(cache=True, nogil=True)
def _path_kernel(up, down, x0, t_max, key, max_events):
    times = np.empty(1024)
    states = np.empty(1024, dtype=np.int64)
    x = x0
    t = 0.0
    c = 0
    n = 0
    while True:
        r = up[x] + down[x]
        if r <= 0.0:
            break
        t += -math.log(uniform(key, c)) / r
        c += 1
        if t > t_max:
            break
        if uniform(key, c) * r < up[x]:
            x += 1
        else:
            x -= 1
        c += 1
        if n == times.shape[0]:
            if n >= max_events:
                return times[:n], states[:n], False
            times = np.concatenate((times, np.empty(n)))
            states = np.concatenate((states, np.empty(n, dtype=np.int64)))
        times[n] = t
        states[n] = x
        n += 1
    return times[:n], states[:n], True


@njit(cache=True, nogil=True)
def _hit_kernel(up, down, x0, target, horizon, keys, use_events):
    reps = keys.shape[0]
    out = np.empty(reps)
    cens = np.zeros(reps, dtype=np.bool_)
    for rep in range(reps):
        key = keys[rep]
        x = x0
        t = 0.0
        c = 0
        while True:
            if target[x]:
                out[rep] = t
                break
            r = up[x] + down[x]
            if r <= 0.0:
                out[rep] = horizon
                cens[rep] = True
                break
            if use_events:
                t += 1.0
            else:
                t += -math.log(uniform(key, c)) / r
                c += 1
            if t > horizon:
                out[rep] = horizon
                cens[rep] = True
                break
            if uniform(key, c) * r < up[x]:
                x += 1
            else:
                x -= 1
            c += 1
    return out, cens


@njit(cache=True, nogil=True)
def _state_kernel(up, down, x0, t_end, keys):
    reps = keys.shape[0]
    out = np.empty(reps, dtype=np.int64)
    for rep in range(reps):
        key = keys[rep]
        x = x0
        t = 0.0
        c = 0
        while True:
            r = up[x] + down[x]
            if r <= 0.0:
                break
            t += -math.log(uniform(key, c)) / r
            c += 1
            if t > t_end:
                break
            if uniform(key, c) * r < up[x]:
                x += 1
            else:
                x -= 1
            c += 1
        out[rep] = x
    return out


@njit(cache=True, nogil=True)
def _pair_kernel(up, down, a, b, horizon, keys):
    """Independent walkers from indices ``a < b`` until they share a state."""
    reps = keys.shape[0]
    out = np.empty(reps)
    cens = np.zeros(reps, dtype=np.bool_)
    for rep in range(reps):
        key = keys[rep]
        x = a
        y = b
        t = 0.0
        c = 0
        while x != y:
            rx = up[x] + down[x]
            ry = up[y] + down[y]
            r = rx + ry
            if r <= 0.0:
                t = math.inf
                break
            t += -math.log(uniform(key, c)) / r
            c += 1
            if t > horizon:
                break
            u = uniform(key, c) * r
            c += 1
            if u < up[x]:
                x += 1
            elif u < rx:
                x -= 1
            elif u < rx + up[y]:
                y += 1
            else:
                y -= 1
        if x == y:
            out[rep] = t
        else:
            out[rep] = horizon
            cens[rep] = True
    return out, cens


@njit(cache=True, nogil=True)
def _pair_path_kernel(up, down, a, b, t_max, key, max_events):
    times = np.empty(max_events)
    xs = np.empty(max_events, dtype=np.int64)
    ys = np.empty(max_events, dtype=np.int64)
    x = a
    y = b
    t = 0.0
    c = 0
    n = 0
    while n < max_events:
        rx = up[x] + down[x]
        if x == y:
            # coupled: move together with one walker's rates
            r = rx
        else:
            r = rx + up[y] + down[y]
        if r <= 0.0:
            break
        t += -math.log(uniform(key, c)) / r
        c += 1
        if t > t_max:
            break
        u = uniform(key, c) * r
        c += 1
        if x == y:
            if u < up[x]:
                x += 1
            else:
                x -= 1
            y = x
        elif u < up[x]:
            x += 1
        elif u < rx:
            x -= 1
        elif u < rx + up[y]:
            y += 1
        else:
            y -= 1
        times[n] = t
        xs[n] = x
        ys[n] = y
        n += 1
    return times[:n], xs[:n], ys[:n]


@njit(cache=True, nogil=True)
def _triple_kernel(up, down, k0, m0, d, horizon, keys):
    """Three-walker coupling; returns meeting times T (walkers 1, 2), T~ (1, 3) and diagnostics.

    ``k0 < m0`` are indices; walker 2 starts with walker 3.
    """
    reps = keys.shape[0]
    t_meet = np.empty(reps)
    t_tilde = np.empty(reps)
    cens_meet = np.zeros(reps, dtype=np.bool_)
    cens_tilde = np.zeros(reps, dtype=np.bool_)
    n_events = 0
    dom_fail = 0
    nu_fail = 0
    edge_fail = 0
    n_states = up.shape[0]
    tol = 1e-12
    for rep in range(reps):
        key = keys[rep]
        k = k0
        l = m0
        m = m0
        t = 0.0
        c = 0
        met = False
        t_meet[rep] = horizon
        cens_meet[rep] = True
        while k != m:
            nu = -d * (m - k) + up[k] + down[m] - down[k]
            if nu < up[m] - tol * (1.0 + abs(up[m])):
                nu_fail += 1
            if nu < up[m]:
                nu = up[m]
            if m == n_states - 1:
                if nu > tol * (1.0 + up[k] + down[m] + down[k]):
                    edge_fail += 1
                nu = 0.0
            r1 = up[k] + down[k]
            if k == l:
                # walkers 1 and 2 coupled; walker 3 alone
                r = r1 + nu + down[m]
            elif l == m:
                r = r1 + down[l] + nu
            else:
                r = r1 + up[l] + down[l] + nu + down[m]
            if r <= 0.0:
                break
            t += -math.log(uniform(key, c)) / r
            c += 1
            if t > horizon:
                break
            u = uniform(key, c) * r
            c += 1
            n_events += 1
            if u < up[k]:
                k += 1
                if met:
                    l = k
            elif u < r1:
                k -= 1
                if met:
                    l = k
            else:
                u -= r1
                if k == l:
                    if u < nu:
                        m += 1
                    else:
                        m -= 1
                elif l == m:
                    if u < down[l]:
                        l -= 1
                        m -= 1
                    elif u < down[l] + up[l]:
                        l += 1
                        m += 1
                    else:
                        m += 1
                else:
                    if u < up[l]:
                        l += 1
                    elif u < up[l] + down[l]:
                        l -= 1
                    elif u < up[l] + down[l] + nu:
                        m += 1
                    else:
                        m -= 1
            if not met and k == l:
                met = True
                t_meet[rep] = t
                cens_meet[rep] = False
            if not (k <= l and l <= m):
                dom_fail += 1
        if k == m:
            if not met:
                t_meet[rep] = t
                cens_meet[rep] = False
            t_tilde[rep] = t
        else:
            t_tilde[rep] = horizon
            cens_tilde[rep] = True
    return t_meet, cens_meet, t_tilde, cens_tilde, n_events, dom_fail, nu_fail, edge_fail


# -- parallel driver -----------------------------------------------------------

def _chunks(reps: int, workers: int):
    workers = max(1, min(int(workers), reps))
    bounds = np.linspace(0, reps, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_replicates(fn, seed: int, reps: int, workers: int):
    """Run ``fn(keys)`` over replicate chunks; results are merged in replicate order."""
    master = as_master(seed)
    parts = _chunks(reps, workers)
    jobs = [derive_seeds(master, a, b - a) for a, b in parts]
    if len(jobs) == 1:
        return [fn(jobs[0])]
    with ThreadPoolExecutor(max_workers=len(jobs)) as ex:
        return list(ex.map(fn, jobs))


def _rates(spec: ChainSpec):
    up, down = spec.up, spec.down
    if not (np.all(np.isfinite(up)) and np.all(np.isfinite(down))):
        raise ModelError("rates overflow double precision; cannot simulate")
    return np.ascontiguousarray(up), np.ascontiguousarray(down)


# -- public API --------------------------------------------------------------

def sample_path(spec: ChainSpec, x0: int, t_max: float, seed: int,
                max_events: int = MAX_PATH_EVENTS) -> Trajectory:
    """One Gillespie path from ``x0`` up to ``t_max``.

    Holding times are exponential with rate ``up + down``; the jump is up with
    probability ``up / (up + down)``. The path uses replicate key 0 of ``seed``.
    """
    up, down = _rates(spec)
    xi = spec.support.index(x0)
    key = derive_seed(as_master(seed), 0)
    times, idx, ok = _path_kernel(up, down, xi, float(t_max), key, int(max_events))
    if not ok:
        raise GuardError(f"path exceeded {max_events} events before t_max={t_max}")
    return Trajectory(int(seed), int(x0), times, idx + spec.support.lo, float(t_max))


def hitting_time_samples(spec: ChainSpec, x0: int, target, horizon: float, reps: int, seed: int,
                         clock: str = "time", workers: int = 1) -> SampleSet:
    """First entry times into ``target`` from ``x0``, censored at ``horizon``.

    With ``clock="events"`` the time is the number of jumps of the embedded
    discrete-time chain.
    """
    target = {int(k) for k in target}
    if not target:
        raise ValueError("target set must be nonempty")
    if clock not in ("time", "events"):
        raise ValueError("clock must be 'time' or 'events'")
    up, down = _rates(spec)
    mask = np.zeros(len(spec.support), dtype=np.bool_)
    for k in target:
        if k in spec.support:
            mask[k - spec.support.lo] = True
    xi = spec.support.index(x0)
    use_events = clock == "events"

    def run(keys):
        return _hit_kernel(up, down, xi, mask, float(horizon), keys, use_events)

    parts = _run_replicates(run, seed, int(reps), workers)
    out = np.concatenate([p[0] for p in parts])
    cens = np.concatenate([p[1] for p in parts])
    return SampleSet(int(seed), out, cens, float(horizon), clock,
                     label=f"hit {sorted(target)[:4]} from {x0}")


def coupled_pair_meeting(spec: ChainSpec, a_n: int, reps: int, seed: int, horizon: float,
                         workers: int = 1) -> SampleSet:
    """Meeting times of two independent walkers started at ``-a_n`` and ``+a_n``."""
    up, down = _rates(spec)
    if a_n == 0:
        return SampleSet(int(seed), np.zeros(reps), np.zeros(reps, dtype=bool), float(horizon),
                         label="pair meeting a_n=0")
    a = spec.support.index(-a_n)
    b = spec.support.index(a_n)

    def run(keys):
        return _pair_kernel(up, down, a, b, float(horizon), keys)

    parts = _run_replicates(run, seed, int(reps), workers)
    return SampleSet(int(seed), np.concatenate([p[0] for p in parts]),
                     np.concatenate([p[1] for p in parts]), float(horizon),
                     label=f"pair meeting a_n={a_n}")


def coupled_pair_path(spec: ChainSpec, x: int, y: int, t_max: float, seed: int,
                      max_events: int = 1_000_000):
    """Joint path of two walkers that move together once they meet.

    Returns ``(times, states_1, states_2)``.
    """
    up, down = _rates(spec)
    key = derive_seed(as_master(seed), 0)
    lo = spec.support.lo
    times, xs, ys = _pair_path_kernel(up, down, spec.support.index(x), spec.support.index(y),
                                      float(t_max), key, int(max_events))
    return times, xs + lo, ys + lo


@dataclass(frozen=True, eq=False)
class TripleCouplingSamples:
    meeting: SampleSet
    outer: SampleSet
    n_events: int
    dominance_failures: int
    nu_failures: int
    edge_failures: int


def triple_coupling_samples(spec: ChainSpec, a_n: int, d: float, reps: int, seed: int,
                            horizon: float, workers: int = 1) -> TripleCouplingSamples:
    """Simulate the three-walker coupling from ``(-a_n, a_n, a_n)``.

    Walker 3 steps up at rate ``nu(k, m) = -d (m - k) + up(k) + down(m) - down(k)``
    where ``k`` is walker 1's position, so that ``m - k`` has speed ``-d (m - k)``.
    When walkers 2 and 3 share a state they move together, except for an
    extra up-step of walker 3 at rate ``nu - up(m)``.
    """
    up, down = _rates(spec)
    if a_n == 0:
        z = np.zeros(reps)
        f = np.zeros(reps, dtype=bool)
        s = SampleSet(int(seed), z, f, float(horizon))
        return TripleCouplingSamples(s, s, 0, 0, 0, 0)
    k0 = spec.support.index(-a_n)
    m0 = spec.support.index(a_n)

    def run(keys):
        return _triple_kernel(up, down, k0, m0, float(d), float(horizon), keys)

    parts = _run_replicates(run, seed, int(reps), workers)
    cat = lambda i: np.concatenate([p[i] for p in parts])  # noqa: E731
    meet = SampleSet(int(seed), cat(0), cat(1), float(horizon), label="T walkers 1,2")
    outer = SampleSet(int(seed), cat(2), cat(3), float(horizon), label="T~ walkers 1,3")
    return TripleCouplingSamples(meet, outer, sum(int(p[4]) for p in parts),
                                 sum(int(p[5]) for p in parts), sum(int(p[6]) for p in parts),
                                 sum(int(p[7]) for p in parts))


def triple_coupling_check(spec: ChainSpec, a_n: int, reps: int, seed: int, horizon: float,
                          d: float | None = None, t_grid=None, workers: int = 1) -> BoundReport:
    """Run the three-walker coupling and check its claims.

    Checks pathwise ordering of the walkers at every event, ``T~ >= T`` in
    every replicate and ``P(T~ > t) <= 2 a_n exp(-d t)`` within four standard
    errors on ``t_grid``. ``d`` defaults to the largest slope allowed by the
    discrete speed differences on ``[-a_n, a_n]``.
    """
    prof = drift_profile(spec)
    rep = BoundReport("triple_coupling_check", {"a_n": a_n, "reps": reps, "seed": seed,
                                                "horizon": horizon, "spec": repr(spec)})
    if a_n > 0:
        i, j = spec.support.index(-a_n), spec.support.index(a_n)
        diffs = np.diff(prof.speed[i:j + 1])
        d_best = float(-np.max(diffs))
    else:
        d_best = math.inf
    d_used = d_best if d is None else float(d)
    rep.inputs["d"] = d_used
    rep.add_precondition("speed differences <= -d on [-a_n, a_n]",
                         d_used <= d_best + 1e-12 * max(1.0, abs(d_best)) and d_used > 0,
                         d_used, d_best)
    if t_grid is None:
        t_grid = [math.log(2 * max(a_n, 1)) / d_used * f for f in (0.5, 1.0, 1.5)] if d_used > 0 else []
    if not rep.preconditions_hold or a_n == 0:
        if a_n == 0:
            rep.add_check("pathwise dominance", True, detail="degenerate a_n = 0")
            rep.value = 0.0
        return rep
    res = triple_coupling_samples(spec, a_n, d_used, reps, seed, horizon, workers)
    rep.add_precondition("nu(k, m) >= up(m) at every visited pair", res.nu_failures == 0,
                         res.nu_failures, 0)
    rep.add_precondition("walker 3 never pushed past the support", res.edge_failures == 0,
                         res.edge_failures, 0)
    frac = 1.0 - res.dominance_failures / max(res.n_events, 1)
    rep.add_check("pathwise dominance P1 <= P2 <= P3", res.dominance_failures == 0, frac, 1.0,
                  detail=f"{res.n_events} events")
    both = ~res.outer.censored
    ordered = np.all(res.outer.outcome[both] >= res.meeting.outcome[both]) and \
        np.all(~res.meeting.censored[both])
    frac_ord = float(np.mean(res.outer.censored | (res.outer.outcome >= res.meeting.outcome)))
    rep.add_check("T~ >= T", bool(ordered), frac_ord, 1.0)
    tails = []
    for t in t_grid:
        if t > horizon:
            continue
        p = res.outer.tail(t)
        se = res.outer.se(p)
        bound = 2 * a_n * math.exp(-d_used * t)
        tails.append({"t": t, "tail": p, "se": se, "bound": bound})
        rep.add_check(f"P(T~ > {t:.6g}) <= 2 a_n e^(-d t) + 4 se", p <= bound + 4 * se, p, bound + 4 * se)
    rep.comparison = {"tails": tails, "median_T": res.meeting.median(), "median_T_tilde": res.outer.median()}
    rep.value = frac
    rep.extras["samples"] = res
    return rep


def states_at(spec: ChainSpec, x0: int, t: float, reps: int, seed: int, workers: int = 1,
              budget: float = DEFAULT_BUDGET) -> np.ndarray:
    """State of each replicate at time ``t``."""
    up, down = _rates(spec)
    cost = float(t) * spec.max_rate * reps
    if cost > budget:
        raise GuardError(f"t * max_rate * reps = {cost:.3g} exceeds the budget {budget:.3g}")
    xi = spec.support.index(x0)

    def run(keys):
        return _state_kernel(up, down, xi, float(t), keys)

    parts = _run_replicates(run, seed, int(reps), workers)
    return np.concatenate(parts) + spec.support.lo


def empirical_distribution(spec: ChainSpec, x0: int, t: float, reps: int, seed: int,
                           workers: int = 1, budget: float = DEFAULT_BUDGET) -> ProbVector:
    """Histogram of simulated states at time ``t`` on the chain's support."""
    x = states_at(spec, x0, t, reps, seed, workers, budget)
    counts = np.bincount(x - spec.support.lo, minlength=len(spec.support)).astype(float)
    return ProbVector(spec.support, counts / reps, absorbing=spec.absorbing_states)
