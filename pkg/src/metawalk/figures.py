"""Data behind the two reference figures and the transient table of the example walk."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import example_walk_spec, figure1_spec
from .stationary import GaussRef, ProbVector, gaussian_reference, jump_chain_stationary, l1_distance, \
    stationary_distribution
from .transient import TransientPropagator

__all__ = ["Figure1Data", "figure1_data", "Figure2Data", "figure2_data", "FIGURE2_TIMES", "SUMMARY_COLUMNS"]

FIGURE2_TIMES = (1e3, 1e4, 1e11, 1e13)
SUMMARY_COLUMNS = ("t", "expected", "expected_conditioned", "absorbed_left", "absorbed_right",
                   "absorbed_total", "l1_to_gaussian")


@dataclass(frozen=True)
class Figure1Data:
    n: int
    eps: float
    ctmc: ProbVector
    jump: ProbVector
    gaussian: GaussRef

    @property
    def l1_ctmc_gaussian(self) -> float:
        return l1_distance(self.ctmc, self.gaussian)


def figure1_data(n: int = 100, eps: float = 0.001) -> Figure1Data:
    """Stationary laws of the continuous-time walk and of its jump chain.

    The Gaussian reference has variance ``1/eps`` and is truncated to the
    support and normalized there.
    """
    spec = figure1_spec(n, eps)
    ref = gaussian_reference(1.0 / math.sqrt(eps), spec.support, "lattice-normalized")
    return Figure1Data(n, eps, stationary_distribution(spec), jump_chain_stationary(spec), ref)


@dataclass(frozen=True)
class Figure2Data:
    n: int
    x0: int
    times: tuple
    laws: tuple
    gaussian: GaussRef
    burn_in_time: float

    def summary(self) -> list[dict]:
        sup = self.laws[0].support
        rows = []
        for t, p in zip(self.times, self.laws):
            left, right = p[sup.lo], p[sup.hi]
            rows.append({
                "t": float(t),
                "expected": p.mean(),
                "expected_conditioned": p.interior().mean(conditioned=True),
                "absorbed_left": left,
                "absorbed_right": right,
                "absorbed_total": left + right,
                "l1_to_gaussian": l1_distance(p, self.gaussian),
            })
        return rows


def figure2_data(n: int = 2401, x0: int = 172, times=FIGURE2_TIMES, method: str = "ql",
                 workers: int = 1) -> Figure2Data:
    """Exact laws of the example walk at ``times`` against the Gaussian density values with ``sigma = sqrt(n)``."""
    spec = example_walk_spec(n)
    ref = gaussian_reference(math.sqrt(n), spec.support, "pdf-values")
    prop = TransientPropagator(spec, int(x0), method=method)
    laws = tuple(prop.many([float(t) for t in times], workers=workers))
    return Figure2Data(n, int(x0), tuple(float(t) for t in times), laws, ref, prop.burn_in_time)
