"""Structured results for bound evaluations and verification checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = ["Clause", "BoundReport", "to_jsonable"]


@dataclass
class Clause:
    """One named condition with its outcome.

    ``value`` and ``limit`` are optional numbers describing the comparison that
    decided ``passed``; ``detail`` is free text.
    """

    clause: str
    passed: bool
    value: float | None = None
    limit: float | None = None
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)


@dataclass
class BoundReport:
    """An evaluated bound (or check), the inputs it used and its validity conditions.

    ``preconditions`` are the hypotheses under which the bound is claimed.
    ``checks`` are verifications of the bound's conclusion against exact or
    empirical values. The status is never ``"holds"`` while a precondition fails.
    """

    name: str
    inputs: dict[str, Any]
    value: float | None = None
    log_value: float | None = None
    preconditions: list[Clause] = field(default_factory=list)
    checks: list[Clause] = field(default_factory=list)
    comparison: dict[str, Any] = field(default_factory=dict)
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def preconditions_hold(self) -> bool:
        return all(c.passed for c in self.preconditions)

    @property
    def checks_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def status(self) -> str:
        if not self.preconditions_hold:
            return "precondition-failed"
        if not self.checks_pass:
            return "violated"
        return "holds"

    @property
    def passed(self) -> bool:
        return self.status == "holds"

    def clause(self, name: str) -> Clause:
        for c in self.preconditions + self.checks:
            if c.clause == name:
                return c
        raise KeyError(name)

    def add_precondition(self, clause, passed, value=None, limit=None, detail=""):
        self.preconditions.append(Clause(clause, passed, value, limit, detail))

    def add_check(self, clause, passed, value=None, limit=None, detail=""):
        self.checks.append(Clause(clause, passed, value, limit, detail))

    def to_dict(self) -> dict:
        return to_jsonable({
            "name": self.name,
            "status": self.status,
            "inputs": self.inputs,
            "value": self.value,
            "log_value": self.log_value,
            "preconditions": [vars(c) for c in self.preconditions],
            "checks": [vars(c) for c in self.checks],
            "comparison": self.comparison,
            "extras": self.extras,
        })

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("indent", 2)
        return json.dumps(self.to_dict(), **kwargs)

    def summary(self) -> str:
        head = f"{self.name}: {self.status}"
        if self.value is not None:
            head += f"  value={self.value:.6g}"
        lines = [head]
        for kind, group in (("pre", self.preconditions), ("check", self.checks)):
            for c in group:
                mark = "ok " if c.passed else "FAIL"
                extra = ""
                if c.value is not None:
                    extra = f"  {c.value:.6g}"
                    if c.limit is not None:
                        extra += f" vs {c.limit:.6g}"
                lines.append(f"  [{mark}] {kind}: {c.clause}{extra}")
        return "\n".join(lines)


def to_jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats into strict-JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "value") and hasattr(obj, "name") and not isinstance(obj, BoundReport):
        return obj.value  # enums
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)
