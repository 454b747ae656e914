"""Text serialization of chain specs and experiment configurations.

Specs and configs are INI documents read with :mod:`configparser`. A spec
section names either a builtin family with its parameters or a tabulated
rate file with columns ``k, up, down``::

    [spec]
    kind = example_walk
    n = 2401

    [spec]
    kind = tabulated
    rates = rates.csv
    boundary = absorbing-at-lo
"""

from __future__ import annotations

import configparser
import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import ModelError
from .model import (
    Boundary,
    ChainSpec,
    IntegerInterval,
    constant_rate_spec,
    contact_spec,
    example_walk_spec,
    figure1_spec,
    gaussian_ratio_spec,
    linear_speed_spec,
    linear_speed_walk_spec,
    pure_death_spec,
    symmetric_walk_spec,
    translate,
)

__all__ = [
    "BUILTINS",
    "build_builtin",
    "spec_to_section",
    "spec_from_section",
    "write_rates_csv",
    "read_rates_csv",
    "ExperimentConfig",
    "load_config",
    "header_lines",
]

# name -> (constructor, {parameter: type})
BUILTINS = {
    "figure1": (figure1_spec, {"n": int, "eps": float}),
    "example_walk": (example_walk_spec, {"n": int}),
    "contact": (contact_spec, {"n": int, "lambda": float}),
    "gaussian_ratio": (gaussian_ratio_spec, {"sigma": float, "a": int, "b": int, "eta": float}),
    "linear_speed": (linear_speed_spec, {"n": int, "d": float, "birth": float}),
    "linear_speed_walk": (linear_speed_walk_spec, {"a": int, "d": float}),
    "pure_death": (pure_death_spec, {"n": int, "d": float}),
    "constant_rate": (constant_rate_spec, {"n": int, "birth": float, "death": float}),
    "symmetric_walk": (symmetric_walk_spec, {"lo": int, "hi": int, "rate": float}),
}

_ARG_NAMES = {"contact": {"lambda": "lam"}}
_DERIVED = {"example_walk": {"a_n", "sigma_n", "d_n"}}


def build_builtin(kind: str, params: dict) -> ChainSpec:
    """Construct a builtin chain from string or typed parameters; ``shift`` translates the result."""
    if kind not in BUILTINS:
        raise ModelError(f"unknown builtin chain {kind!r}; choose from {sorted(BUILTINS)}")
    fn, types = BUILTINS[kind]
    kwargs = {}
    shift = 0
    for key, raw in params.items():
        if key == "shift":
            shift = int(raw)
            continue
        if key in _DERIVED.get(kind, ()):
            continue
        if key not in types:
            raise ModelError(f"unknown parameter {key!r} for {kind}; expected {sorted(types)}")
        if raw is None or raw == "None":
            continue
        kwargs[_ARG_NAMES.get(kind, {}).get(key, key)] = types[key](raw)
    spec = fn(**kwargs)
    return translate(spec, shift) if shift else spec


def write_rates_csv(spec: ChainSpec, fh=None) -> str | None:
    buf = io.StringIO() if fh is None else fh
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "up", "down"])
    for k, u, d in zip(spec.states, spec.up, spec.down):
        w.writerow([int(k), repr(float(u)), repr(float(d))])
    return buf.getvalue() if fh is None else None


def read_rates_csv(text: str, boundary=Boundary.REFLECTING) -> ChainSpec:
    rows = [r for r in csv.reader(line for line in text.splitlines() if not line.startswith("#")) if r]
    if not rows or [c.strip() for c in rows[0]] != ["k", "up", "down"]:
        raise ModelError("rate table must start with the header k,up,down")
    try:
        ks = [int(r[0]) for r in rows[1:]]
        up = [float(r[1]) for r in rows[1:]]
        down = [float(r[2]) for r in rows[1:]]
    except (ValueError, IndexError) as exc:
        raise ModelError(f"malformed rate table: {exc}") from None
    if not ks or ks != list(range(ks[0], ks[0] + len(ks))):
        raise ModelError("rate table states must be consecutive integers")
    return ChainSpec.from_rates(IntegerInterval(ks[0], ks[-1]), up, down, boundary)


def spec_to_section(spec: ChainSpec, cp: configparser.ConfigParser, section: str = "spec",
                    rates_path: str | None = None) -> str | None:
    """Store ``spec`` in ``cp[section]``.

    Builtins are stored by name and parameters. Tabulated specs reference
    ``rates_path`` when given; otherwise the table is returned for the caller
    to place, and the section stores it inline under ``rates_inline``.
    """
    cp[section] = {}
    sec = cp[section]
    if spec.kind in BUILTINS:
        sec["kind"] = spec.kind
        for key, val in spec.params.items():
            if key in _DERIVED.get(spec.kind, ()):
                continue
            sec[key] = repr(val) if isinstance(val, float) else str(val)
        return None
    sec["kind"] = "tabulated"
    sec["boundary"] = spec.boundary.value
    table = write_rates_csv(spec)
    if rates_path is not None:
        sec["rates"] = rates_path
        return table
    sec["rates_inline"] = "\n" + table
    return None


def spec_from_section(sec, base_dir: Path | None = None) -> ChainSpec:
    kind = sec.get("kind")
    if kind is None:
        raise ModelError("spec section needs a 'kind' key")
    if kind == "tabulated":
        boundary = Boundary.coerce(sec.get("boundary", "reflecting"))
        if "rates_inline" in sec:
            return read_rates_csv(sec["rates_inline"].strip(), boundary)
        if "rates" not in sec:
            raise ModelError("tabulated spec needs 'rates' or 'rates_inline'")
        path = Path(sec["rates"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return read_rates_csv(path.read_text(), boundary)
    params = {k: v for k, v in sec.items() if k != "kind"}
    return build_builtin(kind, params)


def _coerce(raw: str):
    for conv in (int, float):
        try:
            return conv(raw)
        except ValueError:
            pass
    low = raw.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", ""):
        return None
    if raw.strip().startswith("["):
        return json.loads(raw)
    return raw


@dataclass
class ExperimentConfig:
    """One experiment: subcommand, chain, operation parameters, outputs and seed.

    ``options`` holds operation parameters such as ``x0`` or ``times``;
    command-line flags override keys of the config file.
    """

    subcommand: str
    spec: ChainSpec | None = None
    options: dict = field(default_factory=dict)
    out: str = "out"
    seed: int = 0
    reps: int | None = None
    workers: int = 1
    tolerances: dict = field(default_factory=dict)

    def to_ini(self, include_out: bool = True) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["run"] = {"subcommand": self.subcommand, "seed": str(self.seed), "workers": str(self.workers)}
        if include_out:
            cp["run"]["out"] = self.out
        if self.reps is not None:
            cp["run"]["reps"] = str(self.reps)
        if self.spec is not None:
            spec_to_section(self.spec, cp)
        if self.options:
            cp["options"] = {k: _fmt(v) for k, v in sorted(self.options.items())}
        if self.tolerances:
            cp["tolerances"] = {k: _fmt(v) for k, v in sorted(self.tolerances.items())}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue().rstrip("\n") + "\n"

    @classmethod
    def from_ini(cls, text: str, base_dir: Path | None = None) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ValueError(f"malformed config: {exc}") from None
        if "run" not in cp or "subcommand" not in cp["run"]:
            raise ValueError("config needs a [run] section with a subcommand")
        run = cp["run"]
        spec = spec_from_section(cp["spec"], base_dir) if "spec" in cp else None
        opts = {k: _coerce(v) for k, v in cp["options"].items()} if "options" in cp else {}
        tols = {k: float(v) for k, v in cp["tolerances"].items()} if "tolerances" in cp else {}
        return cls(run["subcommand"], spec, opts, run.get("out", "out"), int(run.get("seed", "0")),
                   int(run["reps"]) if "reps" in run else None, int(run.get("workers", "1")), tols)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return json.dumps([float(x) if isinstance(x, float) else x for x in v])
    return str(v)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return ExperimentConfig.from_ini(path.read_text(), path.parent)


def header_lines(config: ExperimentConfig | None = None, extra: dict | None = None) -> str:
    """Comment header for output files: version, then the config that produced them.

    The output directory is left out so that reruns elsewhere give identical files.
    """
    lines = [f"metawalk {__version__}"]
    if extra:
        lines += [f"{k} = {_fmt(v)}" for k, v in extra.items()]
    if config is not None:
        lines += config.to_ini(include_out=False).splitlines()
    return "\n".join(lines)
