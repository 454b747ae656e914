"""Command-line front end.

Every run resolves to an :class:`metawalk.io.ExperimentConfig`, written to
``OUT/config.ini`` next to the results, so ``metawalk --config OUT/config.ini``
reproduces them. Exit codes: 0 success, 1 failed checks (``selftest``),
2 usage or validation error, 3 accuracy or budget guard.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .errors import AccuracyError, GuardError
from .io import ExperimentConfig, build_builtin, header_lines, load_config, read_rates_csv
from .model import Boundary

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_FAIL", "EXIT_USAGE", "EXIT_ACCURACY"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ACCURACY = 0, 1, 2, 3

SUBCOMMANDS = ("stationary", "transient", "simulate", "bounds", "window", "contact", "figure1", "figure2",
               "selftest")

log = logging.getLogger("metawalk")

# Default chain and options per subcommand; config files and flags override them.
DEFAULT_SPECS = {
    "stationary": ("figure1", {"n": 100, "eps": 0.001}),
    "transient": ("example_walk", {"n": 2401}),
    "simulate": ("linear_speed", {"n": 20, "d": 1.0}),
    "window": ("example_walk", {"n": 2401}),
    "bounds": ("example_walk", {"n": 2401}),
}
DEFAULT_OPTIONS = {
    "stationary": {"jump_chain": True, "plot": True},
    "transient": {"x0": 172, "times": [1e3, 1e4, 1e11, 1e13], "sigma": 49.0, "method": "ql", "plot": True},
    "simulate": {"mode": "hitting", "x0": 20, "target": [0], "horizon": 10.0, "t": 1.0, "a_n": 10},
    "bounds": {"kind": "conditions", "sigma_n": 49.0, "a_n": 343, "eps": 1.0},
    "window": {"sigma_n": 49.0, "a_n": 343, "t": 1e11, "eps": 1.0},
    "contact": {"n": 2401, "lambda": 2.0, "c": None, "times": None, "early_phase": True, "plot": True},
    "figure1": {"n": 100, "eps": 0.001, "plot": True},
    "figure2": {"n": 2401, "x0": 172, "times": [1e3, 1e4, 1e11, 1e13], "plot": True},
    "selftest": {"criteria": [1, 2, 3, 4, 5, 6, 7, 8, 9]},
}
DEFAULT_REPS = {"simulate": 10_000, "contact": 10_000, "selftest": 10_000}


class UsageError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metawalk", description="Birth-death walks with drift: exact laws, "
                                "simulation and bounds.")
    p.add_argument("--version", action="version", version=f"metawalk {__version__}")
    p.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS,
                   help="operation to run; may come from --config instead")
    p.add_argument("--config", type=Path, help="INI experiment config; flags override its keys")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="master seed for Monte Carlo")
    p.add_argument("--reps", type=int, help="Monte Carlo replicates")
    p.add_argument("--workers", type=int, help="worker threads for replicates and time points")
    p.add_argument("--spec", help="builtin chain name, or 'tabulated' with --rates")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="builtin chain parameter (repeatable)")
    p.add_argument("--rates", type=Path, help="CSV rate table with columns k,up,down")
    p.add_argument("--boundary", choices=[b.value for b in Boundary], help="boundary for --rates")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="operation option, e.g. x0=5 or times=[1,10] (repeatable)")
    p.add_argument("--tol", action="append", default=[], metavar="KEY=VALUE", help="tolerance override")
    p.add_argument("--no-plot", action="store_true", help="skip SVG figures")
    p.add_argument("--quiet", action="store_true", help="only report errors")
    return p


def _pairs(items, what):
    out = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"{what} expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        if args.subcommand and args.subcommand != cfg.subcommand:
            raise UsageError(f"config is for {cfg.subcommand!r}, not {args.subcommand!r}")
    elif args.subcommand:
        cfg = ExperimentConfig(args.subcommand)
    else:
        raise UsageError("a subcommand or --config is required")
    sub = cfg.subcommand
    if sub not in SUBCOMMANDS:
        raise UsageError(f"unknown subcommand {sub!r}")
    opts = dict(DEFAULT_OPTIONS.get(sub, {}))
    opts.update(cfg.options)
    opts.update({k: _value(v) for k, v in _pairs(args.set, "--set").items()})
    if args.no_plot and "plot" in opts:
        opts["plot"] = False
    cfg.options = opts
    if args.rates is not None:
        boundary = Boundary.coerce(args.boundary or "reflecting")
        cfg.spec = read_rates_csv(args.rates.read_text(), boundary)
    elif args.spec is not None:
        cfg.spec = build_builtin(args.spec, _pairs(args.param, "--param"))
    elif args.param:
        name, params = DEFAULT_SPECS.get(sub, (None, {}))
        if cfg.spec is not None:
            name, params = cfg.spec.kind, dict(cfg.spec.params)
        if name is None:
            raise UsageError(f"{sub} does not take a chain")
        params.update(_pairs(args.param, "--param"))
        cfg.spec = build_builtin(name, params)
    if cfg.spec is None and sub in DEFAULT_SPECS:
        name, params = DEFAULT_SPECS[sub]
        cfg.spec = build_builtin(name, params)
    if args.out is not None:
        cfg.out = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.reps is not None:
        cfg.reps = args.reps
    elif cfg.reps is None and sub in DEFAULT_REPS:
        cfg.reps = DEFAULT_REPS[sub]
    if args.workers is not None:
        cfg.workers = args.workers
    if cfg.workers < 1:
        raise UsageError("--workers must be positive")
    cfg.tolerances.update({k: float(v) for k, v in _pairs(args.tol, "--tol").items()})
    return cfg


# -- output helpers --------------------------------------------------------------

class Outputs:
    def __init__(self, cfg: ExperimentConfig, quiet: bool = False):
        self.cfg = cfg
        self.quiet = quiet
        self.dir = Path(cfg.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def header(self, **extra) -> str:
        return header_lines(self.cfg, extra or None)

    def text(self, name: str, content: str) -> Path:
        path = self.dir / name
        path.write_text(content)
        self.written.append(path)
        return path

    def csv(self, name: str, writer, **extra) -> Path:
        return self.text(name, writer(self.header(**extra)))

    def json(self, name: str, doc: dict) -> Path:
        head = {"comment": self.header().splitlines()}
        body = {"header": head, **doc}
        return self.text(name, json.dumps(_jsonable(body), indent=2, sort_keys=False) + "\n")

    def svg(self, name: str, draw) -> Path | None:
        if not self.cfg.options.get("plot", True):
            return None
        path = draw(self.dir / name)
        comment = self.header().replace("--", "- -")
        raw = path.read_text()
        first, rest = raw.split("\n", 1)
        path.write_text(f"{first}\n<!--\n{comment}\n-->\n{rest}")
        self.written.append(path)
        return path

    def config(self) -> Path:
        return self.text("config.ini", f"; metawalk {__version__}\n" + self.cfg.to_ini(include_out=False))


def _jsonable(x):
    from .report import to_jsonable

    return to_jsonable(x)


def _times(opts, key="times"):
    raw = opts.get(key)
    if raw is None:
        return None
    if isinstance(raw, (int, float)):
        return [float(raw)]
    return [float(t) for t in raw]


def _tname(t: float) -> str:
    return f"{t:.6g}".replace("+", "")


# -- subcommands -----------------------------------------------------------------

def cmd_stationary(cfg, out: Outputs) -> int:
    from .plotting import plot_distributions
    from .stationary import jump_chain_stationary, stationary_distribution, statdist_certificate

    o = cfg.options
    pi = stationary_distribution(cfg.spec)
    out.csv("stationary.csv", lambda h: pi.to_csv(header=h))
    curves = {"continuous-time": pi}
    if o.get("jump_chain", True):
        jc = jump_chain_stationary(cfg.spec)
        out.csv("jump_chain_stationary.csv", lambda h: jc.to_csv(header=h))
        curves["jump chain"] = jc
    if o.get("a_n") is not None and o.get("sigma_n") is not None:
        rep = statdist_certificate(cfg.spec, int(o["a_n"]), float(o["sigma_n"]),
                                   K=o.get("K"), eta_n=o.get("eta_n"))
        out.json("certificate.json", {"report": rep.to_dict()})
    out.svg("stationary.svg", lambda p: plot_distributions(curves, p, title="stationary laws"))
    return EXIT_OK


def cmd_transient(cfg, out: Outputs) -> int:
    from .plotting import plot_distributions
    from .stationary import gaussian_reference
    from .transient import TransientPropagator, series_rows, write_series_csv

    o = cfg.options
    spec = cfg.spec
    times = _times(o)
    if not times:
        raise UsageError("transient needs times")
    x0 = int(o["x0"])
    prop = TransientPropagator(spec, x0, method=o.get("method", "ql"))
    laws = prop.many(times, workers=cfg.workers)
    for t, p in zip(times, laws):
        out.csv(f"transient_t{_tname(t)}.csv", lambda h, p=p: p.to_csv(header=h), t=t)
    ref = None
    if o.get("sigma") is not None:
        ref = gaussian_reference(float(o["sigma"]), spec.support, o.get("reference", "pdf-values"),
                                 mean=float(o.get("mean", 0.0)))
    rows = series_rows(spec, x0, times, ref, workers=cfg.workers)
    out.csv("series.csv", lambda h: write_series_csv(rows, header=h))
    curves = {f"t={t:.3g}": p for t, p in zip(times, laws)}
    out.svg("transient.svg", lambda p: plot_distributions(curves, p, title="transient laws"))
    return EXIT_OK


def cmd_simulate(cfg, out: Outputs) -> int:
    from . import simulate as sim

    o = cfg.options
    spec, seed, reps, workers = cfg.spec, cfg.seed, int(cfg.reps), cfg.workers
    mode = o.get("mode", "hitting")
    if mode == "path":
        tr = sim.sample_path(spec, int(o["x0"]), float(o["t"]), seed)
        out.csv("path.csv", lambda h: tr.to_csv(header=h))
    elif mode == "hitting":
        target = o.get("target")
        target = [int(target)] if isinstance(target, int) else [int(k) for k in target]
        s = sim.hitting_time_samples(spec, int(o["x0"]), target, float(o["horizon"]), reps, seed,
                                     clock=o.get("clock", "time"), workers=workers)
        out.csv("hitting_times.csv", lambda h: s.to_csv(header=h))
    elif mode == "meeting":
        s = sim.coupled_pair_meeting(spec, int(o["a_n"]), reps, seed, float(o["horizon"]), workers=workers)
        out.csv("meeting_times.csv", lambda h: s.to_csv(header=h))
    elif mode == "triple":
        rep = sim.triple_coupling_check(spec, int(o["a_n"]), reps, seed, float(o["horizon"]),
                                        d=o.get("d"), workers=workers)
        samples = rep.extras.pop("samples", None)
        out.json("triple_coupling.json", {"report": rep.to_dict()})
        if samples is not None:
            out.csv("triple_meeting.csv", lambda h: samples.meeting.to_csv(header=h))
            out.csv("triple_outer.csv", lambda h: samples.outer.to_csv(header=h))
    elif mode == "empirical":
        p = sim.empirical_distribution(spec, int(o["x0"]), float(o["t"]), reps, seed, workers=workers)
        out.csv("empirical.csv", lambda h: p.to_csv(header=h))
    else:
        raise UsageError(f"unknown simulate mode {mode!r}; use path, hitting, meeting, triple or empirical")
    return EXIT_OK


def cmd_bounds(cfg, out: Outputs) -> int:
    from . import bounds as b

    o = cfg.options
    kind = o.get("kind", "conditions")
    eps = float(o.get("eps", 1.0))
    if kind == "discrete-extinction":
        rep = b.discrete_extinction_bound(float(o["p"]), int(o["n"]), int(o["i"]))
    elif kind == "continuous-extinction":
        if "kappa" in o and "rho" in o:
            kappa, rho = float(o["kappa"]), float(o["rho"])
        else:
            kappa, rho = b.chain_extinction_constants(cfg.spec)
        n = int(o.get("n", cfg.spec.support.hi))
        rep = b.continuous_extinction_bound(kappa, rho, n, float(o["t"]), eps)
    elif kind == "linear-extinction":
        rep = b.linear_speed_extinction_bound(int(o["n"]), float(o["d"]), float(o["t"]))
    elif kind == "mixing":
        rep = b.mixing_bound(int(o["a_n"]), float(o["d"]), float(o["t"]))
    elif kind == "conditions":
        rep = b.theorem_conditions_check(cfg.spec, float(o["sigma_n"]), int(o["a_n"]), K=o.get("K"), eps=eps)
    else:
        raise UsageError(f"unknown bound {kind!r}; use discrete-extinction, continuous-extinction, "
                         "linear-extinction, mixing or conditions")
    out.json("bound.json", {"report": rep.to_dict()})
    if not out.quiet:
        print(rep.summary())
    return EXIT_OK


def cmd_window(cfg, out: Outputs) -> int:
    from .bounds import boundary_hit_bound, metastable_window, window_params_from_spec

    o = cfg.options
    params, rep = window_params_from_spec(cfg.spec, float(o["sigma_n"]), int(o["a_n"]), c_n=o.get("c_n"),
                                          n=o.get("n"))
    win = metastable_window(params)
    hit = boundary_hit_bound(params, float(o["t"]), float(o.get("eps", 1.0)))
    doc = {"params": params.__dict__, "flags": params.flags(),
           "window": {"log_t_lo": win.log_t_lo, "log_t_hi": win.log_t_hi, "t_lo": win.t_lo, "t_hi": win.t_hi,
                      "empty": win.empty},
           "conditions": rep.to_dict(), "boundary_hit": hit.to_dict()}
    out.json("window.json", doc)
    if not out.quiet:
        print(f"window [{win.t_lo:.6g}, {win.t_hi:.6g}]{' (empty)' if win.empty else ''}")
    return EXIT_OK


def cmd_contact(cfg, out: Outputs) -> int:
    from .contact import contact_constants, distance_series, early_phase_check, theorem_threshold, \
        window_report, write_distance_csv
    from .plotting import plot_series

    o = cfg.options
    n, lam = int(o["n"]), float(o["lambda"])
    g = o.get("g")
    c = float(o["c"]) if o.get("c") is not None else math.floor(theorem_threshold(lam)) + 1.0
    params = contact_constants(n, lam, g)
    x0 = int(o["x0"]) if o.get("x0") is not None else math.ceil(c * math.log(n))
    times = _times(o) or [n * f for f in (0.125, 0.25, 0.5, 1.0, 2.0, 4.0)]
    rows = distance_series(n, lam, x0, times, max_n=int(o.get("max_n", 4096)), workers=cfg.workers)
    out.csv("contact_distance.csv", lambda h: write_distance_csv(rows, header=h))
    wrep = window_report(n, lam, g)
    wrep.extras.pop("params", None)
    doc = {"constants": params.__dict__, "window": wrep.to_dict()}
    if o.get("early_phase", True) and cfg.reps:
        erep = early_phase_check(n, lam, c, int(cfg.reps), cfg.seed, g=g, workers=cfg.workers)
        samples = erep.extras.pop("samples")
        out.csv("early_phase.csv", lambda h: samples.to_csv(header=h))
        doc["early_phase"] = erep.to_dict()
    out.json("contact.json", doc)
    out.svg("contact_distance.svg", lambda p: plot_series(
        [r.t for r in rows], {"Kolmogorov": [r.kolmogorov for r in rows], "L1": [r.l1 for r in rows]}, p,
        title=f"contact process n={n}, lambda={lam:g}", logx=True, logy=True))
    return EXIT_OK


def cmd_figure1(cfg, out: Outputs) -> int:
    from .figures import figure1_data
    from .plotting import plot_distributions

    o = cfg.options
    f = figure1_data(int(o["n"]), float(o["eps"]))
    out.csv("figure1_ctmc.csv", lambda h: f.ctmc.to_csv(header=h))
    out.csv("figure1_jump_chain.csv", lambda h: f.jump.to_csv(header=h))
    out.svg("figure1.svg", lambda p: plot_distributions(
        {"continuous-time": f.ctmc, "jump chain": f.jump}, p, title=f"n={f.n}, eps={f.eps:g}"))
    return EXIT_OK


def cmd_figure2(cfg, out: Outputs) -> int:
    import csv as _csv
    import io as _io

    from .figures import SUMMARY_COLUMNS, figure2_data
    from .plotting import plot_distributions

    o = cfg.options
    d = figure2_data(int(o["n"]), int(o["x0"]), _times(o), workers=cfg.workers)
    for t, p in zip(d.times, d.laws):
        out.csv(f"figure2_T{_tname(t)}.csv", lambda h, p=p: p.to_csv(header=h), T=t)

    def summary(h):
        buf = _io.StringIO()
        for line in h.splitlines():
            buf.write(f"# {line}\n")
        w = _csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in d.summary():
            w.writerow([repr(float(r[c])) for c in SUMMARY_COLUMNS])
        return buf.getvalue()

    out.csv("figure2_summary.csv", summary)
    curves = {f"T={t:.0e}": p.interior() for t, p in zip(d.times, d.laws)}
    curves["Gaussian"] = d.gaussian
    out.svg("figure2.svg", lambda p: plot_distributions(curves, p, title=f"n={d.n}, start {d.x0}"))
    return EXIT_OK


def cmd_selftest(cfg, out: Outputs) -> int:
    from .acceptance import TOLERANCES, results_csv, results_json, run_acceptance

    for k, v in cfg.tolerances.items():
        if k not in TOLERANCES:
            raise UsageError(f"unknown tolerance {k!r}")
        TOLERANCES[k] = (TOLERANCES[k][0], v) if isinstance(TOLERANCES[k], tuple) else v
    crit = cfg.options.get("criteria") or None
    if isinstance(crit, int):
        crit = [crit]
    echo = None if out.quiet else print
    results = run_acceptance(crit, seed=cfg.seed, reps=int(cfg.reps), workers=cfg.workers, echo=echo)
    out.text("acceptance.csv", results_csv(results, out.header()))
    out.text("acceptance.json", results_json(results, {"comment": out.header().splitlines()}))
    ok = all(r.passed for r in results)
    if echo:
        for r in results:
            print(f"criterion {r.number}: {'PASS' if r.passed else 'FAIL'} ({r.elapsed:.1f} s)")
    return EXIT_OK if ok else EXIT_FAIL


HANDLERS = {"stationary": cmd_stationary, "transient": cmd_transient, "simulate": cmd_simulate,
            "bounds": cmd_bounds, "window": cmd_window, "contact": cmd_contact, "figure1": cmd_figure1,
            "figure2": cmd_figure2, "selftest": cmd_selftest}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = resolve_config(args)
        out = Outputs(cfg, args.quiet)
        code = HANDLERS[cfg.subcommand](cfg, out)
        out.config()
    except (AccuracyError, GuardError) as exc:
        print(f"metawalk: accuracy error: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    except (ValueError, KeyError, TypeError) as exc:
        print(f"metawalk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not args.quiet:
        for p in out.written:
            log.info("wrote %s", p)
    return code


if __name__ == "__main__":
    sys.exit(main())
