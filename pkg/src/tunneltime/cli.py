"""Command line front end.

Usage::

    tunneltime scatter --barrier 1,2 --p 1
    tunneltime ctime --barrier 1,2 --p 0.5,1,1.5
    tunneltime taudist --barrier 1,2 --p 1 --channel tunn
    tunneltime clock --preset free-running --j 1 --T 3
    tunneltime dwell --config dwell.json
    tunneltime ionise --format json
    tunneltime two-path --A1 0.5 --tau1 1 --A2 -0.25 --tau2 2
    tunneltime presets

Every command accepts ``--config`` (a JSON experiment file), ``--out``,
``--format csv|json``, ``--threads``, ``--seed``, ``--preset`` and ``--smoke``.
Explicit flags override values from the config file.  Exit status: 0 on
success, 2 for schema errors, 3 for numerical-domain errors, 4 when a
post-selected channel is empty.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, fields
from typing import Callable, Mapping

import numpy as np
import scipy.fft as sfft

from . import clock, ctime, evolve, experiments, ionise, scatter, taudist
from .errors import NumericalDomainError, PostSelectionError, SchemaError
from .model import PotentialSpec, RegionOfInterest, SpatialGrid, potential_step, rectangular_barrier
from .tables import SUMMARY_DIGITS, csv_text, fmt, json_text

__all__ = ["ExperimentConfig", "Preset", "PRESETS", "list_presets", "run", "main"]

EXIT_SCHEMA = 2
EXIT_NUMERICAL = 3
EXIT_POSTSELECTION = 4

COMMANDS = ("scatter", "ctime", "taudist", "clock", "dwell", "ionise", "two-path")

_PARAMETERS = {
    "scatter": {"potential", "barrier", "step", "region", "p", "lam", "mass"},
    "ctime": {"potential", "barrier", "step", "region", "p", "mass"},
    "taudist": {"potential", "barrier", "step", "region", "p", "channel", "lambda_max", "n_lambda", "window",
                "mass"},
    "clock": {"potential", "barrier", "omega_region", "clock", "omega_grid", "postselect", "times", "packet",
              "grid", "mass", "j", "T"},
    "dwell": {"potential", "barrier", "omega_region", "times", "packet", "grid", "mass", "probe"},
    "ionise": {f.name for f in fields(ionise.IonisationModel)} - {"region"} | {"omega_region"},
    "two-path": {"A1", "tau1", "A2", "tau2"},
}


@dataclass
class ExperimentConfig:
    """Validated experiment description: command, parameters, output and seed."""

    command: str
    parameters: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise SchemaError(f"unknown command {self.command!r}")
        if not isinstance(self.parameters, Mapping):
            raise SchemaError("parameters must be a JSON object")
        unknown = set(self.parameters) - _PARAMETERS[self.command]
        if unknown:
            raise SchemaError(f"unknown {self.command} parameters: {sorted(unknown)}")
        bad = set(self.output) - {"path", "format"}
        if bad:
            raise SchemaError(f"unknown output fields: {sorted(bad)}")
        if self.output.get("format", "csv") not in ("csv", "json"):
            raise SchemaError("output format must be csv or json")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise SchemaError("seed must be an integer")

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        if not isinstance(data, Mapping):
            raise SchemaError("config must be a JSON object")
        unknown = set(data) - {"command", "parameters", "output", "seed"}
        if unknown:
            raise SchemaError(f"unknown config fields: {sorted(unknown)}")
        if "command" not in data:
            raise SchemaError("config needs a command")
        return cls(data["command"], dict(data.get("parameters", {})), dict(data.get("output", {})),
                   data.get("seed", 0))


# -- parameter helpers --------------------------------------------------------

def _floats(value, name) -> np.ndarray:
    if isinstance(value, str):
        value = value.split(",")
    try:
        return np.atleast_1d(np.asarray(value, dtype=float))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{name} must be a number or list of numbers") from exc


def _potential(params) -> tuple[PotentialSpec, tuple[float, float] | None]:
    """Potential and its natural region (support of a barrier or step)."""
    given = [k for k in ("potential", "barrier", "step") if params.get(k) is not None]
    if len(given) > 1:
        raise SchemaError("give only one of potential, barrier, step")
    if not given:
        return PotentialSpec(), None
    kind = given[0]
    if kind == "barrier":
        v = _floats(params["barrier"], "barrier")
        if v.size != 2:
            raise SchemaError("barrier needs height,width")
        return rectangular_barrier(float(v[0]), float(v[1])), (0.0, float(v[1]))
    if kind == "step":
        return potential_step(float(_floats(params["step"], "step")[0])), (0.0, math.inf)
    V = PotentialSpec.from_dict(params["potential"])
    lo = min((s.x_lo for s in V.segments if math.isfinite(s.x_lo)), default=None)
    hi = max((s.x_hi for s in V.segments if math.isfinite(s.x_hi)), default=None)
    return V, (lo, hi) if lo is not None and hi is not None else None


def _region(params, natural, key="region") -> RegionOfInterest:
    if params.get(key) is not None:
        r = _floats(params[key], key)
        if r.size != 2:
            raise SchemaError(f"{key} needs two numbers a,b")
        return RegionOfInterest(float(r[0]), float(r[1]))
    if natural is None:
        raise SchemaError(f"{key} is required for this potential")
    return RegionOfInterest(*natural)


def _sub(params, key, allowed, defaults):
    val = dict(defaults)
    given = params.get(key) or {}
    if not isinstance(given, Mapping):
        raise SchemaError(f"{key} must be a JSON object")
    unknown = set(given) - set(allowed)
    if unknown:
        raise SchemaError(f"unknown {key} fields: {sorted(unknown)}")
    val.update(given)
    return val


def _packet_setup(params):
    g = _sub(params, "grid", ("x_min", "x_max", "n_points"), {"x_min": -120.0, "x_max": 120.0, "n_points": 2048})
    grid = SpatialGrid(float(g["x_min"]), float(g["x_max"]), int(g["n_points"]))
    pk = _sub(params, "packet", ("x0", "p0", "sigma"), {"x0": -40.0, "p0": 1.0, "sigma": 5.0})
    psi = evolve.gaussian_packet(grid, float(pk["x0"]), float(pk["p0"]), float(pk["sigma"]))
    tm = _sub(params, "times", ("t1", "t2", "dt"), {"t1": 0.0, "t2": 70.0, "dt": None})
    return grid, psi, float(tm["t1"]), float(tm["t2"]), tm["dt"]


# -- commands -----------------------------------------------------------------

@dataclass
class Result:
    """What a command produced: a CSV table, a summary dict, and a one-line message."""

    summary: dict
    table: str | None = None
    line: str | None = None


def _cmd_scatter(params, seed):
    V, nat = _potential(params)
    region = _region(params, nat)
    p = _floats(params.get("p", 1.0), "p")
    lam = _floats(params.get("lam", 0.0), "lam")
    L, P = np.meshgrid(lam, p, indexing="ij")
    res = scatter.scattering_amplitudes(V, region, L.ravel(), P.ravel(), float(params.get("mass", 1.0)))
    worst = float(np.max(np.abs(res.unitarity_defect)))
    return Result({"max_unitarity_defect": worst, "rows": int(P.size)}, scatter.scattering_csv(res),
                  f"scatter: {P.size} rows, max unitarity defect {fmt(worst, SUMMARY_DIGITS)}")


def _cmd_ctime(params, seed):
    V, nat = _potential(params)
    region = _region(params, nat)
    p = _floats(params.get("p", 1.0), "p")
    mass = float(params.get("mass", 1.0))
    table = ctime.ctime_csv(V, region, p, mass)
    dwell = [ctime.dwell_time_monochromatic(V, region, float(x), mass) for x in p]
    return Result({"p": p.tolist(), "tau_dwell": dwell}, table,
                  f"ctime: {p.size} momenta, dwell[0] {fmt(dwell[0], SUMMARY_DIGITS)}")


def _cmd_taudist(params, seed):
    V, nat = _potential(params)
    region = _region(params, nat)
    p = float(_floats(params.get("p", 1.0), "p")[0])
    dist = taudist.stationary_amplitude(V, region, p, params.get("channel", "tunn"),
                                        float(params.get("lambda_max", 20.0)), int(params.get("n_lambda", 4096)),
                                        params.get("window", "hann"), float(params.get("mass", 1.0)))
    body, meta = taudist.distribution_csv(dist)
    m1 = taudist.moment(dist, 1)
    p_acc, p_free = taudist.accurate_measurement_probability(dist)
    summary = {"moment1": m1, "P_acc": p_acc, "P_free": p_free, "metadata": json.loads(meta)}
    return Result(summary, body, f"taudist: moment1 {fmt(m1.real, SUMMARY_DIGITS)}"
                                 f"{m1.imag:+.{SUMMARY_DIGITS}g}j, P_acc {fmt(p_acc, SUMMARY_DIGITS)}")


def _postselector(spec, psi_i=None) -> clock.Postselector:
    spec = dict(spec or {"kind": "all"})
    unknown = set(spec) - {"kind", "cut"}
    if unknown:
        raise SchemaError(f"unknown postselect fields: {sorted(unknown)}")
    return clock.Postselector(spec.get("kind", "all"), cut=float(spec.get("cut", 0.0)))


def _cmd_clock(params, seed):
    V, nat = _potential(params)
    grid, psi, t1, t2, dt = _packet_setup(params)
    region = _region(params, nat, "omega_region")
    ck = _sub(params, "clock", ("j", "gamma", "signed"), {"j": 1, "gamma": "beta0", "signed": False})
    j = clock.spin_size(ck["j"])
    gamma = clock.SpinState.from_spec(j, ck["gamma"])
    basis = clock.ClockBasis(j)
    w = _floats(params["omega_grid"], "omega_grid") if params.get("omega_grid") is not None \
        else clock.default_omega_grid(j, t2 - t1)
    sel = _postselector(params.get("postselect"))
    joints = clock.coupled_sweep(psi, j, gamma, w, V, region, t1, t2, dt, float(params.get("mass", 1.0)))
    P, T = [], []
    for jt in joints:
        pk, tk, _ = clock.readout(jt, sel, basis, bool(ck["signed"]))
        P.append(pk)
        T.append(tk)
    T = np.array(T)
    lookup = dict(zip(map(float, w), T))
    runner = lambda ws: np.array([lookup[float(x)] for x in ws])  # noqa: E731
    extract = clock.modified_clock_extract if ck["signed"] else clock.weak_limit_extract
    res = extract(runner, j, w)
    table = clock.clock_csv(w, P, T)
    summary = {"T_SWP": res.value, "err_est": res.error, "omega_grid": list(map(float, w)),
               "linear_ratio": res.linear_ratio, **res.metadata}
    return Result(summary, table, f"clock: T_SWP {fmt(res.value, SUMMARY_DIGITS)} +- {fmt(res.error, 2)}")


def _cmd_dwell(params, seed):
    V, nat = _potential(params)
    grid, psi, t1, t2, dt = _packet_setup(params)
    region = _region(params, nat, "omega_region")
    mass = float(params.get("mass", 1.0))
    sw = evolve.dwell_time_stopwatch(psi, V, region, t1, t2, dt, mass)
    op = evolve.dwell_time_operator_form(psi, V, region, t1, t2, dt, mass)
    summary = {"stopwatch": sw, "operator": op}
    if params.get("probe"):
        gamma = clock.SpinState.from_spec(0.5, "probe")
        w = clock.default_omega_grid(0.5, t2 - t1)
        r = clock.dwell_probe(psi, V, region, gamma, clock.ClockBasis(0.5), w, t1, t2, dt, mass)
        summary.update({"probe": r.value, "probe_error": r.error})
    table = csv_text(["quantity", "value"], [(k, v.real if isinstance(v, complex) else v)
                                             for k, v in sorted(summary.items())])
    return Result(summary, table, f"dwell: stopwatch {fmt(sw, SUMMARY_DIGITS)}, operator {fmt(op.real, SUMMARY_DIGITS)}")


def _cmd_ionise(params, seed):
    kw = dict(params)
    if "grid" in kw:
        g = _sub(kw, "grid", ("x_min", "x_max", "n_points"), {})
        kw["grid"] = SpatialGrid(float(g["x_min"]), float(g["x_max"]), int(g["n_points"]))
    if "omega_region" in kw:
        r = _floats(kw.pop("omega_region"), "omega_region")
        kw["region"] = RegionOfInterest(float(r[0]), float(r[1]))
    try:
        model = ionise.IonisationModel(**kw)
    except TypeError as exc:
        raise SchemaError(str(exc)) from exc
    res = ionise.run_ionisation(model)
    summary = ionise.ionisation_summary(model)
    return Result(summary, ionise.ionisation_csv(res),
                  f"ionise: W_ion {fmt(summary['W_ion'], SUMMARY_DIGITS)}, T_all {fmt(summary['T_all'], SUMMARY_DIGITS)},"
                  f" tau_dwell {fmt(summary['tau_dwell'], SUMMARY_DIGITS)}")


def _cmd_two_path(params, seed):
    try:
        args = [params[k] for k in ("A1", "tau1", "A2", "tau2")]
    except KeyError as exc:
        raise SchemaError(f"two-path needs {exc.args[0]}") from exc
    value = ctime.two_path_time(*args)
    exact = ctime.two_path_moment(*args)
    return Result({"time": value, "moment_exact": str(exact)},
                  csv_text(["A1", "tau1", "A2", "tau2", "time"], [(*args, value)]), repr(value))


_DISPATCH: dict[str, Callable] = {
    "scatter": _cmd_scatter, "ctime": _cmd_ctime, "taudist": _cmd_taudist, "clock": _cmd_clock,
    "dwell": _cmd_dwell, "ionise": _cmd_ionise, "two-path": _cmd_two_path,
}


# -- presets ------------------------------------------------------------------

@dataclass(frozen=True)
class Preset:
    name: str
    command: str
    description: str
    runner: Callable


def _exp(func):
    # preset parameters are fixed; command flags only select the preset
    return lambda params, seed, smoke: func(smoke=smoke)


def _free_running(params, seed, smoke):
    return experiments.free_running(j=params.get("j", 1), duration=float(params.get("T", 3.0)), smoke=smoke)


def _unitarity(params, seed, smoke):
    # the seed drives the random barrier generator
    return experiments.unitarity_suite(seed=seed, smoke=smoke)


def _two_path(a2):
    return lambda params, seed, smoke: experiments.two_path(0.5, 1.0, a2, 2.0)


PRESETS: dict[str, Preset] = {p.name: p for p in [
    Preset("unitarity-suite", "scatter", "Flux conservation over 200 random barriers x 50 momenta", _unitarity),
    Preset("free-complex-time", "ctime", "Transmission complex time of a free particle against m d / p",
           _exp(experiments.free_complex_time)),
    Preset("i9-ratio", "ctime", "Free-motion SWP/dwell ratio against sqrt(1 + sinc(pd)^2)",
           _exp(experiments.free_ratio)),
    Preset("step-e11a", "ctime", "Potential step: SWP time, dwell time and p / (kappa V0)",
           _exp(experiments.step_equality)),
    Preset("weak-limit-barrier", "clock", "Clock slope on a barrier packet against Q(j) T_SWP^2",
           _exp(experiments.weak_limit_barrier)),
    Preset("free-running", "clock", "Clock field everywhere: the reading calibrates to the elapsed time",
           _free_running),
    Preset("two-path-dz6", "two-path", "Two virtual paths (0.5, 1, -0.25, 2): complex time vanishes",
           _two_path(-0.25)),
    Preset("two-path-498", "two-path", "Two virtual paths (0.5, 1, -0.499, 2): complex time 498",
           _two_path(-0.499)),
    Preset("taudist-fixtures", "taudist", "A(tau) sum rule, support and first moments on three fixtures",
           _exp(experiments.amplitude_distribution)),
    Preset("dwell-identities", "dwell", "Stopwatch vs operator dwell, clock dwell probe, overlap identity",
           _exp(experiments.dwell_identities)),
    Preset("swp-vs-dwell", "clock", "Unselected SWP time against the dwell time on the barrier packet",
           _exp(experiments.swp_vs_dwell)),
    Preset("appendix-modified-clock", "clock", "beta^j clock with signed readings: cube-root time",
           _exp(experiments.modified_clock)),
    Preset("ionise-default", "ionise", "Tunnel-ionisation pulse fixture with degenerate cases",
           _exp(experiments.ionisation)),
    Preset("classical-limit", "clock", "Fast packet over a low barrier: clock time vs flight time",
           _exp(experiments.classical_limit)),
]}


def list_presets() -> list[tuple[str, str, str]]:
    """``(name, command, description)`` for every preset, sorted by name."""
    return [(p.name, p.command, p.description) for p in sorted(PRESETS.values(), key=lambda p: p.name)]


def _run_preset(name, command, params, seed, smoke) -> Result:
    if name not in PRESETS:
        raise SchemaError(f"unknown preset {name!r}; see `tunneltime presets`")
    preset = PRESETS[name]
    if command is not None and command != preset.command:
        raise SchemaError(f"preset {name!r} belongs to the {preset.command} command")
    out = preset.runner(params, seed, smoke)
    out.pop("runtime_s", None)
    items = sorted(out.items())
    table = csv_text(["quantity", "value"], [(k, v if not isinstance(v, complex) else f"{fmt(v.real)}{v.imag:+.17g}j")
                                             for k, v in items])
    if preset.command == "two-path":
        line = repr(out["time"])
    else:
        head = ", ".join(f"{k}={fmt(v, SUMMARY_DIGITS) if not isinstance(v, complex) else v}"
                         for k, v in items[:4])
        line = f"{name}: {head}" + (", ..." if len(items) > 4 else "")
    if name == "free-running":
        line = f"free-running: T_SWP {fmt(out['T_swp'], SUMMARY_DIGITS)} +- {fmt(out['T_swp_error'], 2)}" \
               f" (elapsed {fmt(out['reference'], SUMMARY_DIGITS)})"
    return Result(out, table, line)


def run(config: ExperimentConfig, preset: str | None = None, smoke: bool = False, threads: int | None = None,
        stdout=None) -> int:
    """Execute one experiment; returns the exit status."""
    stdout = stdout or sys.stdout
    try:
        with sfft.set_workers(threads or 1):
            if preset is not None:
                res = _run_preset(preset, config.command, config.parameters, config.seed, smoke)
            else:
                res = _DISPATCH[config.command](config.parameters, config.seed)
    except PostSelectionError as exc:
        print(f"post-selection error: {exc}", file=sys.stderr)
        return EXIT_POSTSELECTION
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except NumericalDomainError as exc:
        print(f"numerical-domain error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    fmt_ = config.output.get("format", "csv")
    text = res.table if fmt_ == "csv" and res.table is not None else json_text(res.summary)
    path = config.output.get("path")
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(res.line, file=stdout)
    elif config.command == "two-path" and fmt_ == "csv":
        # the value itself is the artifact
        print(res.line, file=stdout)
    else:
        # keep stdout a clean CSV/JSON stream; the summary goes to stderr
        stdout.write(text)
        print(res.line, file=sys.stderr)
    return 0


# -- argument parsing ------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON experiment file {command, parameters, output, seed}")
    p.add_argument("--out", help="write the artifact here instead of standard output")
    p.add_argument("--format", choices=("csv", "json"), help="artifact format (default csv)")
    p.add_argument("--threads", type=int, help="cap on FFT worker threads")
    p.add_argument("--seed", type=int, help="seed for randomised drivers")
    p.add_argument("--preset", help="run a named preset (see `tunneltime presets`)")
    p.add_argument("--smoke", action="store_true", help="coarse settings for a quick run")
    return p


def _potential_flags(p):
    p.add_argument("--barrier", help="rectangular barrier height,width on [0, width]")
    p.add_argument("--step", help="potential step height at x = 0")
    p.add_argument("--region", help="region of interest a,b")
    p.add_argument("--mass", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tunneltime", description="Traversal-time numerical laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    p = sub.add_parser("scatter", parents=[common], help="stationary T and R amplitudes")
    _potential_flags(p)
    p.add_argument("--p", help="momenta, comma separated")
    p.add_argument("--lam", help="lambda values, comma separated")

    p = sub.add_parser("ctime", parents=[common], help="complex, dwell and SWP times")
    _potential_flags(p)
    p.add_argument("--p", help="momenta, comma separated")

    p = sub.add_parser("taudist", parents=[common], help="traversal-time amplitude distribution")
    _potential_flags(p)
    p.add_argument("--p", help="momentum")
    p.add_argument("--channel", choices=("tunn", "refl"))
    p.add_argument("--lambda-max", dest="lambda_max", type=float)
    p.add_argument("--n-lambda", dest="n_lambda", type=int)
    p.add_argument("--window", choices=("hann", "none"))

    p = sub.add_parser("clock", parents=[common], help="coupled spin clock in the weak limit")
    p.add_argument("--barrier", help="rectangular barrier height,width")
    p.add_argument("--j", type=float, help="spin size")
    p.add_argument("--T", type=float, help="duration (free-running preset)")

    p = sub.add_parser("dwell", parents=[common], help="stopwatch and operator dwell times")
    p.add_argument("--barrier", help="rectangular barrier height,width")

    p = sub.add_parser("ionise", parents=[common], help="tunnel-ionisation model")
    p.add_argument("--F", type=float, help="pulse strength")
    p.add_argument("--V-b0", dest="V_b0", type=float, help="static barrier height")

    p = sub.add_parser("two-path", parents=[common], help="complex time of two virtual paths (exact)")
    for name in ("A1", "tau1", "A2", "tau2"):
        p.add_argument(f"--{name}", type=float)

    sub.add_parser("presets", help="list named presets")
    return parser


_GLOBAL = {"config", "out", "format", "threads", "seed", "preset", "smoke", "command"}


def _config_from_args(args) -> ExperimentConfig:
    data = {"command": args.command, "parameters": {}, "output": {}, "seed": 0}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise SchemaError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise SchemaError(f"config is not valid JSON: {exc}") from exc
        cfg = ExperimentConfig.from_dict(loaded)
        if cfg.command != args.command:
            raise SchemaError(f"config is for {cfg.command!r}, not {args.command!r}")
        data.update(parameters=dict(cfg.parameters), output=dict(cfg.output), seed=cfg.seed)
    for key, value in vars(args).items():
        if key not in _GLOBAL and value is not None:
            data["parameters"][key] = value
    if args.out:
        data["output"]["path"] = args.out
    if args.format:
        data["output"]["format"] = args.format
    if args.seed is not None:
        data["seed"] = args.seed
    return ExperimentConfig(**data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        for name, command, desc in list_presets():
            print(f"{name:26s} {command:9s} {desc}")
        return 0
    try:
        cfg = _config_from_args(args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    return run(cfg, args.preset, args.smoke, args.threads)


if __name__ == "__main__":
    sys.exit(main())
