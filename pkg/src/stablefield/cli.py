"""Command-line interface: ``stablefield {simulate,predict,covariation,benchmark}``.

Options come from three layers, highest first: command-line flags, a
``--config`` file of ``key = value`` lines, built-in defaults.  Config keys
are the long flag names (``-`` or ``_``).  Unknown keys are rejected.

Exit codes: 0 success, 2 configuration or I/O error, 3 numerical failure.
Failures also print one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .covariation import SiteSystem, covariation_system
from .exceptions import (
    ConvergenceError,
    DegenerateSystemError,
    FactorizationError,
    NonUniqueError,
    RealizationError,
    SingularSystemError,
    StableFieldError,
    UnsupportedModelError,
)
from .experiments import (
    BenchmarkConfig,
    evaluation_grid,
    export_panels,
    format_summary_table,
    run_benchmark,
    sample_panels,
    write_deviations_csv,
    write_summary_csv,
)
from .field_models import (
    CovarianceModel,
    FieldRealization,
    LevySheet,
    MovingAverage,
    OrnsteinUhlenbeck,
    SubGaussian,
    bump_kernel,
    grid_for_model,
    read_realization_csv,
    simulate_field,
    simulate_gaussian_field,
    simulate_subgaussian_field,
    write_realization_csv,
)
from .predictors import METHODS, PredictionProblem, write_weights_csv
from .stable_core import RngStream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

MODELS = ("levy-sheet", "moving-average", "ornstein-uhlenbeck", "sub-gaussian", "gaussian")

_NUMERIC_ERRORS = (
    ConvergenceError,
    DegenerateSystemError,
    FactorizationError,
    NonUniqueError,
    RealizationError,
    SingularSystemError,
    FloatingPointError,
    np.linalg.LinAlgError,
)


class ConfigError(Exception):
    """Invalid options, config file or input files."""


# option name -> (type, default); shared by flags and the config file
_MODEL_OPTS = {
    "model": (str, "levy-sheet"),
    "alpha": (float, 1.5),
    "dim": (int, None),
    "sill": (float, 7.0),
    "range": (float, 0.1),
    "covariance": (str, "gaussian"),
    "rate": (float, 1.0),
    "radius": (float, 0.25),
    "cells": (int, None),
}
_OPTS = {
    "simulate": {
        **_MODEL_OPTS,
        "grid": (int, 50),
        "sites": (str, None),
        "seed": (int, 0),
        "out": (str, "."),
        "name": (str, "realization"),
        "plot": (bool, False),
    },
    "predict": {
        **_MODEL_OPTS,
        "observations": (str, None),
        "targets": (str, None),
        "target_grid": (int, None),
        "method": (str, "col"),
        "tol": (float, None),
        "maxiter": (int, None),
        "out": (str, "."),
        "seed": (int, 0),
    },
    "covariation": {
        **_MODEL_OPTS,
        "points": (str, None),
        "out": (str, None),
    },
    "benchmark": {
        "field": (str, "sub-gaussian"),
        "alpha": (float, 1.5),
        "realizations": (int, 200),
        "grid": (int, 50),
        "methods": (str, None),
        "seed": (int, 0),
        "sill": (float, 7.0),
        "range": (float, 0.1),
        "cells": (int, None),
        "threads": (int, 1),
        "out": (str, "."),
        "raw": (bool, True),
        "panels": (bool, False),
    },
}
_COMMON = {"threads": (int, 1)}

_HELP = {
    "model": f"field model: {', '.join(MODELS)}",
    "alpha": "stability index in (1, 2]",
    "dim": "dimension of the index space (default 1 for OU, else 2; predict infers it)",
    "sill": "C(0) of the Gaussian covariance (sub-Gaussian models)",
    "range": "range parameter of the Gaussian covariance",
    "covariance": "covariance family: gaussian or exponential",
    "rate": "Ornstein-Uhlenbeck rate",
    "radius": "support radius of the moving-average bump kernel",
    "cells": "measure-grid cells per axis (default 1000 in 1D, 100 per axis in 2D)",
    "grid": "evaluation grid resolution N: points i/N, i = 1..N per axis",
    "sites": "explicit sites 'x1;x2;...' or 'x1,y1;x2,y2;...' instead of --grid",
    "seed": "random seed",
    "out": "output directory",
    "name": "file stem of the realization CSV",
    "plot": "also write a gnuplot script",
    "observations": "realization CSV with the observed sites and values",
    "targets": "targets inline ('0.75' or 'x,y;x,y') or a CSV path with x[,y] columns",
    "target_grid": "predict on the evaluation grid of this resolution",
    "method": f"comma-separated methods from {', '.join(METHODS)}",
    "tol": "gradient tolerance for LSL/MCL",
    "maxiter": "iteration cap for LSL/MCL",
    "points": "points 'p1;p2;...'; prints the covariation matrix [X(p_i), X(p_j)]",
    "field": "benchmark field: sub-gaussian or levy-sheet",
    "realizations": "number of realizations",
    "methods": "comma-separated methods (default: all applicable)",
    "threads": "worker threads",
    "raw": "write the raw deviations CSV",
    "panels": "export the first realization and its predictions as surfaces",
}


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stablefield", description="Extrapolation of stable random fields.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    for cmd, opts in _OPTS.items():
        sp = subs.add_parser(cmd, help=f"{cmd} subcommand")
        sp.add_argument("--config", help="key = value config file")
        for key, (typ, default) in {**_COMMON, **opts}.items():
            flag = "--" + key.replace("_", "-")
            shown = "" if default is None else f" (default: {default})"
            if typ is bool:
                sp.add_argument(
                    flag, dest=key, action=argparse.BooleanOptionalAction, default=None, help=_HELP.get(key, "") + shown
                )
            else:
                sp.add_argument(flag, dest=key, type=typ, default=None, help=_HELP.get(key, "") + shown)
    return parser


def read_config_file(path, allowed) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key = key.strip().replace("-", "_")
        if key not in allowed:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        typ = allowed[key][0]
        value = value.strip()
        try:
            out[key] = _bool(value) if typ is bool else typ(value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (flags win)."""
    allowed = {**_COMMON, **_OPTS[args.command]}
    opts = {k: default for k, (_, default) in allowed.items()}
    if args.config:
        opts.update(read_config_file(args.config, allowed))
    for key in allowed:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    if opts["threads"] < 1:
        raise ConfigError("threads must be positive")
    return opts


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def parse_points(text: str, dim=None) -> np.ndarray:
    """``'0.5'``, ``'0.5;1'`` or ``'0.2,0.3;0.4,0.5'`` to an ``(m, d)`` array."""
    try:
        rows = [[float(c) for c in part.split(",")] for part in text.split(";") if part.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse points {text!r}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"points must all have the same dimension: {text!r}")
    pts = np.array(rows, dtype=float)
    if dim is not None and pts.shape[1] != dim:
        raise ConfigError(f"expected {dim}-dimensional points, got {pts.shape[1]}")
    return pts


def read_points_csv(path, dim=None) -> np.ndarray:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    header = [h.strip() for h in lines[0].split(",")]
    cols = [i for i, h in enumerate(header) if h in ("x", "y", "target_x", "target_y")]
    if not cols:
        raise ConfigError(f"{path}: need x[,y] columns")
    try:
        pts = np.array([[float(ln.split(",")[i]) for i in cols] for ln in lines[1:]], dtype=float)
    except (ValueError, IndexError):
        raise ConfigError(f"{path}: malformed row") from None
    if dim is not None and pts.shape[1] != dim:
        raise ConfigError(f"{path}: expected {dim}-dimensional points")
    return pts


def grid_points(n: int, dim: int) -> np.ndarray:
    if n < 2:
        raise ConfigError("grid resolution must be at least 2")
    if dim == 1:
        return (np.arange(1, n + 1) / n)[:, None]
    if dim == 2:
        return evaluation_grid(n)
    raise ConfigError("grids are available in 1 and 2 dimensions")


def build_model(opts, dim=None):
    """Field model from options; ``dim`` overrides the option (e.g. inferred from data)."""
    name = opts["model"]
    if name not in MODELS:
        raise ConfigError(f"unknown model {name!r}; choose from {', '.join(MODELS)}")
    alpha = opts["alpha"]
    if name == "gaussian":
        alpha = 2.0
    if not (1.0 < alpha <= 2.0):
        raise ConfigError(f"alpha must lie in (1, 2], got {alpha}")
    given = opts["dim"]
    if dim is not None and given is not None and given != dim:
        raise ConfigError(f"--dim {given} does not match {dim}-dimensional data")
    dim = dim or given or (1 if name == "ornstein-uhlenbeck" else 2)
    if dim not in (1, 2):
        raise ConfigError("dim must be 1 or 2")
    try:
        if name == "levy-sheet":
            return LevySheet(alpha, dim)
        if name == "moving-average":
            r = opts["radius"]
            return MovingAverage(alpha, bump_kernel(r, dim), r, dim, name="bump")
        if name == "ornstein-uhlenbeck":
            if dim != 1:
                raise ConfigError("the Ornstein-Uhlenbeck model is one-dimensional")
            return OrnsteinUhlenbeck(alpha, opts["rate"])
        cov = CovarianceModel(opts["sill"], opts["range"], opts["covariance"])
        return SubGaussian(alpha, cov, dim)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def measure_grid(model, opts, points):
    if not model.has_kernel:
        return None
    cells = opts["cells"] or (1000 if model.dim == 1 else 100)
    if cells < 1:
        raise ConfigError("cells must be positive")
    return grid_for_model(model, points, cells)


def _out_path(directory, filename):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, filename)
    if os.path.exists(path):
        raise ConfigError(f"refusing to overwrite existing output {path}")
    return path


def _write(path, text):
    with open(path, "x", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(opts, out=None) -> list:
    out = out or sys.stdout
    model = build_model(opts)
    pts = parse_points(opts["sites"], model.dim) if opts["sites"] else grid_points(opts["grid"], model.dim)
    stream = RngStream(opts["seed"])
    if isinstance(model, SubGaussian):
        cov = model.covariance
        if model.alpha == 2.0:
            real = simulate_gaussian_field(cov, pts, stream)
        else:
            real = simulate_subgaussian_field(cov, model.alpha, pts, stream)
    else:
        real = simulate_field(model, pts, measure_grid(model, opts, pts), stream)
    real.provenance.setdefault("seed", opts["seed"])
    path = _out_path(opts["out"], f"{opts['name']}.csv")
    written = [path]
    surface = model.dim == 2 and not opts["sites"]
    plot_path = None
    if opts["plot"] and not surface:
        plot_path = _out_path(opts["out"], f"{opts['name']}.gp")
    write_realization_csv(real, path)
    if opts["plot"] and surface:
        written.append(export_panels(pts, {"realization": real.values}, opts["out"], stem=f"{opts['name']}_plot"))
    elif plot_path:
        _write(plot_path, _line_plot_script(os.path.basename(path), model.dim))
        written.append(plot_path)
    for p in written:
        print(p, file=out)
    return written


def _line_plot_script(csv_name, dim):
    if dim == 1:
        body = f"plot '{csv_name}' using 1:2 with lines notitle"
    else:
        body = f"splot '{csv_name}' using 1:2:3 with points pt 7 palette notitle"
    return "\n".join(
        [
            "set terminal pngcairo size 900,600",
            f"set output '{os.path.splitext(csv_name)[0]}.png'",
            "set datafile separator ','",
            "set datafile commentschars '#'",
            "set datafile columnheaders",
            body,
        ]
    ) + "\n"


def _solver_kwargs(method, opts):
    kw = {}
    if method in ("lsl", "mcl"):
        if opts["tol"] is not None:
            kw["tol"] = opts["tol"]
        if opts["maxiter"] is not None:
            kw["maxiter"] = opts["maxiter"]
    return kw


def cmd_predict(opts, out=None) -> list:
    out = out or sys.stdout
    if not opts["observations"]:
        raise ConfigError("predict needs --observations")
    try:
        obs = read_realization_csv(opts["observations"])
    except OSError as exc:
        raise ConfigError(f"cannot read {opts['observations']}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError(f"{opts['observations']}: {exc}") from None
    dim = obs.sites.shape[1]
    model = build_model(opts, dim)
    if opts["targets"] and opts["target_grid"]:
        raise ConfigError("give either --targets or --target-grid, not both")
    if opts["target_grid"]:
        targets = grid_points(opts["target_grid"], dim)
    elif opts["targets"]:
        t = opts["targets"]
        targets = read_points_csv(t, dim) if os.path.isfile(t) else parse_points(t, dim)
    else:
        raise ConfigError("predict needs --targets or --target-grid")
    methods = [m.strip().lower() for m in opts["method"].split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if m == "ml" and not isinstance(model, SubGaussian):
            raise UnsupportedModelError(f"method ml is not available for the {opts['model']} model")
    grid = measure_grid(model, opts, np.vstack([obs.sites, targets]))
    try:
        template = SiteSystem(model, obs.sites, targets[0], grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    template.warm()
    written = []
    for m in methods:
        wpath = _out_path(opts["out"], f"weights_{m}.csv")
        ppath = _out_path(opts["out"], f"predictions_{m}.csv")
        results = []
        kw = _solver_kwargs(m, opts)
        prev = None
        for t in targets:
            problem = PredictionProblem(template.with_target(t), obs.values)
            try:
                if m == "lsl" and prev is not None:
                    kw["x0"] = prev
                res = problem.weights(m, **kw)
            except StableFieldError as exc:
                exc.method = m
                exc.target = [float(c) for c in np.atleast_1d(t)]
                raise
            if m == "lsl":
                prev = res.weights
            results.append(res)
        write_weights_csv(results, wpath)
        preds = np.array([r.weights @ obs.values for r in results])
        prov = {"model": opts["model"], "alpha": model.alpha, "method": m, "observations": opts["observations"]}
        write_realization_csv(FieldRealization(targets, preds, prov), ppath)
        written += [wpath, ppath]
    for p in written:
        print(p, file=out)
    return written


def cmd_covariation(opts, out=None):
    out = out or sys.stdout
    if not opts["points"]:
        raise ConfigError("covariation needs --points")
    pts = parse_points(opts["points"], opts["dim"])
    model = build_model(opts, pts.shape[1])
    grid = measure_grid(model, opts, pts)
    try:
        sys_ = SiteSystem(model, pts, pts[0], grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    # K[j, i] = [X(p_i), X(p_j)]; print row i = first argument
    K = covariation_system(sys_).K.T
    lines = [",".join(repr(float(v)) for v in row) for row in K]
    text = "\n".join(lines) + "\n"
    if opts["out"]:
        path = _out_path(opts["out"], "covariation.csv")
        _write(path, text)
        print(path, file=out)
    else:
        out.write(text)
    return K


def cmd_benchmark(opts, out=None) -> list:
    out = out or sys.stdout
    methods = None
    if opts["methods"]:
        methods = tuple(m.strip() for m in opts["methods"].split(",") if m.strip())
    try:
        cfg = BenchmarkConfig(
            field=opts["field"],
            alpha=opts["alpha"],
            realizations=opts["realizations"],
            resolution=opts["grid"],
            methods=methods,
            seed=opts["seed"],
            sill=opts["sill"],
            range=opts["range"],
            cells=opts["cells"],
            threads=opts["threads"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    spath = _out_path(opts["out"], "summary.csv")
    tpath = _out_path(opts["out"], "summary.txt")
    dpath = _out_path(opts["out"], "deviations.csv") if opts["raw"] else None
    result = run_benchmark(cfg)
    table = format_summary_table(result.summaries)
    write_summary_csv(result.summaries, spath)
    _write(tpath, table)
    written = [spath, tpath]
    if dpath:
        write_deviations_csv(result, dpath)
        written.append(dpath)
    if opts["panels"]:
        panels = sample_panels(cfg, 0)
        written.append(export_panels(result.points, panels, opts["out"], stem="panels"))
    out.write(table)
    for p in written:
        print(p, file=out)
    return written


COMMANDS = {
    "simulate": cmd_simulate,
    "predict": cmd_predict,
    "covariation": cmd_covariation,
    "benchmark": cmd_benchmark,
}


def _error_line(kind, code, exc, **extra):
    info = {"error": kind, "exit": code, "type": type(exc).__name__, "message": str(exc)}
    for attr in ("method", "target", "condition", "residual", "iterations", "index", "min_eigenvalue"):
        val = getattr(exc, attr, None)
        if val is not None:
            info[attr] = val if not isinstance(val, float) or math.isfinite(val) else repr(val)
    info.update(extra)
    return json.dumps(info, default=str)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve_options(args)
        COMMANDS[args.command](opts)
    except (ConfigError, UnsupportedModelError, FileExistsError) as exc:
        print(_error_line("config", EXIT_CONFIG, exc), file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(_error_line("numerical", EXIT_NUMERIC, exc), file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(_error_line("io", EXIT_CONFIG, exc), file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(_error_line("config", EXIT_CONFIG, exc), file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
