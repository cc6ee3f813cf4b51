"""Monte Carlo benchmark: simulate, extrapolate from a few sites, summarize deviations.

A benchmark run simulates ``realizations`` fields on an ``N x N`` evaluation
grid of ``[0, 1]^2`` (points ``(i/N, j/N)``, ``i, j = 1..N``), reads off the
values at the observation sites, predicts every grid value with each method
and pools the deviations ``X(g) - Xhat(g)`` over grid points and
realizations.

Weights do not depend on the realization, so they are solved once per
method.  Realization ``r`` always uses ``RngStream(seed).substream(r)``,
which makes the result independent of the thread count.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .covariation import SiteSystem
from .exceptions import RealizationError, StableFieldError, UnsupportedModelError
from .field_models import (
    CovarianceModel,
    DiscreteMeasureGrid,
    LevySheet,
    SubGaussian,
    covariance_factor,
    kernel_matrix,
    simulate_measure,
)
from .predictors import ConditionalSimulator, weight_field, weight_matrix
from .stable_core import RngStream, as_generator, sample_subgaussian_A

__all__ = [
    "DEFAULT_SITES",
    "FIELDS",
    "BenchmarkConfig",
    "BenchmarkResult",
    "DeviationSummary",
    "evaluation_grid",
    "export_panels",
    "export_surface",
    "format_summary_table",
    "read_surface_csv",
    "run_benchmark",
    "sample_panels",
    "summary_stats",
    "write_deviations_csv",
    "write_summary_csv",
]

DEFAULT_SITES = tuple((x, y) for x in (0.2, 0.5, 0.8) for y in (0.2, 0.5, 0.8))
FIELDS = ("sub-gaussian", "levy-sheet")

_APPLICABLE = {
    "sub-gaussian": ("lsl", "col", "ml", "mcl", "cs"),
    "levy-sheet": ("lsl", "col", "mcl"),
}
_DEFAULT_METHODS = {
    "sub-gaussian": ("lsl", "col", "ml", "mcl", "cs"),
    "levy-sheet": ("lsl", "col", "mcl"),
}
SUMMARY_COLUMNS = ("q05", "q25", "median", "mean", "q75", "q95")


@dataclass(frozen=True)
class BenchmarkConfig:
    """Everything that determines a benchmark run.

    ``cells`` is the number of measure cells per axis for the Levy sheet
    (defaults to ``resolution`` so cell edges line up with grid points).
    ``sill`` and ``range`` parametrize the Gaussian covariance of the
    sub-Gaussian field.
    """

    field: str = "sub-gaussian"
    alpha: float = 1.5
    realizations: int = 200
    resolution: int = 50
    sites: tuple = DEFAULT_SITES
    methods: tuple | None = None
    seed: int = 0
    sill: float = 7.0
    range: float = 0.1
    cells: int | None = None
    threads: int = 1
    jitter: float = 1e-10

    def __post_init__(self):
        if self.field not in FIELDS:
            raise ValueError(f"field must be one of {FIELDS}, got {self.field!r}")
        if not (1.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must lie in (1, 2], got {self.alpha}")
        if int(self.realizations) < 1:
            raise ValueError(f"realization count must be at least 1, got {self.realizations}")
        if int(self.resolution) < 2:
            raise ValueError(f"grid resolution must be at least 2, got {self.resolution}")
        if self.cells is not None and int(self.cells) < 1:
            raise ValueError(f"cells must be positive, got {self.cells}")
        if int(self.threads) < 1:
            raise ValueError(f"threads must be positive, got {self.threads}")
        sites = np.asarray(self.sites, dtype=float)
        if sites.ndim != 2 or sites.shape[1] != 2 or sites.shape[0] < 1:
            raise ValueError("sites must be a nonempty list of (x, y) pairs")
        object.__setattr__(self, "sites", tuple(map(tuple, sites.tolist())))
        methods = _DEFAULT_METHODS[self.field] if self.methods is None else self.methods
        methods = tuple(m.lower() for m in methods)
        if not methods:
            raise ValueError("at least one method is required")
        bad = [m for m in methods if m not in _APPLICABLE[self.field]]
        if bad:
            raise UnsupportedModelError(
                f"method(s) {', '.join(bad)} not applicable to {self.field}; "
                f"choose from {', '.join(_APPLICABLE[self.field])}"
            )
        if len(set(methods)) != len(methods):
            raise ValueError("duplicate methods")
        object.__setattr__(self, "methods", methods)
        if self.sill <= 0 or self.range <= 0:
            raise ValueError("sill and range must be positive")

    @property
    def measure_cells(self) -> int:
        return int(self.cells) if self.cells is not None else int(self.resolution)

    def model(self):
        if self.field == "levy-sheet":
            return LevySheet(self.alpha, dim=2)
        return SubGaussian(self.alpha, CovarianceModel(self.sill, self.range, "gaussian"), dim=2)


@dataclass(frozen=True)
class DeviationSummary:
    """Six summary statistics of pooled deviations for one method."""

    method: str
    q05: float
    q25: float
    median: float
    mean: float
    q75: float
    q95: float
    count: int

    def as_row(self) -> tuple:
        return tuple(getattr(self, c) for c in SUMMARY_COLUMNS)


def summary_stats(values, method: str = "") -> DeviationSummary:
    """Quantiles (5%, 25%, 50%, 75%, 95%) and mean of ``values``.

    Quantiles use linear interpolation between order statistics (numpy's
    default ``"linear"`` rule, type 7 in Hyndman and Fan's list).
    """
    x = np.asarray(values, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("summary statistics need at least one value")
    q = np.quantile(x, [0.05, 0.25, 0.5, 0.75, 0.95], method="linear")
    # interpolation can break monotonicity by one ulp; restore it
    q = np.maximum.accumulate(q)
    return DeviationSummary(method, *map(float, q[:2]), float(q[2]), float(np.mean(x)), *map(float, q[3:]), int(x.size))


def evaluation_grid(resolution: int) -> np.ndarray:
    """Points ``(i/N, j/N)`` for ``i, j = 1..N``, x-major order."""
    n = int(resolution)
    axis = np.arange(1, n + 1) / n
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    points: np.ndarray
    summaries: dict
    deviations: dict
    weights: dict
    nonconverged: dict
    runtime: float
    timings: dict = field(default_factory=dict)


class _Setup:
    """Realization-independent state: grids, factors, weights."""

    def __init__(self, config: BenchmarkConfig):
        self.config = config
        self.model = config.model()
        self.points = evaluation_grid(config.resolution)
        sites = np.asarray(config.sites, dtype=float)
        self.sites = sites
        n = sites.shape[0]
        # grid points that coincide with a site reuse the site's value exactly
        diff = np.abs(self.points[:, None, :] - sites[None, :, :]).max(axis=-1)
        hit = diff <= 1e-12
        on_site = hit.any(axis=1)
        free_idx = np.flatnonzero(~on_site)
        self.index = np.empty(self.points.shape[0], dtype=int)
        self.index[on_site] = hit[on_site].argmax(axis=1)
        self.index[free_idx] = n + np.arange(free_idx.size)
        self.joint = np.vstack([sites, self.points[free_idx]])
        self.timings = {}

        t = time.perf_counter()
        if config.field == "levy-sheet":
            c = config.measure_cells
            self.grid = DiscreteMeasureGrid.regular([0.0, 0.0], [1.0, 1.0], c)
            self.joint_kernel = kernel_matrix(self.model, self.joint, self.grid)
            self.factor = None
        else:
            self.grid = None
            self.factor = covariance_factor(self.model.covariance, self.joint, config.jitter)
        self.timings["setup"] = time.perf_counter() - t

        self.template = SiteSystem(self.model, sites, sites[0], self.grid)
        self.weights = {}
        self.nonconverged = {}
        for method in config.methods:
            if method == "cs":
                continue
            t = time.perf_counter()
            kw = {} if method in ("col", "ml") else {"strict": False}
            results = weight_field(self.template, self.points, method, **kw)
            self.weights[method] = weight_matrix(results)
            self.nonconverged[method] = int(sum(not r.converged for r in results))
            self.timings[f"weights_{method}"] = time.perf_counter() - t
        self.cs = None
        if "cs" in config.methods:
            t = time.perf_counter()
            self.cs = ConditionalSimulator(self.template, self.points, jitter=config.jitter)
            self.timings["setup_cs"] = time.perf_counter() - t

    def simulate(self, stream: RngStream):
        """Field values at the evaluation points and the observations."""
        gen = as_generator(stream)
        cfg = self.config
        if cfg.field == "levy-sheet":
            measure = simulate_measure(self.grid, cfg.alpha, gen)
            joint = self.joint_kernel @ measure
        else:
            a = 1.0 if cfg.alpha == 2.0 else sample_subgaussian_A(cfg.alpha, gen)
            joint = math.sqrt(a) * (self.factor @ gen.standard_normal(self.factor.shape[1]))
        n = self.sites.shape[0]
        return joint[self.index], joint[:n]

    def realization(self, index: int) -> dict:
        stream = RngStream(self.config.seed).substream(index)
        values, observed = self.simulate(stream)
        out = {}
        for method in self.config.methods:
            if method == "cs":
                sim = self.cs.draw(observed, stream.substream(0))
                out[method] = values - sim.values
            else:
                out[method] = values - self.weights[method] @ observed
        return out


def _run_chunk(setup: _Setup, indices):
    rows = []
    for r in indices:
        try:
            rows.append(setup.realization(r))
        except (StableFieldError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise RealizationError(f"realization {r} failed: {exc}", r) from exc
    return rows


def run_benchmark(config: BenchmarkConfig) -> BenchmarkResult:
    """Run the benchmark described by ``config``.

    Returns summaries per method plus the raw deviations, an array of shape
    ``(realizations, N*N)`` per method.

    Raises
    ------
    RealizationError
        If simulating or predicting some realization fails; ``index`` says which.
    """
    start = time.perf_counter()
    setup = _Setup(config)
    R = int(config.realizations)
    threads = min(int(config.threads), R)
    t = time.perf_counter()
    if threads == 1:
        rows = _run_chunk(setup, range(R))
    else:
        chunks = [range(k, R, threads) for k in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _run_chunk(setup, c), chunks))
        rows = [None] * R
        for chunk, part in zip(chunks, parts):
            for r, row in zip(chunk, part):
                rows[r] = row
    setup.timings["realizations"] = time.perf_counter() - t
    deviations = {m: np.vstack([row[m] for row in rows]) for m in config.methods}
    summaries = {m: summary_stats(deviations[m], m) for m in config.methods}
    return BenchmarkResult(
        config,
        setup.points,
        summaries,
        deviations,
        setup.weights,
        setup.nonconverged,
        time.perf_counter() - start,
        setup.timings,
    )


def sample_panels(config: BenchmarkConfig, index: int = 0) -> dict:
    """One realization and each method's surface on the evaluation grid.

    Keys are ``"realization"`` and the method names; values are length
    ``N*N`` vectors in :func:`evaluation_grid` order.
    """
    setup = _Setup(config)
    stream = RngStream(config.seed).substream(index)
    values, observed = setup.simulate(stream)
    panels = {"realization": values}
    for method in config.methods:
        if method == "cs":
            panels[method] = setup.cs.draw(observed, stream.substream(0)).values
        else:
            panels[method] = setup.weights[method] @ observed
    return panels


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _open_fresh(path):
    # outputs are never appended to or overwritten
    return open(path, "x", encoding="utf-8", newline="")


def write_summary_csv(summaries, path=None) -> str:
    """``method,q05,q25,median,mean,q75,q95,count`` rows; returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("method",) + SUMMARY_COLUMNS + ("count",))
    for s in summaries.values():
        w.writerow((s.method,) + tuple(repr(v) for v in s.as_row()) + (s.count,))
    text = buf.getvalue()
    if path is not None:
        with _open_fresh(path) as fh:
            fh.write(text)
    return text


def format_summary_table(summaries) -> str:
    """Fixed-width text table with four decimals."""
    head = ("Method", "5%-Quantile", "1st Quartile", "Median", "Mean", "3rd Quartile", "95%-Quantile")
    rows = [head] + [(s.method.upper(),) + tuple(f"{v:.4f}" for v in s.as_row()) for s in summaries.values()]
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    lines = []
    for k, r in enumerate(rows):
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells))
        if k == 0:
            lines.append("-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def write_deviations_csv(result: BenchmarkResult, path) -> None:
    """Raw deviations: ``realization,x,y,<method>...`` with one row per grid point."""
    methods = list(result.config.methods)
    R = int(result.config.realizations)
    G = result.points.shape[0]
    with _open_fresh(path) as fh:
        fh.write(",".join(["realization", "x", "y"] + methods) + "\n")
        for r in range(R):
            block = np.column_stack(
                [np.full(G, r), result.points] + [result.deviations[m][r] for m in methods]
            )
            np.savetxt(fh, block, delimiter=",", fmt=["%d", "%.17g", "%.17g"] + ["%.17g"] * len(methods))


def export_surface(points, values, path=None) -> str:
    """Write ``x,y,value`` rows of a surface on a regular grid; returns the text.

    Rows keep the input order; :func:`read_surface_csv` reads them back
    bit-exactly.
    """
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(values, dtype=float).reshape(-1)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] != vals.size:
        raise ValueError("points must be (m, 2) and match values")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("x", "y", "value"))
    prev_x = None
    for (x, y), v in zip(pts, vals):
        if prev_x is not None and x != prev_x:
            buf.write("\n")  # blank line between scans, as gnuplot's pm3d expects
        w.writerow((repr(float(x)), repr(float(y)), repr(float(v))))
        prev_x = x
    text = buf.getvalue()
    if path is not None:
        with _open_fresh(path) as fh:
            fh.write(text)
    return text


def read_surface_csv(path):
    """Inverse of :func:`export_surface`: ``(points, values)``."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if lines[0] != "x,y,value":
        raise ValueError(f"unexpected surface header {lines[0]!r}")
    data = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:]], dtype=float).reshape(-1, 3)
    return data[:, :2], data[:, 2]


_TITLES = {
    "realization": "Realization",
    "lsl": "LSL",
    "col": "COL",
    "ml": "ML",
    "mcl": "MCL",
    "cs": "CS",
}


def export_panels(points, panels: dict, directory, stem: str = "panel") -> str:
    """Write one surface CSV per panel and a gnuplot script showing them as heatmaps.

    Panels are laid out two per row in the order given; all share the color
    range of the first panel.  Returns the path of the script.
    """
    os.makedirs(directory, exist_ok=True)
    names = list(panels)
    if not names:
        raise ValueError("no panels to export")
    files = []
    for name in names:
        fname = f"{stem}_{name}.csv"
        export_surface(points, panels[name], os.path.join(directory, fname))
        files.append(fname)
    first = np.asarray(panels[names[0]], dtype=float)
    lo, hi = float(first.min()), float(first.max())
    rows = math.ceil(len(names) / 2)
    script = [
        "# gnuplot script; run from this directory: gnuplot " + f"{stem}.gp",
        "set terminal pngcairo size 1000," + str(450 * rows),
        f"set output '{stem}.png'",
        "set datafile separator ','",
        "set datafile columnheaders",
        "set view map",
        "set size ratio -1",
        "set xrange [0:1]",
        "set yrange [0:1]",
        f"set cbrange [{lo!r}:{hi!r}]",
        "set palette rgbformulae 33,13,10",
        f"set multiplot layout {rows},2",
    ]
    for name, fname in zip(names, files):
        title = _TITLES.get(name, name)
        script.append(f"set title '{title}'")
        script.append(f"splot '{fname}' using 1:2:3 with pm3d notitle")
    script.append("unset multiplot")
    path = os.path.join(directory, f"{stem}.gp")
    with _open_fresh(path) as fh:
        fh.write("\n".join(script) + "\n")
    return path
