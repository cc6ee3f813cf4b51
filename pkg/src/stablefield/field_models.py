"""Kernel field models, discretized stable random measures and simulation.

A field with integral representation ``X(t) = int f_t(x) M(dx)`` is
discretized on a :class:`DiscreteMeasureGrid`: each cell carries an exact
stable draw ``M_k ~ S_alpha(vol_k**(1/alpha), beta_k, 0)`` and the kernel is
evaluated at the cell center, so ``X(t) ~= sum_k f_t(c_k) M_k``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .exceptions import FactorizationError, GridCoverageWarning, UnsupportedModelError
from .stable_core import RngStream, StableParams, as_generator, sample_stable, sample_subgaussian_A
from .stable_core import _open_uniform_angle, _standard_cms

__all__ = [
    "CovarianceModel",
    "DiscreteMeasureGrid",
    "FieldModel",
    "FieldRealization",
    "LevySheet",
    "MovingAverage",
    "OrnsteinUhlenbeck",
    "SubGaussian",
    "bump_kernel",
    "covariance_factor",
    "eval_kernel",
    "grid_for_model",
    "kernel_matrix",
    "read_realization_csv",
    "simulate_field",
    "simulate_fields",
    "simulate_gaussian_field",
    "simulate_measure",
    "simulate_subgaussian_field",
    "write_realization_csv",
]


def as_points(points, dim=None) -> np.ndarray:
    """Coerce points to a float array of shape ``(n, d)``."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim in (None, 1) else arr.reshape(1, -1)
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# Measure grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteMeasureGrid:
    """Finite partition of a box with cell centers, volumes and skewness.

    Build regular grids with :meth:`regular`.  ``lower``/``upper`` are the box
    bounds; cells must tile the box.
    """

    lower: np.ndarray
    upper: np.ndarray
    centers: np.ndarray
    volumes: np.ndarray
    skewness: np.ndarray
    shape: tuple = ()

    def __post_init__(self):
        centers = as_points(self.centers, len(np.atleast_1d(self.lower)))
        object.__setattr__(self, "lower", np.atleast_1d(np.asarray(self.lower, dtype=float)))
        object.__setattr__(self, "upper", np.atleast_1d(np.asarray(self.upper, dtype=float)))
        object.__setattr__(self, "centers", centers)
        vols = np.asarray(self.volumes, dtype=float).reshape(-1)
        skew = np.broadcast_to(np.asarray(self.skewness, dtype=float), vols.shape).copy()
        object.__setattr__(self, "volumes", vols)
        object.__setattr__(self, "skewness", skew)
        if self.dim not in (1, 2):
            raise ValueError("only 1- and 2-dimensional domains are supported")
        if centers.shape[0] != vols.shape[0]:
            raise ValueError("centers and volumes differ in length")
        if np.any(vols <= 0):
            raise ValueError("cell volumes must be positive")
        if np.any(np.abs(skew) > 1):
            raise ValueError("cell skewness must lie in [-1, 1]")
        box = float(np.prod(self.upper - self.lower))
        if abs(vols.sum() - box) > 1e-12 * max(box, 1.0) * max(1.0, vols.size / 1e3):
            raise ValueError(f"cells do not tile the domain: total volume {vols.sum()} vs box {box}")

    @classmethod
    def regular(cls, lower, upper, cells, skewness=0.0) -> "DiscreteMeasureGrid":
        """Equal-volume cells on the box ``[lower, upper]``.

        ``cells`` is the number of cells per dimension (int or tuple).
        """
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        d = lower.size
        counts = (int(cells),) * d if np.ndim(cells) == 0 else tuple(int(c) for c in cells)
        if len(counts) != d or min(counts) < 1:
            raise ValueError(f"invalid cell counts {cells!r} for dimension {d}")
        if np.any(upper <= lower):
            raise ValueError("upper bounds must exceed lower bounds")
        axes = []
        for lo, hi, m in zip(lower, upper, counts):
            step = (hi - lo) / m
            axes.append(lo + (np.arange(m) + 0.5) * step)
        mesh = np.meshgrid(*axes, indexing="ij")
        centers = np.column_stack([m.reshape(-1) for m in mesh])
        vol = float(np.prod((upper - lower) / np.asarray(counts)))
        volumes = np.full(centers.shape[0], vol)
        skew = np.asarray(skewness, dtype=float)
        if skew.ndim > 0:
            skew = skew.reshape(-1)
        return cls(lower, upper, centers, volumes, skew, counts)

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def size(self) -> int:
        return int(self.volumes.size)

    def with_skewness(self, skewness) -> "DiscreteMeasureGrid":
        return DiscreteMeasureGrid(self.lower, self.upper, self.centers, self.volumes, skewness, self.shape)

    def describe(self) -> str:
        lo = ",".join(f"{v:g}" for v in self.lower)
        hi = ",".join(f"{v:g}" for v in self.upper)
        cells = "x".join(str(c) for c in self.shape) if self.shape else str(self.size)
        return f"box=[{lo}]..[{hi}] cells={cells}"


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceModel:
    """Stationary isotropic covariance ``C(h)``.

    ``family="gaussian"`` gives ``sill * exp(-(|h|/range)**2)``,
    ``family="exponential"`` gives ``sill * exp(-|h|/range)``.
    """

    sill: float = 1.0
    range: float = 1.0
    family: str = "gaussian"

    def __post_init__(self):
        if self.family not in ("gaussian", "exponential"):
            raise ValueError(f"unknown covariance family {self.family!r}")
        if not (self.sill > 0 and self.range > 0):
            raise ValueError("sill and range must be positive")

    def __call__(self, h):
        """Evaluate at lag(s) ``h``: scalars, ``(..., d)`` arrays or distances."""
        r = np.abs(np.asarray(h, dtype=float)) / self.range
        if self.family == "gaussian":
            return self.sill * np.exp(-(r**2))
        return self.sill * np.exp(-r)

    def matrix(self, a, b=None) -> np.ndarray:
        """Covariance matrix ``[C(a_i - b_j)]``."""
        a = as_points(a)
        b = a if b is None else as_points(b, a.shape[1])
        diff = a[:, None, :] - b[None, :, :]
        return self(np.sqrt(np.sum(diff**2, axis=-1)))


class FieldModel:
    """Base class of field models; ``alpha`` is the stability index."""

    alpha: float
    dim: int

    has_kernel = True

    def kernel(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Kernel values ``f_{t_i}(x_k)`` as an ``(n, K)`` array."""
        raise UnsupportedModelError(f"{type(self).__name__} has no kernel representation")

    def _check_alpha(self, upper_open=False):
        hi_ok = self.alpha < 2.0 if upper_open else self.alpha <= 2.0
        if not (1.0 < self.alpha and hi_ok):
            rng = "(1, 2)" if upper_open else "(1, 2]"
            raise ValueError(f"alpha must lie in {rng}, got {self.alpha}")


@dataclass(frozen=True)
class LevySheet(FieldModel):
    """Levy sheet: ``f_t(x) = 1{0 <= x_i <= t_i for all i}``."""

    alpha: float
    dim: int = 1

    def __post_init__(self):
        self._check_alpha()

    def kernel(self, t, x):
        t = as_points(t, self.dim)
        x = as_points(x, self.dim)
        inside = np.all((x[None, :, :] <= t[:, None, :]) & (x[None, :, :] >= 0.0), axis=-1)
        return inside.astype(float)


@dataclass(frozen=True)
class MovingAverage(FieldModel):
    """Moving average ``f_t(x) = f(t - x)`` with a compactly supported ``f``.

    ``kernel_fn`` maps an array of lags of shape ``(..., d)`` to values of
    shape ``(...)``; it is zeroed outside ``|h| <= support_radius``.
    """

    alpha: float
    kernel_fn: Callable = field(compare=False)
    support_radius: float = 1.0
    dim: int = 1
    name: str = "custom"

    def __post_init__(self):
        self._check_alpha()
        if not self.support_radius > 0:
            raise ValueError("support_radius must be positive")

    def kernel(self, t, x):
        t = as_points(t, self.dim)
        x = as_points(x, self.dim)
        lag = t[:, None, :] - x[None, :, :]
        inside = np.sum(lag**2, axis=-1) <= self.support_radius**2
        vals = np.asarray(self.kernel_fn(lag), dtype=float)
        return np.where(inside, vals, 0.0)


def bump_kernel(radius: float, dim: int = 1, height: float = 1.0) -> Callable:
    """Continuous nonnegative kernel ``height * (1 - |h|^2/r^2)^2`` on ``|h| <= r``."""

    def f(lag):
        lag = np.asarray(lag, dtype=float)
        if lag.ndim == 0 or (dim == 1 and lag.shape[-1:] != (1,)):
            lag = lag[..., None]
        q = np.sum(lag**2, axis=-1) / radius**2
        return height * np.clip(1.0 - q, 0.0, None) ** 2

    return f


@dataclass(frozen=True)
class OrnsteinUhlenbeck(FieldModel):
    """Stable Ornstein-Uhlenbeck process ``f_t(x) = exp(-rate (t-x)) 1{t >= x}``."""

    alpha: float
    rate: float = 1.0
    dim: int = 1

    def __post_init__(self):
        self._check_alpha()
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if self.dim != 1:
            raise ValueError("the Ornstein-Uhlenbeck model is one-dimensional")

    def kernel(self, t, x):
        t = as_points(t, 1)[:, 0]
        x = as_points(x, 1)[:, 0]
        lag = t[:, None] - x[None, :]
        return np.where(lag >= 0.0, np.exp(-self.rate * np.maximum(lag, 0.0)), 0.0)


@dataclass(frozen=True)
class SubGaussian(FieldModel):
    """Sub-Gaussian field ``A**0.5 * G`` with ``G`` having covariance ``C``.

    ``alpha = 2`` is allowed and denotes the Gaussian field ``G`` itself.
    """

    alpha: float
    covariance: CovarianceModel = field(default_factory=CovarianceModel)
    dim: int = 2

    has_kernel = False

    def __post_init__(self):
        self._check_alpha()


def eval_kernel(model: FieldModel, t, x) -> float:
    """Kernel value ``f_t(x)`` at a single pair of points."""
    if not model.has_kernel:
        raise UnsupportedModelError(f"{type(model).__name__} has no kernel representation")
    return float(model.kernel(t if np.ndim(t) else [t], x if np.ndim(x) else [x])[0, 0])


def kernel_matrix(model: FieldModel, sites, grid: DiscreteMeasureGrid) -> np.ndarray:
    """Kernel values at the grid cell centers, shape ``(n_sites, n_cells)``."""
    if not model.has_kernel:
        raise UnsupportedModelError(f"{type(model).__name__} has no kernel representation")
    return model.kernel(as_points(sites, model.dim), grid.centers)


def grid_for_model(model: FieldModel, sites, cells, tail_tol: float = 1e-8, skewness=0.0):
    """Integration grid covering the kernel support relevant to ``sites``.

    * Levy sheet: ``[0, max(1, max site coordinate)]**d``.
    * Moving average: site bounding box padded by the support radius.
    * Ornstein-Uhlenbeck: ``[min site - L, max site]`` where the truncated
      tail mass ``exp(-alpha rate L)`` equals ``tail_tol``.
    """
    sites = as_points(sites, model.dim)
    if isinstance(model, LevySheet):
        hi = np.maximum(1.0, sites.max(axis=0))
        return DiscreteMeasureGrid.regular(np.zeros(model.dim), hi, cells, skewness)
    if isinstance(model, MovingAverage):
        r = model.support_radius
        return DiscreteMeasureGrid.regular(sites.min(axis=0) - r, sites.max(axis=0) + r, cells, skewness)
    if isinstance(model, OrnsteinUhlenbeck):
        pad = -math.log(tail_tol) / (model.alpha * model.rate)
        return DiscreteMeasureGrid.regular(sites.min(axis=0) - pad, sites.max(axis=0), cells, skewness)
    raise UnsupportedModelError(f"{type(model).__name__} is not discretized on a measure grid")


def _coverage_loss(model, sites, grid, max_sites=16) -> float:
    """Largest relative kernel mass ``int |f_t|^alpha`` lying outside the grid.

    Estimated on a box of twice the width with the same cell size.
    """
    sites = as_points(sites, model.dim)
    if sites.shape[0] > max_sites:
        # extremes of each coordinate plus an even spread of the rest
        pick = set(np.argmin(sites, axis=0)) | set(np.argmax(sites, axis=0))
        pick |= set(np.linspace(0, sites.shape[0] - 1, max_sites - len(pick)).astype(int))
        sites = sites[sorted(pick)]
    width = grid.upper - grid.lower
    counts = np.asarray(grid.shape if grid.shape else (round(grid.size ** (1 / grid.dim)),) * grid.dim)
    big = DiscreteMeasureGrid.regular(grid.lower - width / 2, grid.upper + width / 2, 2 * counts)
    inner = np.all((big.centers >= grid.lower) & (big.centers <= grid.upper), axis=1)
    mass = np.abs(model.kernel(sites, big.centers)) ** model.alpha * big.volumes
    total = mass.sum(axis=1)
    outside = mass[:, ~inner].sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(total > 0, outside / total, 0.0)
    return float(frac.max(initial=0.0))


# ---------------------------------------------------------------------------
# Realizations
# ---------------------------------------------------------------------------


@dataclass
class FieldRealization:
    """Simulated values at a set of sites, with provenance.

    ``measure`` keeps the per-cell draws of kernel models and ``a`` the
    mixing variable of sub-Gaussian fields so they can be reused later.
    """

    sites: np.ndarray
    values: np.ndarray
    provenance: dict = field(default_factory=dict)
    measure: np.ndarray | None = None
    a: float | None = None

    def __post_init__(self):
        self.sites = as_points(self.sites)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.sites.shape[0] != self.values.shape[0]:
            raise ValueError("sites and values differ in length")


def _describe_model(model: FieldModel) -> str:
    if isinstance(model, LevySheet):
        return f"levy-sheet(dim={model.dim})"
    if isinstance(model, MovingAverage):
        return f"moving-average(kernel={model.name},radius={model.support_radius:g},dim={model.dim})"
    if isinstance(model, OrnsteinUhlenbeck):
        return f"ornstein-uhlenbeck(rate={model.rate:g})"
    if isinstance(model, SubGaussian):
        c = model.covariance
        kind = "gaussian" if model.alpha == 2 else "sub-gaussian"
        return f"{kind}(family={c.family},sill={c.sill:g},range={c.range:g},dim={model.dim})"
    return type(model).__name__


def _seed_of(rng):
    return rng.seed if isinstance(rng, RngStream) else None


def simulate_measure(grid: DiscreteMeasureGrid, alpha: float, rng, size=None) -> np.ndarray:
    """Independent cell draws ``M_k ~ S_alpha(vol_k**(1/alpha), beta_k, 0)``.

    With ``size=m`` an ``(m, K)`` array of ``m`` independent measures is
    returned, otherwise a length-``K`` vector.
    """
    gen = as_generator(rng)
    shape = (grid.size,) if size is None else (int(size), grid.size)
    v = _open_uniform_angle(gen, shape)
    w = gen.standard_exponential(shape)
    scale = grid.volumes ** (1.0 / alpha)
    if abs(alpha - 1.0) <= 1e-10:
        # alpha = 1 needs the log-scale correction per cell
        out = np.empty(shape)
        for k in range(grid.size):
            params = StableParams(alpha, scale[k], grid.skewness[k], 0.0)
            out[..., k] = sample_stable(params, gen, shape[:-1] or None)
        return out
    return scale * _standard_cms(alpha, grid.skewness, v, w)


def simulate_fields(model: FieldModel, sites, grid: DiscreteMeasureGrid, rng, count: int):
    """``count`` realizations of a kernel model at ``sites``.

    Returns ``(values, measures)`` with shapes ``(count, n)`` and
    ``(count, K)``.
    """
    F = kernel_matrix(model, sites, grid)
    measures = simulate_measure(grid, model.alpha, rng, size=count)
    return measures @ F.T, measures


def simulate_field(
    model: FieldModel,
    sites,
    grid: DiscreteMeasureGrid,
    rng,
    coverage_tol: float = 1e-3,
) -> FieldRealization:
    """Discretized stochastic integral ``X(t) = sum_k f_t(c_k) M_k``.

    Warns with :class:`GridCoverageWarning` if more than ``coverage_tol`` of
    some site's kernel mass ``int |f_t|^alpha`` lies outside the grid.
    """
    sites = as_points(sites, model.dim)
    if coverage_tol is not None:
        loss = _coverage_loss(model, sites, grid)
        if loss > coverage_tol:
            warnings.warn(
                f"{loss:.3g} of the kernel mass lies outside the integration grid",
                GridCoverageWarning,
                stacklevel=2,
            )
    F = kernel_matrix(model, sites, grid)
    measure = simulate_measure(grid, model.alpha, rng)
    prov = {
        "model": _describe_model(model),
        "alpha": model.alpha,
        "seed": _seed_of(rng),
        "grid": grid.describe(),
    }
    return FieldRealization(sites, F @ measure, prov, measure=measure)


def covariance_factor(cov: CovarianceModel, sites, jitter: float = 1e-10, method: str = "auto"):
    """Symmetric factor ``L`` with ``L @ L.T ~= [C(t_i - t_j)]``.

    ``method="cholesky"`` adds ``jitter * C(0)`` to the diagonal and fails
    with :class:`FactorizationError` if that is not enough.  ``"eigh"`` uses
    the symmetric eigendecomposition and clips eigenvalues that are
    negative only by rounding.  ``"auto"`` tries Cholesky first.
    """
    sites = as_points(sites)
    S = cov.matrix(sites)
    n = S.shape[0]
    c0 = cov.sill
    if method in ("auto", "cholesky"):
        try:
            return linalg.cholesky(S + jitter * c0 * np.eye(n), lower=True)
        except linalg.LinAlgError:
            if method == "cholesky":
                lam_min = float(linalg.eigvalsh(S, subset_by_index=[0, 0])[0])
                raise FactorizationError(
                    f"covariance matrix is not positive definite (min eigenvalue {lam_min:.3e})",
                    lam_min,
                ) from None
    elif method != "eigh":
        raise ValueError(f"unknown factorization method {method!r}")
    w, Q = linalg.eigh(S)
    floor = -1e-8 * c0 * max(n, 1)
    if w[0] < floor:
        raise FactorizationError(
            f"covariance matrix is indefinite (min eigenvalue {w[0]:.3e})", float(w[0])
        )
    return Q * np.sqrt(np.clip(w, 0.0, None))


def simulate_gaussian_field(cov: CovarianceModel, sites, rng, jitter: float = 1e-10, method="auto", size=None):
    """Zero-mean Gaussian vector with covariance ``[C(t_i - t_j)]``.

    With ``size=m`` returns an ``(m, n)`` array of draws instead of a
    :class:`FieldRealization`.
    """
    sites = as_points(sites)
    L = covariance_factor(cov, sites, jitter, method)
    gen = as_generator(rng)
    if size is not None:
        return gen.standard_normal((int(size), sites.shape[0])) @ L.T
    z = gen.standard_normal(sites.shape[0])
    prov = {
        "model": f"gaussian(family={cov.family},sill={cov.sill:g},range={cov.range:g})",
        "alpha": 2.0,
        "seed": _seed_of(rng),
    }
    return FieldRealization(sites, L @ z, prov)


def simulate_subgaussian_field(
    cov: CovarianceModel, alpha: float, sites, rng, jitter: float = 1e-10, method="auto", size=None
):
    """Sub-Gaussian realization ``A**0.5 * G(t)``; the draw of A is kept.

    With ``size=m`` returns an ``(m, n)`` array of independent realizations
    (one A each) instead of a :class:`FieldRealization`.
    """
    sites = as_points(sites)
    L = covariance_factor(cov, sites, jitter, method)
    gen = as_generator(rng)
    if size is not None:
        a = sample_subgaussian_A(alpha, gen, int(size))
        g = gen.standard_normal((int(size), sites.shape[0])) @ L.T
        return np.sqrt(a)[:, None] * g
    a = sample_subgaussian_A(alpha, gen)
    g = L @ gen.standard_normal(sites.shape[0])
    prov = {
        "model": f"sub-gaussian(family={cov.family},sill={cov.sill:g},range={cov.range:g})",
        "alpha": alpha,
        "seed": _seed_of(rng),
    }
    return FieldRealization(sites, math.sqrt(a) * g, prov, a=a)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

_COORD_NAMES = ("x", "y")


def write_realization_csv(real: FieldRealization, path=None) -> str:
    """Write ``x[,y],value`` rows with ``#`` metadata lines.

    Returns the CSV text; also writes it to ``path`` when given.  Floats use
    ``repr`` so values round-trip exactly.
    """
    buf = io.StringIO()
    for key, val in real.provenance.items():
        buf.write(f"# {key}: {val}\n")
    if real.a is not None:
        buf.write(f"# A: {real.a!r}\n")
    d = real.sites.shape[1]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(_COORD_NAMES[:d]) + ["value"])
    for site, value in zip(real.sites, real.values):
        writer.writerow([repr(float(c)) for c in site] + [repr(float(value))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "x", encoding="utf-8") as fh:
            fh.write(text)
    return text


def read_realization_csv(path) -> FieldRealization:
    """Parse a CSV written by :func:`write_realization_csv`."""
    meta = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
            elif line.strip():
                rows.append(line.strip())
    header = rows[0].split(",")
    if header[-1] != "value" or header[:-1] not in (["x"], ["x", "y"]):
        raise ValueError(f"unexpected realization header {rows[0]!r}")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    a = float(meta.pop("A")) if "A" in meta else None
    return FieldRealization(data[:, :-1], data[:, -1], meta, a=a)
