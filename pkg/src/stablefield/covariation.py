"""Scales, covariations and related diagnostics on a measure grid.

Every exact quantity here is a midpoint sum over the cells of a
:class:`~stablefield.field_models.DiscreteMeasureGrid`, so the objective of
the least-scale predictor and its gradient come from one discretization.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .exceptions import UnsupportedModelError
from .field_models import CovarianceModel, DiscreteMeasureGrid, FieldModel, SubGaussian, as_points
from .stable_core import moment_constant, signed_power

__all__ = [
    "CovariationSystem",
    "SiteSystem",
    "covariation_kernel",
    "covariation_subgaussian",
    "covariation_system",
    "estimate_covariation_flom",
    "full_dimensionality_check",
    "gradient_scale_alpha",
    "scale_of_combination",
    "sigma_from_flom",
    "skewness_of_combination",
]

# Residuals this far below the magnitude of the terms they are computed from
# are rounding noise and count as zero in signed powers with exponent < 1.
_ROUND_FLOOR = 64 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class SiteSystem:
    """Observation sites ``t_1..t_n``, a target ``t_0`` and the field model.

    Kernel models need ``grid``; sub-Gaussian models carry their covariance.
    Site kernels are cached and shared by :meth:`with_target`.
    """

    model: FieldModel
    sites: np.ndarray
    target: np.ndarray
    grid: DiscreteMeasureGrid | None = None

    def __post_init__(self):
        sites = as_points(self.sites, self.model.dim)
        target = as_points(self.target, self.model.dim)
        if target.shape[0] != 1:
            raise ValueError("target must be a single point")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "target", target[0])
        if sites.shape[0] < 1:
            raise ValueError("at least one observation site is required")
        diff = np.abs(sites[:, None, :] - sites[None, :, :]).max(axis=-1)
        np.fill_diagonal(diff, np.inf)
        if np.any(diff <= 1e-12):
            raise ValueError("observation sites must be pairwise distinct")
        if self.model.has_kernel:
            if self.grid is None:
                raise ValueError("kernel models need a DiscreteMeasureGrid")
            if self.grid.dim != self.model.dim:
                raise ValueError("grid and model dimensions differ")

    @property
    def alpha(self) -> float:
        return self.model.alpha

    @property
    def n(self) -> int:
        return self.sites.shape[0]

    @property
    def is_subgaussian(self) -> bool:
        return isinstance(self.model, SubGaussian)

    @property
    def covariance(self) -> CovarianceModel:
        if not self.is_subgaussian:
            raise UnsupportedModelError("only sub-Gaussian systems carry a covariance model")
        return self.model.covariance

    def coincident_site(self, tol: float = 1e-12):
        """Index of the site equal to the target (within ``tol``), or None."""
        hit = np.flatnonzero(np.all(np.abs(self.sites - self.target) <= tol, axis=1))
        return int(hit[0]) if hit.size else None

    @cached_property
    def site_kernels(self) -> np.ndarray:
        """``F[k, i] = f_{t_i}(c_k)``, shape ``(K, n)``."""
        self._require_kernel()
        return np.ascontiguousarray(self.model.kernel(self.sites, self.grid.centers).T)

    @cached_property
    def target_kernel(self) -> np.ndarray:
        self._require_kernel()
        return self.model.kernel(self.target[None, :], self.grid.centers)[0]

    @cached_property
    def site_covariance(self) -> np.ndarray:
        """Covariance of the Gaussian part over the sites."""
        return self.covariance.matrix(self.sites)

    @cached_property
    def site_dual(self) -> np.ndarray:
        """``G[k, j] = f_{t_j}(c_k)^<alpha-1> vol_k``; pairs with any kernel to a covariation."""
        return signed_power(self.site_kernels, self.alpha - 1.0) * self.grid.volumes[:, None]

    @cached_property
    def site_matrix(self) -> np.ndarray:
        """``K[j, i] = [X(t_i), X(t_j)]_alpha`` (target independent)."""
        return self.site_dual.T @ self.site_kernels

    @cached_property
    def full_dimension(self):
        """Cached :func:`full_dimensionality_check` at the default threshold."""
        return full_dimensionality_check(self)

    def warm(self) -> "SiteSystem":
        """Fill the target-independent caches so copies share them."""
        if self.model.has_kernel:
            self.site_matrix
        else:
            self.site_covariance
        self.full_dimension
        return self

    def with_target(self, target) -> "SiteSystem":
        new = replace(self, target=target)
        for key in ("site_kernels", "site_covariance", "site_dual", "site_matrix", "full_dimension"):
            if key in self.__dict__:
                new.__dict__[key] = self.__dict__[key]
        return new

    def _require_kernel(self):
        if not self.model.has_kernel:
            raise UnsupportedModelError(f"{type(self.model).__name__} has no kernel representation")


@dataclass(frozen=True)
class CovariationSystem:
    """``K[j, i] = [X(t_i), X(t_j)]_alpha`` and ``b[j] = [X(t_0), X(t_j)]_alpha``."""

    K: np.ndarray
    b: np.ndarray


def _pow_abs(r, alpha):
    return np.abs(r) ** alpha


def _snap(r, magnitude):
    """Zero out residuals that are pure rounding noise."""
    return np.where(np.abs(r) <= _ROUND_FLOOR * magnitude, 0.0, r)


def scale_of_combination(sys: SiteSystem, weights) -> float:
    """Scale of ``sum_i w_i X(t_i)`` with ``w_0`` belonging to the target.

    ``weights`` has length ``n + 1``: ``(w_0, w_1, ..., w_n)``.  Kernel models
    use the discretized ``L^alpha`` norm; sub-Gaussian ones the quadratic
    form ``(w' Omega w / 2)**0.5`` of the Gaussian part.
    """
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != sys.n + 1:
        raise ValueError(f"expected {sys.n + 1} weights, got {w.size}")
    if sys.is_subgaussian:
        pts = np.vstack([sys.target[None, :], sys.sites])
        omega = sys.covariance.matrix(pts)
        return float(np.sqrt(max(w @ omega @ w, 0.0) / 2.0))
    combo = w[0] * sys.target_kernel + sys.site_kernels @ w[1:]
    total = float(np.sum(_pow_abs(combo, sys.alpha) * sys.grid.volumes))
    return total ** (1.0 / sys.alpha)


def covariation_kernel(model: FieldModel, grid: DiscreteMeasureGrid, s, t) -> float:
    """``[X(s), X(t)]_alpha = sum_k f_s(c_k) f_t(c_k)^<alpha-1> vol_k``."""
    pts = as_points(np.vstack([as_points(s, model.dim), as_points(t, model.dim)]), model.dim)
    fs, ft = model.kernel(pts, grid.centers)
    return float(np.sum(fs * signed_power(ft, model.alpha - 1.0) * grid.volumes))


def covariation_subgaussian(cov: CovarianceModel, alpha: float, s, t) -> float:
    """``2**(-alpha/2) C(s - t) C(0)**((alpha - 2)/2)``; ``C(s-t)/2`` at alpha = 2."""
    if not (1.0 < alpha <= 2.0):
        raise ValueError(f"alpha must lie in (1, 2], got {alpha}")
    h = np.atleast_1d(np.asarray(s, dtype=float) - np.asarray(t, dtype=float))
    c = float(cov(np.sqrt(np.sum(h**2))))
    if alpha == 2.0:
        return 0.5 * c
    return 2.0 ** (-alpha / 2.0) * c * cov.sill ** ((alpha - 2.0) / 2.0)


def covariation_system(sys: SiteSystem) -> CovariationSystem:
    """Covariation matrix and right-hand side of the orthogonality system."""
    alpha = sys.alpha
    if sys.is_subgaussian:
        cov = sys.covariance
        factor = 0.5 if alpha == 2.0 else 2.0 ** (-alpha / 2.0) * cov.sill ** ((alpha - 2.0) / 2.0)
        K = factor * sys.site_covariance
        b = factor * cov.matrix(sys.target[None, :], sys.sites)[0]
        return CovariationSystem(K, b)
    return CovariationSystem(sys.site_matrix, sys.site_dual.T @ sys.target_kernel)


def mcl_objective_vector(sys: SiteSystem) -> np.ndarray:
    """``a[i] = [X(t_i), X(t_0)]_alpha``, the coefficients of the covariation objective."""
    alpha = sys.alpha
    if sys.is_subgaussian:
        cov = sys.covariance
        factor = 0.5 if alpha == 2.0 else 2.0 ** (-alpha / 2.0) * cov.sill ** ((alpha - 2.0) / 2.0)
        return factor * cov.matrix(sys.sites, sys.target[None, :])[:, 0]
    g0 = signed_power(sys.target_kernel, alpha - 1.0) * sys.grid.volumes
    return sys.site_kernels.T @ g0


def gradient_scale_alpha(sys: SiteSystem, weights) -> np.ndarray:
    """Gradient of ``sigma^alpha`` of the error ``sum lambda_i X(t_i) - X(t_0)``.

    Component ``j`` equals ``alpha [X(t_j), sum_i lambda_i X(t_i) - X(t_0)]_alpha``.
    """
    lam = np.asarray(weights, dtype=float).reshape(-1)
    if lam.size != sys.n:
        raise ValueError(f"expected {sys.n} weights, got {lam.size}")
    alpha = sys.alpha
    if sys.is_subgaussian:
        pts = np.vstack([sys.sites, sys.target[None, :]])
        omega = sys.covariance.matrix(pts)
        q = np.append(lam, -1.0)
        s = max(q @ omega @ q / 2.0, 0.0)
        if s == 0.0:
            return np.zeros(sys.n)
        return alpha / 2.0 * s ** (alpha / 2.0 - 1.0) * (omega @ q)[:-1]
    F = sys.site_kernels
    r = F @ lam - sys.target_kernel
    mag = np.abs(F) @ np.abs(lam) + np.abs(sys.target_kernel)
    r = _snap(r, mag)
    return alpha * (F.T @ (signed_power(r, alpha - 1.0) * sys.grid.volumes))


def full_dimensionality_check(sys: SiteSystem, threshold: float = 1e-10):
    """Whether the discretized site kernels are linearly independent.

    Returns ``(ok, info)`` where ``info`` holds the singular-value ratio and
    the threshold.  Sub-Gaussian systems are checked on their covariance.
    """
    if sys.is_subgaussian:
        sv = np.linalg.svd(sys.site_covariance, compute_uv=False)
        ratio = float(np.sqrt(sv[-1] / sv[0])) if sv[0] > 0 else 0.0
    else:
        A = sys.site_kernels * (sys.grid.volumes ** (1.0 / sys.alpha))[:, None]
        sv = np.linalg.svd(A, compute_uv=False)
        ratio = float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0
    ok = ratio > threshold
    return ok, {"singular_value_ratio": ratio, "threshold": threshold}


def skewness_of_combination(sys: SiteSystem, weights, grid: DiscreteMeasureGrid | None = None) -> float:
    """Skewness parameter of ``sum_i lambda_i X(t_i)``.

    ``grid`` supplies per-cell skewness (defaults to ``sys.grid``).
    """
    grid = sys.grid if grid is None else grid
    if sys.is_subgaussian:
        raise UnsupportedModelError("skewness diagnostics need a kernel model")
    lam = np.asarray(weights, dtype=float).reshape(-1)
    F = sys.model.kernel(sys.sites, grid.centers).T if grid is not sys.grid else sys.site_kernels
    combo = F @ lam
    denom = float(np.sum(np.abs(combo) ** sys.alpha * grid.volumes))
    if denom == 0.0:
        raise ValueError("skewness is undefined for a combination of zero scale")
    numer = float(np.sum(signed_power(combo, sys.alpha) * grid.skewness * grid.volumes))
    return numer / denom


def sigma_from_flom(samples, alpha: float, p: float) -> float:
    """Scale estimate ``(mean |X|^p)^(1/p) / c_alpha(p)`` for symmetric samples."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("no samples")
    m = float(np.mean(np.abs(x) ** p))
    return m ** (1.0 / p) / moment_constant(alpha, p)


def estimate_covariation_flom(
    x_samples, y_samples, alpha: float, p: float = 1.0, sigma_y=None, beta_y: float = 0.0
) -> float:
    """Fractional-lower-order-moment estimate of ``[X, Y]_alpha``.

    Uses ``E(X Y^<p-1>) / E|Y|^p = [X, Y]_alpha / sigma_Y^alpha``, valid for
    symmetric ``Y`` and ``1 <= p < alpha``.  If ``sigma_y`` is omitted it is
    estimated from ``y_samples`` with :func:`sigma_from_flom` at order
    ``alpha / 2``.

    Raises
    ------
    UnsupportedModelError
        For skewed ``Y`` (``beta_y != 0``), where the moment ratio picks up
        a correction term this estimator does not model.
    """
    if beta_y != 0.0:
        raise UnsupportedModelError(f"FLOM covariation is implemented for symmetric Y only (beta_y={beta_y})")
    x = np.asarray(x_samples, dtype=float).reshape(-1)
    y = np.asarray(y_samples, dtype=float).reshape(-1)
    if x.size == 0 or y.size == 0:
        raise ValueError("no samples")
    if x.size != y.size:
        raise ValueError("x and y samples differ in length")
    if not (1.0 <= p < alpha):
        raise ValueError(f"p must lie in [1, alpha={alpha}), got {p}")
    if sigma_y is None:
        sigma_y = sigma_from_flom(y, alpha, alpha / 2.0)
    if p == 1.0:
        mixed = np.mean(x * np.sign(y))
    else:
        mixed = np.mean(x * signed_power(y, p - 1.0))
    ratio = mixed / np.mean(np.abs(y) ** p)
    return float(ratio * sigma_y**alpha)
