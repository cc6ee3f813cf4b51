"""Linear predictors for stable random fields and sub-Gaussian conditional simulation.

Four weight solvers share one interface, ``solver(system) -> PredictorWeights``:

``lsl_weights``
    least scale: minimizes the scale of the prediction error (convex).
``col_weights``
    covariation orthogonal: error has zero covariation on every observation.
``mcl_weights``
    maximal covariation with the target at the target's own scale.
``ml_weights_subgaussian``
    maximum likelihood for (sub-)Gaussian fields via a triangular factor.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .covariation import (
    SiteSystem,
    _snap,
    covariation_system,
    gradient_scale_alpha,
    mcl_objective_vector,
)
from .exceptions import (
    ConvergenceError,
    DegenerateSystemError,
    FactorizationError,
    NonUniqueError,
    SingularSystemError,
    UnsupportedModelError,
)
from .field_models import FieldRealization, as_points, covariance_factor
from .stable_core import as_generator, sample_subgaussian_A, signed_power

__all__ = [
    "METHODS",
    "ConditionalSimulator",
    "PredictionProblem",
    "PredictorWeights",
    "col_weights",
    "conditional_simulate_subgaussian",
    "lsl_weights",
    "mcl_weights",
    "ml_weights_subgaussian",
    "predict",
    "solve_weights",
    "weight_field",
    "weight_matrix",
    "write_weights_csv",
]

METHODS = ("lsl", "col", "mcl", "ml")

LSL_TOL = 1e-9
LSL_MAXITER = 500
COND_LIMIT = 1e12


@dataclass
class PredictorWeights:
    """Weights ``lambda_1..lambda_n`` of a linear predictor plus diagnostics.

    ``residual`` is the first-order residual of the method: the gradient
    norm for LSL, ``|K lambda - b|`` for COL and ML, the stationarity
    residual for MCL.  ``error_scale`` is the scale of the prediction error
    ``X_hat(t_0) - X(t_0)`` where it is computed.
    """

    weights: np.ndarray
    method: str
    target: np.ndarray | None = None
    residual: float = 0.0
    error_scale: float | None = None
    constraint_residual: float | None = None
    iterations: int = 0
    converged: bool = True
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)

    def predict(self, observed) -> float:
        return predict(self, observed)


@dataclass
class PredictionProblem:
    """A :class:`SiteSystem` together with the observed values at its sites."""

    system: SiteSystem
    observed: np.ndarray

    def __post_init__(self):
        self.observed = np.asarray(self.observed, dtype=float).reshape(-1)
        if self.observed.size != self.system.n:
            raise ValueError(f"expected {self.system.n} observations, got {self.observed.size}")

    def weights(self, method: str, **kwargs) -> PredictorWeights:
        return solve_weights(self.system, method, **kwargs)

    def predict(self, method: str, **kwargs) -> float:
        return predict(self.weights(method, **kwargs), self.observed)


def predict(weights: PredictorWeights, observed) -> float:
    """``sum_i lambda_i x(t_i)``."""
    lam = weights.weights if isinstance(weights, PredictorWeights) else np.asarray(weights, dtype=float)
    x = np.asarray(observed, dtype=float).reshape(-1)
    if x.size != lam.size:
        raise ValueError(f"{lam.size} weights but {x.size} observed values")
    return float(lam @ x)


def _basis(sys: SiteSystem, idx: int, method: str) -> PredictorWeights:
    lam = np.zeros(sys.n)
    lam[idx] = 1.0
    return PredictorWeights(
        lam,
        method,
        sys.target.copy(),
        error_scale=0.0 if method == "lsl" else None,
        constraint_residual=0.0 if method == "mcl" else None,
        extra={"exact_site": idx},
    )


def _require_full_dimension(sys: SiteSystem):
    ok, info = sys.full_dimension
    if not ok:
        raise DegenerateSystemError(
            f"site kernels are linearly dependent (singular value ratio "
            f"{info['singular_value_ratio']:.2e} <= {info['threshold']:.0e})"
        )


# ---------------------------------------------------------------------------
# COL
# ---------------------------------------------------------------------------


def _solve_checked(K, b):
    cond = float(np.linalg.cond(K))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystemError(f"covariation matrix is singular (condition number {cond:.3e})", cond)
    return np.linalg.solve(K, b), cond


def col_weights(sys: SiteSystem) -> PredictorWeights:
    """Solve ``K lambda = b`` with ``K[j, i] = [X(t_i), X(t_j)]_alpha``.

    Raises
    ------
    SingularSystemError
        When ``K`` is numerically singular; no pseudo-inverse fallback.
    """
    idx = sys.coincident_site()
    if idx is not None:
        return _basis(sys, idx, "col")
    cs = covariation_system(sys)
    lam, cond = _solve_checked(cs.K, cs.b)
    resid = float(np.linalg.norm(cs.K @ lam - cs.b))
    return PredictorWeights(lam, "col", sys.target.copy(), residual=resid, extra={"condition": cond})


# ---------------------------------------------------------------------------
# Convex minimization on the discretized L^alpha norm
# ---------------------------------------------------------------------------


def _merge_cells(F, v, offset):
    # Cells with identical kernel rows contribute identical residuals; merging
    # them leaves J unchanged and shrinks indicator-type problems drastically.
    rows = np.column_stack([F, offset])
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    if uniq.shape[0] == rows.shape[0]:
        return F, v, offset
    vol = np.bincount(inverse.ravel(), weights=v, minlength=uniq.shape[0])
    keep = vol > 0
    return uniq[keep, :-1], vol[keep], uniq[keep, -1]


def _minimize_lalpha(F, v, alpha, offset, linear, x0, tol, maxiter, gscale=None, pin_tol=1e-7):
    """Active-set Newton for ``J(x) = sum v |F x - offset|^alpha - alpha <x, linear>``.

    For alpha < 2 the curvature of ``|r|^alpha`` is unbounded at ``r = 0``
    and minimizers typically annihilate whole groups of cells.  Cells whose
    residual is below ``pin_tol * max|r|`` are therefore pinned: ``x`` is
    projected so their residual is zero to rounding, and the Newton step is
    taken in the null space of their rows.  A projection that raises ``J``
    is discarded and the step stays unrestricted.  If the reduced gradient vanishes
    while the full one does not, the pins are released with a tighter
    threshold.  Steps are backtracked until Armijo holds.

    Stops when ``|grad| <= tol * scale`` with ``scale = 1 + |J|`` unless
    ``gscale`` is given.  Returns ``(x, J, grad_norm, iterations, converged)``.
    """
    F, v, offset = _merge_cells(np.asarray(F, float), np.asarray(v, float), np.asarray(offset, float))
    n = F.shape[1]
    abs_F = np.abs(F)
    abs_off = np.abs(offset)
    live = np.any(F != 0, axis=1)

    def evaluate(x):
        r = F @ x - offset
        r = _snap(r, abs_F @ np.abs(x) + abs_off)
        J = float(np.sum(v * np.abs(r) ** alpha) - alpha * (x @ linear))
        return r, J

    def gradient(r):
        return alpha * (F.T @ (v * signed_power(r, alpha - 1.0))) - alpha * linear

    def line_search(x, J, g, direction):
        slope = float(g @ direction)
        if slope >= 0:
            return None
        flat = 16.0 * np.finfo(float).eps * (abs(J) + float(np.sum(v * np.abs(F @ x - offset) ** alpha)))
        gn = float(np.linalg.norm(g))
        t = 1.0
        while t > 1e-20:
            x_new = x + t * direction
            r_new, J_new = evaluate(x_new)
            if J_new <= J + 1e-4 * t * slope:
                return x_new, r_new, J_new
            # J is flat to rounding near the minimizer; judge by the gradient
            if J_new <= J + flat and np.linalg.norm(gradient(r_new)) < 0.5 * gn:
                return x_new, r_new, J_new
            t *= 0.5
        return None

    x = np.array(x0, dtype=float)
    r, J = evaluate(x)
    g = gradient(r)
    it = 0
    stalled = False
    for it in range(1, maxiter + 1):
        gnorm = float(np.linalg.norm(g))
        scale = (1.0 + abs(J)) if gscale is None else gscale
        if gnorm <= tol * scale:
            return x, J, gnorm, it - 1, True
        ar = np.abs(r)
        rmax = float(ar.max(initial=0.0))
        pinned = live & (ar <= pin_tol * rmax)
        released = np.zeros_like(pinned)
        basis = None
        free = np.ones_like(live)
        flat = 16.0 * np.finfo(float).eps * (abs(J) + float(np.sum(v * ar**alpha)))
        # project onto the pinned face; if that raises J, retry with the half
        # of the pins having the smallest residuals
        cand = np.flatnonzero(pinned)
        cand = cand[np.argsort(ar[cand], kind="stable")]
        accepted = None
        while cand.size:
            Fp, op = F[cand], offset[cand]
            x_proj = x - np.linalg.lstsq(Fp, Fp @ x - op, rcond=None)[0]
            r_proj, J_proj = evaluate(x_proj)
            if J_proj <= J + flat:
                accepted = cand
                break
            cand = cand[: cand.size // 2]
        pinned = np.zeros_like(pinned)
        if accepted is not None:
            pinned[accepted] = True
            x, r, J = x_proj, r_proj, J_proj
            g = gradient(r)
            gnorm = float(np.linalg.norm(g))
            if gnorm <= tol * scale:
                return x, J, gnorm, it - 1, True
            # restrict to the face only once x lies on it; a cell whose
            # kernel is merely tiny fails the projection and stays free
            _, s, vt = np.linalg.svd(Fp, full_matrices=True)
            rank = int(np.sum(s > 1e-12 * s[0]))
            basis = vt[rank:].T
            free = ~pinned
        if basis is not None:
            gr = basis.T @ g
            if basis.shape[1] == 0 or stalled or np.linalg.norm(gr) <= 0.1 * tol * scale:
                # stationary or stuck on the face but not optimal overall.
                # Pins carrying a multiplier cannot hold at the optimum
                # (alpha > 1 leaves no kink at r = 0), so free those for this
                # step; a cell that should stay off zero then fails the
                # projection test.  Tighten the threshold if no pin stands out.
                g_rest = gradient(np.where(pinned, 0.0, r))
                mu = np.linalg.lstsq(F[pinned].T, g_rest, rcond=None)[0]
                drop = np.abs(mu) * np.linalg.norm(F[pinned], axis=1) > 0.1 * tol * scale
                if drop.any() and not drop.all():
                    released[np.flatnonzero(pinned)[drop]] = True
                else:
                    pin_tol *= 1e-3
                basis = None
                free = ~(pinned & ~released)
        # a residual is only known to its rounding level; cap the curvature there
        floor = np.maximum(4.0 * np.finfo(float).eps * (abs_F @ np.abs(x) + abs_off), max(1e-13 * rmax, 1e-300))
        w = np.where(free, v * np.maximum(np.abs(r), floor) ** (alpha - 2.0), 0.0)
        H = alpha * (alpha - 1.0) * (F.T * w) @ F
        H[np.diag_indices(n)] += 1e-14 * max(float(np.trace(H)) / n, 1e-300)
        if basis is None:
            Hr, gr, Z = H, g, None
        else:
            Hr, Z = basis.T @ H @ basis, basis
        try:
            dr = -linalg.solve(Hr, gr, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            dr = -gr
        d = dr if Z is None else Z @ dr
        step = line_search(x, J, g, d)
        if step is None:
            step = line_search(x, J, g, -g)
        if step is None:
            # no representable decrease left; x is as good as the arithmetic allows
            return x, J, gnorm, it, gnorm <= math.sqrt(tol) * scale
        stalled = basis is not None and step[2] >= J - flat
        x, r, J = step
        g = gradient(r)
    gnorm = float(np.linalg.norm(g))
    scale = (1.0 + abs(J)) if gscale is None else gscale
    return x, J, gnorm, maxiter, gnorm <= tol * scale


# ---------------------------------------------------------------------------
# LSL
# ---------------------------------------------------------------------------


def _lsl_quadratic(sys: SiteSystem, x0, tol, maxiter):
    # sigma^alpha of the error = (q' Omega q / 2)^(alpha/2), q = (lambda, -1)
    alpha = sys.alpha
    n = sys.n
    pts = np.vstack([sys.sites, sys.target[None, :]])
    omega = sys.covariance.matrix(pts)
    O = omega[:n, :n]
    c = omega[:n, n]
    c00 = omega[n, n]

    def objective(lam):
        s = max((lam @ O @ lam - 2.0 * lam @ c + c00) / 2.0, 0.0)
        return s, s ** (alpha / 2.0)

    def grad(lam, s):
        u = O @ lam - c
        return alpha / 2.0 * s ** (alpha / 2.0 - 1.0) * u if s > 0 else np.zeros(n)

    lam = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    s, J = objective(lam)
    it = 0
    converged = False
    for it in range(1, maxiter + 1):
        u = O @ lam - c
        g = alpha / 2.0 * s ** (alpha / 2.0 - 1.0) * u if s > 0 else np.zeros(n)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol * (1.0 + J):
            converged = True
            it -= 1
            break
        H = alpha / 2.0 * s ** (alpha / 2.0 - 1.0) * O
        H += alpha / 2.0 * (alpha / 2.0 - 1.0) * s ** (alpha / 2.0 - 2.0) * np.outer(u, u)
        try:
            d = -linalg.solve(H, g, assume_a="sym")
        except linalg.LinAlgError:
            d = -g
        if g @ d >= 0:
            d = -g
        flat = 16.0 * np.finfo(float).eps * (J + c00 ** (alpha / 2.0))
        t = 1.0
        while t > 1e-20:
            s_new, J_new = objective(lam + t * d)
            if J_new <= J + 1e-4 * t * (g @ d):
                break
            # J flat to rounding: accept if the gradient shrinks
            if J_new <= J + flat and np.linalg.norm(grad(lam + t * d, s_new)) < 0.5 * gnorm:
                break
            t *= 0.5
        else:
            break
        lam = lam + t * d
        s, J = s_new, J_new
    u = O @ lam - c
    g = alpha / 2.0 * s ** (alpha / 2.0 - 1.0) * u if s > 0 else np.zeros(n)
    gnorm = float(np.linalg.norm(g))
    converged = converged or gnorm <= tol * (1.0 + J)
    return lam, J, gnorm, it, converged


def lsl_weights(sys: SiteSystem, x0=None, tol: float = LSL_TOL, maxiter: int = LSL_MAXITER, strict=True):
    """Minimize the scale of ``sum_i lambda_i X(t_i) - X(t_0)``.

    The objective ``sigma^alpha`` is convex; Newton iterations run from the
    COL solution (or ``x0``) until the gradient norm is at most
    ``tol * (1 + sigma^alpha)``.  Sub-Gaussian systems minimize the
    quadratic-form expression of the scale.

    Raises
    ------
    DegenerateSystemError
        Site kernels are linearly dependent.
    ConvergenceError
        With ``strict=True``, if the tolerance is not met.
    """
    idx = sys.coincident_site()
    if idx is not None:
        return _basis(sys, idx, "lsl")
    _require_full_dimension(sys)
    if sys.is_subgaussian:
        lam, J, gnorm, it, ok = _lsl_quadratic(sys, x0, tol, maxiter)
    else:
        if x0 is None:
            try:
                x0 = col_weights(sys).weights
            except SingularSystemError:
                x0 = np.zeros(sys.n)
        lam, J, gnorm, it, ok = _minimize_lalpha(
            sys.site_kernels,
            sys.grid.volumes,
            sys.alpha,
            sys.target_kernel,
            np.zeros(sys.n),
            x0,
            tol,
            maxiter,
        )
        # certificate from the covariation form of the gradient
        gnorm = float(np.linalg.norm(gradient_scale_alpha(sys, lam)))
        ok = ok or gnorm <= tol * (1.0 + J)
    if strict and not ok:
        raise ConvergenceError(
            f"LSL solver stopped after {it} iterations with gradient norm {gnorm:.3e}", gnorm, it
        )
    J = max(J, 0.0)
    return PredictorWeights(
        lam,
        "lsl",
        sys.target.copy(),
        residual=gnorm,
        error_scale=J ** (1.0 / sys.alpha),
        iterations=it,
        converged=ok,
    )


# ---------------------------------------------------------------------------
# MCL
# ---------------------------------------------------------------------------


def _scale_of_sites(sys: SiteSystem, lam) -> float:
    if sys.is_subgaussian:
        return math.sqrt(max(lam @ sys.site_covariance @ lam, 0.0) / 2.0)
    combo = sys.site_kernels @ lam
    return float(np.sum(np.abs(combo) ** sys.alpha * sys.grid.volumes)) ** (1.0 / sys.alpha)


def _target_scale(sys: SiteSystem) -> float:
    if sys.is_subgaussian:
        return math.sqrt(sys.covariance.sill / 2.0)
    return float(np.sum(np.abs(sys.target_kernel) ** sys.alpha * sys.grid.volumes)) ** (1.0 / sys.alpha)


def mcl_weights(sys: SiteSystem, tol: float = 1e-11, maxiter: int = LSL_MAXITER, strict=True):
    """Maximize ``sum_i lambda_i [X(t_i), X(t_0)]_alpha`` at matching scale.

    The scale ``sigma(lambda)`` of ``sum lambda_i X(t_i)`` is a norm, so the
    maximizer lies on the boundary of the norm ball and its direction is the
    unique minimizer of the convex function
    ``sigma(x)^alpha / alpha - <x, a>`` (stationarity there is the Lagrange
    condition).  That minimizer is computed by Newton iterations and then
    rescaled onto ``sigma(lambda) = sigma(X(t_0))``; the sign makes the
    objective positive.  For sub-Gaussian fields the direction is
    ``Sigma^{-1} a`` in closed form.

    Raises
    ------
    NonUniqueError
        If every covariation ``[X(t_i), X(t_0)]_alpha`` vanishes.
    """
    idx = sys.coincident_site()
    if idx is not None:
        return _basis(sys, idx, "mcl")
    _require_full_dimension(sys)
    a = mcl_objective_vector(sys)
    a_norm = float(np.linalg.norm(a))
    if a_norm == 0.0 or a_norm <= 1e-14 * float(np.abs(a).max(initial=0.0) + 1e-300):
        raise NonUniqueError("all covariations with the target vanish; the MCL predictor is not unique")
    it = 0
    ok = True
    if sys.is_subgaussian:
        direction = linalg.solve(sys.site_covariance, a, assume_a="pos")
        stat = 0.0
    else:
        alpha = sys.alpha
        F = sys.site_kernels
        v = sys.grid.volumes
        try:
            d0 = col_weights(sys).weights
        except SingularSystemError:
            d0 = a / a_norm
        S = float(np.sum(v * np.abs(F @ d0) ** alpha))
        proj = float(d0 @ a)
        if proj <= 0 or S == 0:
            d0 = a / a_norm
            S = float(np.sum(v * np.abs(F @ d0) ** alpha))
            proj = float(d0 @ a)
        x0 = d0 * (proj / S) ** (1.0 / (alpha - 1.0))
        direction, _, gnorm, it, ok = _minimize_lalpha(
            F, v, alpha, np.zeros(F.shape[0]), a, x0, tol, maxiter, gscale=alpha * a_norm
        )
        stat = gnorm / (alpha * a_norm)
    if float(direction @ a) < 0:
        direction = -direction
    s_dir = _scale_of_sites(sys, direction)
    s0 = _target_scale(sys)
    lam = direction * (s0 / s_dir)
    cres = abs(_scale_of_sites(sys, lam) - s0) / s0
    if strict and not ok:
        raise ConvergenceError(f"MCL solver stopped after {it} iterations (residual {stat:.3e})", stat, it)
    return PredictorWeights(
        lam,
        "mcl",
        sys.target.copy(),
        residual=stat,
        constraint_residual=cres,
        iterations=it,
        converged=ok,
        extra={"objective": float(lam @ a)},
    )


# ---------------------------------------------------------------------------
# ML
# ---------------------------------------------------------------------------


def ml_weights_subgaussian(sys: SiteSystem, jitter: float = 1e-10) -> PredictorWeights:
    """Maximum-likelihood weights from the lower triangular ``A`` with ``A Omega A' = 2I``.

    ``Omega`` is the Gaussian-part covariance over ``(t_1..t_n, t_0)``;
    ``A = B^{-1}`` for the Cholesky factor ``Omega = 2 B B'`` and
    ``lambda_i = -A[n, i] / A[n, n]``.
    """
    if not sys.is_subgaussian:
        raise UnsupportedModelError("the ML predictor is only available for (sub-)Gaussian fields")
    idx = sys.coincident_site()
    if idx is not None:
        return _basis(sys, idx, "ml")
    n = sys.n
    pts = np.vstack([sys.sites, sys.target[None, :]])
    omega = sys.covariance.matrix(pts)
    try:
        B = linalg.cholesky(omega / 2.0, lower=True)
    except linalg.LinAlgError:
        try:
            B = linalg.cholesky(omega / 2.0 + jitter * sys.covariance.sill * np.eye(n + 1), lower=True)
        except linalg.LinAlgError:
            lam_min = float(linalg.eigvalsh(omega)[0])
            raise FactorizationError(
                f"joint covariance is not positive definite (min eigenvalue {lam_min:.3e})", lam_min
            ) from None
    A = linalg.solve_triangular(B, np.eye(n + 1), lower=True)
    lam = -A[n, :n] / A[n, n]
    cs = covariation_system(sys)
    resid = float(np.linalg.norm(cs.K @ lam - cs.b))
    return PredictorWeights(lam, "ml", sys.target.copy(), residual=resid)


# ---------------------------------------------------------------------------
# Dispatch and weight fields
# ---------------------------------------------------------------------------

_SOLVERS = {
    "lsl": lsl_weights,
    "col": col_weights,
    "mcl": mcl_weights,
    "ml": ml_weights_subgaussian,
}


def solve_weights(sys: SiteSystem, method: str, **kwargs) -> PredictorWeights:
    """Weights of ``method`` (one of ``lsl``, ``col``, ``mcl``, ``ml``)."""
    try:
        solver = _SOLVERS[method.lower()]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}") from None
    return solver(sys, **kwargs)


def weight_field(template: SiteSystem, targets, method: str, **kwargs):
    """Weights at every target in ``targets`` (list of :class:`PredictorWeights`).

    Site-level quantities are computed once.  LSL solves are warm-started
    from the previous target's solution, so pass targets in path order.
    """
    targets = as_points(targets, template.model.dim)
    method = method.lower()
    template.warm()
    out = []
    prev = None
    for t in targets:
        sys = template.with_target(t)
        if method == "lsl" and prev is not None and "x0" not in kwargs:
            res = lsl_weights(sys, x0=prev, **kwargs)
        else:
            res = solve_weights(sys, method, **kwargs)
        if method == "lsl" and "exact_site" not in res.extra:
            prev = res.weights
        out.append(res)
    return out


def weight_matrix(results) -> np.ndarray:
    """Stack a list of :class:`PredictorWeights` into an ``(m, n)`` array."""
    return np.vstack([r.weights for r in results])


def write_weights_csv(results, path=None) -> str:
    """``target_x[,target_y],lambda_1..lambda_n,method,residual`` rows."""
    results = list(results)
    if not results:
        raise ValueError("no weights to write")
    d = results[0].target.size
    n = results[0].weights.size
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["target_x", "target_y"][:d] + [f"lambda_{i + 1}" for i in range(n)] + ["method", "residual"])
    for r in results:
        writer.writerow(
            [repr(float(c)) for c in r.target] + [repr(float(w)) for w in r.weights] + [r.method, repr(float(r.residual))]
        )
    text = buf.getvalue()
    if path is not None:
        with open(path, "x", encoding="utf-8") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# Conditional simulation
# ---------------------------------------------------------------------------


class ConditionalSimulator:
    """Conditional simulation of a sub-Gaussian field at fixed output sites.

    The factorization and the simple-kriging weights are computed once;
    :meth:`draw` then costs one unconditional Gaussian draw.  Output sites
    that coincide with a conditioning site return the observed value.
    """

    def __init__(self, sys: SiteSystem, out_sites, jitter=1e-10, method="auto"):
        if not sys.is_subgaussian:
            raise UnsupportedModelError("conditional simulation needs a (sub-)Gaussian model")
        self.system = sys
        self.alpha = sys.alpha
        out = as_points(out_sites, sys.model.dim)
        self.out_sites = out
        diff = np.abs(out[:, None, :] - sys.sites[None, :, :]).max(axis=-1)
        hit = diff <= 1e-12
        self.coincident = np.where(hit.any(axis=1), hit.argmax(axis=1), -1)
        free = self.coincident < 0
        self.free = free
        cov = sys.covariance
        joint = np.vstack([sys.sites, out[free]])
        self.factor = covariance_factor(cov, joint, jitter, method)
        # simple kriging weights of the free output sites on the conditioning sites
        c_out = cov.matrix(out[free], sys.sites)
        self.kriging = linalg.solve(sys.site_covariance, c_out.T, assume_a="pos").T

    def draw(self, observed, rng, a=None) -> FieldRealization:
        """One conditional realization given ``observed`` at the sites.

        ``a`` fixes the mixing variable (e.g. a retained draw); otherwise it
        is drawn from its law.
        """
        gen = as_generator(rng)
        x = np.asarray(observed, dtype=float).reshape(-1)
        n = self.system.n
        if x.size != n:
            raise ValueError(f"expected {n} observations, got {x.size}")
        if a is None:
            a = 1.0 if self.alpha == 2.0 else sample_subgaussian_A(self.alpha, gen)
        root = math.sqrt(a)
        g_uncond = self.factor @ gen.standard_normal(self.factor.shape[1])
        g_sites, g_free = g_uncond[:n], g_uncond[n:]
        g_obs = x / root
        values = np.empty(self.out_sites.shape[0])
        values[self.free] = root * (g_free + self.kriging @ (g_obs - g_sites))
        values[~self.free] = x[self.coincident[~self.free]]
        prov = {"model": "conditional-sub-gaussian", "alpha": self.alpha}
        return FieldRealization(self.out_sites, values, prov, a=a)


def conditional_simulate_subgaussian(problem: PredictionProblem, out_sites, rng, a=None, **kwargs) -> FieldRealization:
    """Sub-Gaussian realization at ``out_sites`` honouring the observations.

    Draws A (unless given), simulates the Gaussian part conditionally on
    ``G(t_i) = x(t_i) / A**0.5`` by kriging the residuals of an
    unconditional draw, and rescales by ``A**0.5``.
    """
    sim = ConditionalSimulator(problem.system, out_sites, **kwargs)
    return sim.draw(problem.observed, rng, a=a)
