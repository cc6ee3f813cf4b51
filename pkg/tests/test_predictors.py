import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import cosine, levy_lsl_one_site, levy_mcl_one_site, simple_kriging_weights
from stablefield.covariation import (
    SiteSystem,
    covariation_system,
    mcl_objective_vector,
    scale_of_combination,
    sigma_from_flom,
)
from stablefield.exceptions import (
    ConvergenceError,
    DegenerateSystemError,
    FactorizationError,
    NonUniqueError,
    SingularSystemError,
    UnsupportedModelError,
)
from stablefield.field_models import (
    CovarianceModel,
    DiscreteMeasureGrid,
    LevySheet,
    MovingAverage,
    OrnsteinUhlenbeck,
    SubGaussian,
    bump_kernel,
    grid_for_model,
)
from stablefield.predictors import (
    ConditionalSimulator,
    PredictionProblem,
    PredictorWeights,
    col_weights,
    conditional_simulate_subgaussian,
    lsl_weights,
    mcl_weights,
    ml_weights_subgaussian,
    predict,
    solve_weights,
    weight_field,
    weight_matrix,
    write_weights_csv,
)
from stablefield.stable_core import RngStream

UNIT = DiscreteMeasureGrid.regular([0], [1], 1000)
SITES9 = [(x, y) for x in (0.2, 0.5, 0.8) for y in (0.2, 0.5, 0.8)]
PAPER_COV = CovarianceModel(7.0, 0.1)


def levy1d(alpha, sites=(1.0,), target=0.75):
    return SiteSystem(LevySheet(alpha), np.reshape(sites, (-1, 1)), [target], UNIT)


def sheet(alpha=1.5, sites=((0.2, 0.4), (0.5, 0.5), (0.9, 0.3)), target=(0.6, 0.7), cells=30):
    return SiteSystem(LevySheet(alpha, 2), sites, target, DiscreteMeasureGrid.regular([0, 0], [1, 1], cells))


def subgauss(alpha=1.5, sites=SITES9, target=(0.35, 0.6), cov=PAPER_COV):
    return SiteSystem(SubGaussian(alpha, cov), sites, target)


def moving_average(alpha, sites=(0.4, 0.55, 0.7), target=0.6):
    m = MovingAverage(alpha, bump_kernel(0.3), 0.3)
    g = grid_for_model(m, np.reshape(sites + (target,), (-1, 1)), 600)
    return SiteSystem(m, np.reshape(sites, (-1, 1)), [target], g)


def error_scale_alpha(sys, lam):
    return scale_of_combination(sys, np.append(-1.0, lam)) ** sys.alpha


class TestPredict:
    def test_examples(self):
        assert predict(PredictorWeights([0.75], "col"), [2.0]) == 1.5
        assert predict([0.0, 1.0, 0.0], [4.0, 5.0, 6.0]) == 5.0
        assert predict(np.zeros(3), [4.0, 5.0, 6.0]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            predict([1.0, 2.0], [1.0])

    def test_problem(self):
        prob = PredictionProblem(levy1d(1.5), [2.0])
        assert prob.predict("col") == pytest.approx(1.5)
        with pytest.raises(ValueError):
            PredictionProblem(levy1d(1.5), [1.0, 2.0])

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="unknown method"):
            solve_weights(levy1d(1.5), "kriging")


class TestCol:
    def test_levy_example(self):
        w = col_weights(levy1d(1.5))
        assert abs(w.weights[0] - 0.75) <= 1e-12

    @pytest.mark.parametrize("alpha", [1.3, 1.8])
    def test_ornstein_uhlenbeck(self, alpha):
        rate = 2.0
        sites = [0.1, 0.3, 0.45, 0.7]
        t0 = 0.9
        m = OrnsteinUhlenbeck(alpha, rate)
        g = grid_for_model(m, np.reshape(sites + [t0], (-1, 1)), 4000)
        w = col_weights(SiteSystem(m, np.reshape(sites, (-1, 1)), [t0], g)).weights
        expected = np.zeros(4)
        expected[-1] = math.exp(-rate * (t0 - sites[-1]))
        np.testing.assert_allclose(w, expected, atol=1e-8)

    def test_residual(self):
        for sys in (sheet(), moving_average(1.6), subgauss()):
            w = col_weights(sys)
            b = covariation_system(sys).b
            assert w.residual <= 1e-10 * np.linalg.norm(b)

    def test_gaussian_matches_kriging(self):
        sys = subgauss(alpha=2.0)
        w_ref, C, c = simple_kriging_weights(SITES9, (0.35, 0.6), 7.0, 0.1)
        cs = covariation_system(sys)
        np.testing.assert_allclose(cs.K, 0.5 * C, rtol=1e-12)
        np.testing.assert_allclose(cs.b, 0.5 * c, rtol=1e-12)
        np.testing.assert_allclose(col_weights(sys).weights, w_ref, atol=1e-10)

    def test_singular(self):
        # two sites in the same cell produce identical kernels, so K is singular
        g = DiscreteMeasureGrid.regular([0], [1], 4)
        sys = SiteSystem(LevySheet(1.5), [[0.3], [0.35]], [0.5], g)
        with pytest.raises(SingularSystemError) as exc:
            col_weights(sys)
        assert exc.value.condition > 1e12

    def test_speed_50x50(self):
        sys = subgauss()
        xs = np.arange(50) / 50
        targets = np.array([(x, y) for x in xs for y in xs])
        start = time.perf_counter()
        res = weight_field(sys, targets, "col")
        assert time.perf_counter() - start < 5.0
        assert len(res) == 2500


class TestLsl:
    @pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
    def test_levy_example(self, alpha):
        w = lsl_weights(levy1d(alpha))
        assert w.weights[0] == pytest.approx(levy_lsl_one_site(alpha), abs=1e-6)
        assert levy_lsl_one_site(1.5) == pytest.approx(0.9)

    def test_certificate(self):
        for sys in (sheet(1.3), sheet(1.7), moving_average(1.5), levy1d(1.5, (0.2, 0.5, 1.0), 0.8)):
            w = lsl_weights(sys)
            assert w.converged
            assert w.residual <= 1e-9 * (1 + w.error_scale**sys.alpha)

    def test_beats_competitors(self):
        sys = sheet()
        lsl = lsl_weights(sys)
        best = error_scale_alpha(sys, lsl.weights)
        assert best == pytest.approx(lsl.error_scale**1.5, rel=1e-9)
        rng = np.random.default_rng(0)
        others = [col_weights(sys).weights, mcl_weights(sys).weights]
        others += [lsl.weights + rng.normal(scale=0.1, size=3) for _ in range(10)]
        for lam in others:
            assert best <= error_scale_alpha(sys, lam) + 1e-12

    def test_strictly_better_than_col_in_example(self):
        sys = levy1d(1.5)
        assert error_scale_alpha(sys, lsl_weights(sys).weights) < error_scale_alpha(sys, [0.75]) - 1e-4

    def test_gaussian_equals_col(self):
        sys = subgauss(alpha=2.0)
        np.testing.assert_allclose(lsl_weights(sys).weights, col_weights(sys).weights, atol=1e-8)

    def test_degenerate(self):
        g = DiscreteMeasureGrid.regular([0], [1], 4)
        with pytest.raises(DegenerateSystemError):
            lsl_weights(SiteSystem(LevySheet(1.5), [[0.3], [0.35]], [0.5], g))

    def test_nonconvergence(self):
        sys = sheet(1.2)
        with pytest.raises(ConvergenceError) as exc:
            lsl_weights(sys, x0=np.array([5.0, -3.0, 2.0]), maxiter=1)
        assert exc.value.iterations == 1
        w = lsl_weights(sys, x0=np.array([5.0, -3.0, 2.0]), maxiter=1, strict=False)
        assert not w.converged


class TestMcl:
    def test_levy_example(self):
        w = mcl_weights(levy1d(1.5))
        assert w.weights[0] == pytest.approx(levy_mcl_one_site(1.5), abs=1e-6)
        assert levy_mcl_one_site(1.5) == pytest.approx(0.8255, abs=1e-4)

    @pytest.mark.parametrize("make", [sheet, lambda: moving_average(1.4), subgauss])
    def test_feasibility_and_dominance(self, make):
        sys = make()
        w = mcl_weights(sys)
        assert w.constraint_residual <= 1e-8
        a = mcl_objective_vector(sys)
        col = col_weights(sys).weights
        s0 = scale_of_combination(sys, np.append(1.0, np.zeros(sys.n)))
        col_scaled = col * s0 / scale_of_combination(sys, np.append(0.0, col))
        assert w.weights @ a >= abs(col_scaled @ a) - 1e-12
        assert w.weights @ a > 0

    def test_gaussian_proportional_to_kriging(self):
        sys = subgauss(alpha=2.0)
        w_ref, _, _ = simple_kriging_weights(SITES9, (0.35, 0.6), 7.0, 0.1)
        assert cosine(mcl_weights(sys).weights, w_ref) >= 1 - 1e-6

    def test_kernel_alpha2_proportional_to_col(self):
        # the Newton route, not the closed form
        sys = moving_average(2.0)
        assert cosine(mcl_weights(sys).weights, col_weights(sys).weights) >= 1 - 1e-6

    def test_vanishing_covariations(self):
        m = MovingAverage(1.5, bump_kernel(0.1), 0.1)
        g = DiscreteMeasureGrid.regular([0], [1], 500)
        sys = SiteSystem(m, [[0.2], [0.3]], [0.8], g)
        with pytest.raises(NonUniqueError):
            mcl_weights(sys)


class TestMl:
    def test_single_site(self):
        sys = subgauss(sites=[(0.3, 0.3)], target=(0.35, 0.32))
        expected = PAPER_COV(math.dist((0.3, 0.3), (0.35, 0.32))) / 7.0
        assert ml_weights_subgaussian(sys).weights[0] == pytest.approx(expected, rel=1e-12)
        assert col_weights(sys).weights[0] == pytest.approx(expected, rel=1e-12)

    def test_equals_col_and_lsl(self):
        sys = subgauss()
        ml = ml_weights_subgaussian(sys).weights
        np.testing.assert_allclose(ml, col_weights(sys).weights, atol=1e-8)
        np.testing.assert_allclose(ml, lsl_weights(sys).weights, atol=1e-8)

    def test_kernel_model_rejected(self):
        with pytest.raises(UnsupportedModelError):
            ml_weights_subgaussian(levy1d(1.5))

    def test_factorization_failure(self):
        # densely packed points under a long-range Gaussian covariance
        pts = [(x, 0.0) for x in np.linspace(0, 0.3, 80)]
        sys = subgauss(sites=pts, target=(0.31, 0.0), cov=CovarianceModel(1.0, 1.0))
        with pytest.raises(FactorizationError):
            ml_weights_subgaussian(sys, jitter=0.0)


class TestExactness:
    @pytest.mark.parametrize("method", ["lsl", "col", "mcl"])
    def test_kernel_models(self, method):
        for i, site in enumerate([(0.2, 0.4), (0.5, 0.5), (0.9, 0.3)]):
            w = solve_weights(sheet(target=site), method).weights
            np.testing.assert_array_equal(w, np.eye(3)[i])

    @pytest.mark.parametrize("method", ["lsl", "col", "mcl", "ml"])
    def test_subgaussian(self, method):
        w = solve_weights(subgauss(target=SITES9[4]), method)
        np.testing.assert_array_equal(w.weights, np.eye(9)[4])

    def test_lsl_objective_zero(self):
        assert lsl_weights(sheet(target=(0.5, 0.5))).error_scale == 0.0

    def test_weight_field_at_sites(self):
        sys = sheet()
        for method in ("lsl", "col", "mcl"):
            np.testing.assert_array_equal(weight_matrix(weight_field(sys, sys.sites, method)), np.eye(3))

    def test_snap_tolerance(self):
        w = col_weights(levy1d(1.5, target=1.0 + 5e-13)).weights
        np.testing.assert_array_equal(w, [1.0])


class TestWeightField:
    def test_warm_start_agrees_with_cold(self):
        sys = sheet(cells=20)
        targets = [(0.1 * k, 0.6) for k in range(1, 9)]
        warm = weight_matrix(weight_field(sys, targets, "lsl"))
        cold = np.vstack([lsl_weights(sys.with_target(t)).weights for t in targets])
        np.testing.assert_allclose(warm, cold, atol=1e-7)

    def test_csv(self, tmp_path):
        res = weight_field(levy1d(1.5, (0.5, 1.0)), [[0.75]], "col")
        text = write_weights_csv(res, tmp_path / "w.csv")
        lines = text.splitlines()
        assert lines[0] == "target_x,lambda_1,lambda_2,method,residual"
        assert lines[1].split(",")[3] == "col"
        with pytest.raises(FileExistsError):
            write_weights_csv(res, tmp_path / "w.csv")


class TestConditionalSimulation:
    def test_honours_observations(self):
        sys = subgauss()
        obs = np.linspace(-2, 3, 9)
        out = list(SITES9) + [(0.1, 0.1), (0.55, 0.45)]
        real = conditional_simulate_subgaussian(PredictionProblem(sys, obs), out, RngStream(3))
        np.testing.assert_allclose(real.values[:9], obs, atol=1e-10)
        assert real.a > 0

    def test_given_mixing_variable(self):
        sys = subgauss()
        sim = ConditionalSimulator(sys, [(0.21, 0.2)])
        r1 = sim.draw(np.zeros(9), RngStream(1), a=2.0)
        r2 = sim.draw(np.zeros(9), RngStream(1), a=2.0)
        assert r1.values[0] == r2.values[0] and r1.a == 2.0

    def test_far_from_sites_matches_unconditional(self):
        sys = subgauss()
        sim = ConditionalSimulator(sys, [(5.0, 5.0)])
        gen = np.random.default_rng(11)
        vals = np.array([sim.draw(np.zeros(9), gen).values[0] for _ in range(10_000)])
        assert sigma_from_flom(vals, 1.5, 1.0) == pytest.approx(math.sqrt(3.5), rel=0.10)

    def test_kernel_model_rejected(self):
        with pytest.raises(UnsupportedModelError):
            ConditionalSimulator(levy1d(1.5), [[0.5]])

    def test_observation_count(self):
        sim = ConditionalSimulator(subgauss(), [(0.3, 0.3)])
        with pytest.raises(ValueError):
            sim.draw(np.zeros(3), RngStream(0))


@given(st.floats(0.05, 0.95), st.sampled_from([1.2, 1.5, 1.9]))
def test_lsl_levy_two_sites_is_optimal(t0, alpha):
    sys = levy1d(alpha, (0.3, 1.0), t0)
    # near a site with alpha near 1 the optimal residual is ~1e-12 and the
    # gradient moves ~1e-8 per ulp of the weights; 1e-9 is not representable
    w = lsl_weights(sys, strict=False)
    assert w.residual <= 1e-7
    base = error_scale_alpha(sys, w.weights)
    for d in np.eye(2) * 1e-3:
        assert base <= error_scale_alpha(sys, w.weights + d) + 1e-12
        assert base <= error_scale_alpha(sys, w.weights - d) + 1e-12
