import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import moment_constant_ref, positive_stable_kanter
from stablefield.stable_core import (
    RNG_VERSION,
    RngStream,
    StableParams,
    as_generator,
    moment_constant,
    sample_stable,
    sample_subgaussian_A,
    signed_power,
    subgaussian_a_params,
)

alphas = st.floats(min_value=0.2, max_value=2.0)
finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


class TestSignedPower:
    @pytest.mark.parametrize("a, p, expected", [(-2.0, 1.0, -2.0), (-4.0, 0.5, -2.0), (0.0, 0.7, 0.0)])
    def test_examples(self, a, p, expected):
        assert signed_power(a, p) == expected

    def test_zero_with_negative_exponent(self):
        with pytest.raises(ValueError):
            signed_power(0.0, -0.5)
        with pytest.raises(ValueError):
            signed_power(np.array([1.0, 0.0]), -1.0)

    @given(finite, st.floats(min_value=0.01, max_value=3.0))
    def test_odd(self, a, p):
        assert signed_power(-a, p) == -signed_power(a, p)

    def test_array_shape_preserved(self):
        out = signed_power(np.array([[-8.0, 27.0]]), 1.0 / 3.0)
        assert out.shape == (1, 2)
        np.testing.assert_allclose(out, [[-2.0, 3.0]])


class TestStableParams:
    @pytest.mark.parametrize(
        "kwargs", [dict(alpha=0.0), dict(alpha=2.1), dict(alpha=1.5, sigma=-1), dict(alpha=1.5, beta=1.5), dict(alpha=1, mu=math.inf)]
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            StableParams(**kwargs)


class TestRng:
    def test_same_stream_same_draws(self):
        a = RngStream(7, 3).generator().random(5)
        b = RngStream(7, 3).generator().random(5)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        assert not np.array_equal(RngStream(7, 0).generator().random(5), RngStream(7, 1).generator().random(5))
        assert RngStream(1).substream(0) != RngStream(1).substream(1)

    def test_version_tag(self):
        assert "PCG64" in RNG_VERSION

    def test_as_generator(self):
        g = np.random.default_rng(0)
        assert as_generator(g) is g
        assert np.array_equal(as_generator(4).random(3), RngStream(4).generator().random(3))
        with pytest.raises(TypeError):
            as_generator("seed")


class TestSampleStable:
    def test_gaussian_variance(self):
        x = sample_stable(StableParams(2.0, 1.0), RngStream(1), 100_000)
        assert abs(np.var(x) / 2.0 - 1.0) < 0.05

    def test_degenerate(self):
        x = sample_stable(StableParams(1.3, 0.0, 0.4, 3.0), RngStream(2), 10)
        assert np.all(x == 3.0)

    def test_scalar_return(self):
        assert isinstance(sample_stable(StableParams(1.5), RngStream(0)), float)

    def test_abs_mean_matches_moment_constant(self):
        x = sample_stable(StableParams(1.5), RngStream(3), 100_000)
        assert abs(np.mean(np.abs(x)) / moment_constant(1.5, 1.0) - 1.0) < 0.03

    @given(st.floats(min_value=1.05, max_value=2.0), st.floats(min_value=0.01, max_value=50.0), st.integers(0, 2**31))
    def test_scale_equivariance(self, alpha, sigma, seed):
        unit = sample_stable(StableParams(alpha, 1.0), RngStream(seed), 8)
        scaled = sample_stable(StableParams(alpha, sigma), RngStream(seed), 8)
        np.testing.assert_allclose(scaled, sigma * unit, rtol=1e-12, atol=0)

    def test_deterministic_bytes(self):
        p = StableParams(1.7, 2.0, 0.3, -1.0)
        assert sample_stable(p, RngStream(9, 2), 64).tobytes() == sample_stable(p, RngStream(9, 2), 64).tobytes()

    def test_alpha_one_branch_is_cauchy(self):
        x = sample_stable(StableParams(1.0 + 1e-12), RngStream(4), 100_000)
        # standard Cauchy quartiles are +-1
        q = np.quantile(x, [0.25, 0.75])
        np.testing.assert_allclose(q, [-1.0, 1.0], atol=0.03)

    def test_skewed_positive_for_small_alpha(self):
        x = sample_stable(StableParams(0.6, 1.0, 1.0), RngStream(5), 10_000)
        assert np.all(x > 0)


class TestSubGaussianA:
    def test_positive(self):
        a = sample_subgaussian_A(1.5, RngStream(10), 1_000_000)
        assert np.all(a > 0)

    def test_scale_parameter(self):
        p = subgaussian_a_params(1.5)
        assert p.alpha == 0.75 and p.beta == 1.0
        assert p.sigma == pytest.approx(math.cos(3 * math.pi / 8) ** (4.0 / 3.0), rel=1e-15)

    def test_median_against_kanter(self):
        ours = sample_subgaussian_A(1.9, RngStream(11), 1_000_000)
        ref = positive_stable_kanter(0.95, subgaussian_a_params(1.9).sigma, 1_000_000, np.random.default_rng(12))
        assert abs(np.median(ours) / np.median(ref) - 1.0) < 0.02

    @pytest.mark.parametrize("alpha", [1.0, 2.0, 0.5])
    def test_rejects_alpha(self, alpha):
        with pytest.raises(ValueError):
            sample_subgaussian_A(alpha, RngStream(0))


class TestMomentConstant:
    def test_gaussian(self):
        assert moment_constant(2.0, 1.0) == pytest.approx(math.sqrt(4.0 / math.pi), rel=1e-12)

    def test_regression_value(self):
        # quadrature value; agrees with the literature closed form to ~1e-15
        assert moment_constant(1.5, 1.0) == pytest.approx(1.7054652401523849, rel=1e-12)

    @given(st.floats(min_value=1.05, max_value=2.0), st.floats(min_value=0.05, max_value=0.95))
    def test_against_closed_form(self, alpha, frac):
        p = frac * alpha
        assert moment_constant(alpha, p) == pytest.approx(moment_constant_ref(alpha, p), rel=1e-8)

    def test_monte_carlo(self):
        x = sample_stable(StableParams(1.3), RngStream(13), 400_000)
        mc = np.mean(np.abs(x) ** 0.5) ** 2.0
        assert mc == pytest.approx(moment_constant(1.3, 0.5), rel=0.02)

    def test_cauchy(self):
        assert moment_constant(1.0, 0.5) == pytest.approx(moment_constant_ref(1.0, 0.5), rel=1e-12)

    @pytest.mark.parametrize("alpha, p", [(1.5, 1.5), (1.5, 2.0), (1.5, 0.0), (2.5, 1.0)])
    def test_rejects(self, alpha, p):
        with pytest.raises(ValueError):
            moment_constant(alpha, p)
