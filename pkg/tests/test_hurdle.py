"""Tests for the hurdle observation model and catchability."""

import numpy as np
import pytest
from scipy import stats

from core.errors import InvalidArgumentError, VesselLookupError
from core.hurdle import (
    Catchability,
    CatchabilityModel,
    catchability,
    gamma_loglik_derivatives,
    gamma_shape_scale,
    hurdle_moments,
    hurdle_variance,
    presence_prob,
    simulate_observations,
)


class TestGammaParameterization:
    """Test the mean / standard-deviation gamma parameterization."""

    def test_shape_scale(self):
        shape, scale = gamma_shape_scale(2.0, 1.0)
        assert shape == pytest.approx(4.0)
        assert scale == pytest.approx(0.5)
        assert shape * scale == pytest.approx(2.0)
        assert shape * scale**2 == pytest.approx(1.0)

    def test_invalid_parameters(self):
        with pytest.raises(InvalidArgumentError):
            gamma_shape_scale(0.0, 1.0)
        with pytest.raises(InvalidArgumentError):
            gamma_shape_scale(1.0, -1.0)

    def test_loglik_matches_scipy(self):
        y = np.array([0.3, 1.0, 2.5])
        eta = np.array([0.1, -0.4, 0.7])
        upsilon = 0.8
        value, _, _ = gamma_loglik_derivatives(y, eta, upsilon)
        shape, scale = gamma_shape_scale(np.exp(eta), upsilon)
        np.testing.assert_allclose(value, stats.gamma.logpdf(y, shape, scale=scale), rtol=1e-10)

    def test_derivatives_match_finite_differences(self):
        y = np.array([0.3, 1.0, 2.5])
        eta = np.array([0.1, -0.4, 0.7])
        h = 1e-5
        _, first, second = gamma_loglik_derivatives(y, eta, 1.2)
        up, first_up, _ = gamma_loglik_derivatives(y, eta + h, 1.2)
        down, first_down, _ = gamma_loglik_derivatives(y, eta - h, 1.2)
        np.testing.assert_allclose(first, (up - down) / (2 * h), rtol=1e-5)
        np.testing.assert_allclose(second, (first_up - first_down) / (2 * h), rtol=1e-5)


class TestSimulation:
    """Test hurdle draws."""

    def test_hurdle_invariant(self):
        pi = np.full(500, 0.4)
        zeta = np.full(500, 3.0)
        z, y = simulate_observations(pi, zeta, 1.0, 5)
        assert set(np.unique(z)) <= {0, 1}
        assert np.all(y[z == 0] == 0)
        assert np.all(y[z == 1] > 0)

    def test_extreme_probabilities(self):
        z0, y0 = simulate_observations(np.zeros(20), np.ones(20), 1.0, 1)
        assert not z0.any() and not y0.any()
        z1, y1 = simulate_observations(np.ones(20), np.ones(20), 1.0, 1)
        assert z1.all() and np.all(y1 > 0)

    def test_reproducible(self):
        a = simulate_observations(np.full(10, 0.5), np.ones(10), 1.0, 9)
        b = simulate_observations(np.full(10, 0.5), np.ones(10), 1.0, 9)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_invalid_probability(self):
        with pytest.raises(InvalidArgumentError):
            simulate_observations(np.array([1.2]), np.ones(1), 1.0, 1)

    def test_moments(self):
        assert hurdle_moments(0.25, 8.0) == pytest.approx(2.0)
        assert hurdle_variance(1.0, 3.0, 0.5) == pytest.approx(0.25)
        assert hurdle_variance(0.5, 2.0, 1.0) == pytest.approx(0.5 * 5.0 - 1.0)
        assert presence_prob(0.0) == pytest.approx(0.5)


class TestCatchability:
    """Test vessel catchability."""

    def setup_method(self):
        self.c = Catchability(
            alpha_c=0.2, gamma_c=[0.1, -0.3], fixed_terms=[0.5], vessels=[2, 3],
            reference_vessel=1, reference_value=1.5,
        )
        self.attributes = {2: np.array([1.0]), 3: np.array([2.0])}

    def test_reference_vessel(self):
        assert catchability(1, self.c, self.attributes) == pytest.approx(1.5)

    def test_non_reference_vessel(self):
        expected = np.exp(0.2 - 0.3 + 0.5 * 2.0)
        assert catchability(3, self.c, self.attributes) == pytest.approx(expected)

    def test_unregistered_vessel(self):
        with pytest.raises(VesselLookupError):
            catchability(9, self.c, self.attributes)

    def test_missing_attributes(self):
        with pytest.raises(VesselLookupError):
            catchability(2, self.c, None)

    def test_model_flags(self):
        assert not CatchabilityModel.NONE.has_intercept
        assert CatchabilityModel.RANDOM.has_random_effects
        assert not CatchabilityModel.INTERCEPT.has_random_effects
        assert CatchabilityModel.ATTRIBUTES.has_attributes
