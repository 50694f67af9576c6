"""
Unit tests for Monte Carlo error analysis.
"""

import math

import numpy as np
import pytest

from estimates import (Estimate, binomial_pass_rate, block_bootstrap, blocked_error, blocking_error,
                       integrated_autocorrelation_time, jackknife, mean_estimate, one_sided_holds,
                       propagate, ratio_estimate, weighted_mean, z_score)
from exceptions import InsufficientDataError, ParameterError


def ar1(rng, n, phi):
    noise = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = noise[0]
    for i in range(1, n):
        x[i] = phi * x[i - 1] + noise[i]
    return x


class TestEstimate:
    """Test the Estimate value type."""

    def test_nonfinite_value_rejected(self):
        with pytest.raises(InsufficientDataError):
            Estimate(float('nan'), 0.1, 10)

    def test_negative_error_rejected(self):
        with pytest.raises(InsufficientDataError):
            Estimate(1.0, -0.1, 10)

    def test_exact(self):
        est = Estimate.exact(0.25)
        assert est.is_exact
        assert est.to_dict() == {'value': 0.25, 'std_error': 0.0, 'n_samples': 0, 'flags': []}

    def test_with_flags(self):
        est = Estimate(1.0, 0.1, 10).with_flags('capped')
        assert est.flags == ('capped',)
        assert str(est) == "1 +/- 0.1"


class TestIndependentSamples:
    """Test mean, jackknife and ratio estimators."""

    def test_mean_estimate(self):
        est = mean_estimate([1.0, 2.0, 3.0, 4.0])
        assert est.value == pytest.approx(2.5)
        assert est.std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
        assert est.n_samples == 4

    def test_mean_needs_two_samples(self):
        with pytest.raises(InsufficientDataError):
            mean_estimate([1.0])

    def test_jackknife_of_mean(self, rng):
        """For the plain mean the jackknife error matches sigma/sqrt(n)."""
        data = rng.standard_normal(10000)
        est = jackknife(data, lambda m: m[0])
        assert est.value == pytest.approx(data.mean())
        assert est.std_error == pytest.approx(1 / math.sqrt(10000), rel=0.35)

    def test_exact_ratio_has_no_error(self, rng):
        den = rng.random(1000) + 0.5
        est = ratio_estimate(2 * den, den)
        assert est.value == pytest.approx(2.0)
        assert est.std_error == pytest.approx(0.0, abs=1e-12)

    def test_ratio_with_zero_denominator(self):
        with pytest.raises(InsufficientDataError):
            ratio_estimate(np.ones(10), np.zeros(10))


class TestCorrelatedSeries:
    """Test blocking and autocorrelation analysis."""

    def test_blocking_on_white_noise(self, rng):
        data = rng.standard_normal(2 ** 14)
        assert blocking_error(data) == pytest.approx(1 / math.sqrt(2 ** 14), rel=0.3)

    def test_blocking_needs_points(self):
        with pytest.raises(InsufficientDataError):
            blocking_error([1.0, 2.0])

    def test_constant_series(self):
        assert integrated_autocorrelation_time(np.ones(100)) == 0.5

    def test_ar1_autocorrelation_time(self, rng):
        """tau = (1 + phi) / (2 (1 - phi)) for an AR(1) process."""
        series = ar1(rng, 100000, 0.8)
        assert integrated_autocorrelation_time(series) == pytest.approx(4.5, rel=0.2)

    def test_blocked_error_grows_with_correlation(self, rng):
        white = rng.standard_normal(100000)
        correlated = ar1(rng, 100000, 0.8)
        se_white, _ = blocked_error(white)
        se_corr, length = blocked_error(correlated)
        assert length >= 10
        assert se_corr > 3 * se_white

    def test_blocked_error_short_series(self):
        with pytest.raises(InsufficientDataError):
            blocked_error(np.arange(10.0), tau=5.0)

    def test_block_bootstrap(self, rng):
        data = rng.standard_normal(1000)
        value, replicates = block_bootstrap(data, lambda d: float(d.mean()), rng, n_boot=50)
        assert value == pytest.approx(data.mean())
        assert replicates.shape == (50,)
        assert np.std(replicates) == pytest.approx(1 / math.sqrt(1000), rel=0.5)


class TestCombination:
    """Test error propagation and comparisons."""

    def test_propagate_product(self):
        est = propagate(lambda a, b: a * b, [Estimate(2.0, 0.1, 100), Estimate(3.0, 0.2, 50)])
        assert est.value == pytest.approx(6.0)
        assert est.std_error == pytest.approx(0.5, rel=1e-4)
        assert est.n_samples == 50

    def test_z_score(self):
        assert z_score(Estimate(1.0, 0.3, 10), Estimate(0.0, 0.4, 10)) == pytest.approx(2.0)
        assert z_score(Estimate.exact(1.0), Estimate.exact(1.0)) == 0.0
        assert z_score(Estimate.exact(1.0), Estimate.exact(0.0)) == math.inf

    def test_one_sided(self):
        assert one_sided_holds(1.2, 1.0, 0.1)
        assert not one_sided_holds(1.5, 1.0, 0.1)

    def test_binomial_pass_rate(self):
        assert binomial_pass_rate(100, 100)[0] is True
        assert binomial_pass_rate(90, 100)[0] is False
        with pytest.raises(ParameterError):
            binomial_pass_rate(0, 0)

    def test_weighted_mean(self):
        est = weighted_mean([1.0, 3.0], [1.0, 1.0])
        assert est.value == pytest.approx(2.0)
        assert est.std_error == pytest.approx(math.sqrt(0.5))
