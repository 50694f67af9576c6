"""
Unit tests for the exact oracles.
"""

import math

import pytest

from domain import INTERVAL, Lattice, Params, Point, Region, TimeDomain
from exceptions import CapabilityError, ConsistencyError, ParameterError
from oracle import (DenseHamiltonian, conditional_ising, death_components, exact_correlation,
                    exact_magnetization, region_correlation, region_log_partition,
                    region_normalized_partition, single_spin_correlation,
                    single_spin_magnetization, thermal_expectation, time_displaced_correlation)
from tests.fixtures.sample_data import single_site_correlation

ZERO_FIELD = Params(0.0, 1.0, 0.0)


class TestDenseHamiltonian:
    """Test the dense quantum Hamiltonian."""

    def test_symmetric(self, params):
        ham = DenseHamiltonian.from_lattice(Lattice(1, 1), params)
        assert ham.dimension == 8
        assert ham.is_symmetric()

    def test_too_many_vertices(self, params):
        with pytest.raises(CapabilityError):
            DenseHamiltonian(13, [], params)

    def test_negative_beta_rejected(self, params):
        ham = DenseHamiltonian.from_lattice(Lattice.chain(1), params)
        with pytest.raises(ParameterError):
            thermal_expectation(ham, -1.0, [0])

    @pytest.mark.parametrize("beta, delta, gamma", [(1.0, 1.0, 0.5), (2.0, 0.5, 1.5)])
    def test_single_spin_magnetization(self, beta, delta, gamma):
        ham = DenseHamiltonian.from_lattice(Lattice.chain(1), Params(0.0, delta, gamma))
        assert thermal_expectation(ham, beta, [0]) == pytest.approx(
            single_spin_magnetization(beta, delta, gamma), rel=1e-10)

    def test_single_spin_correlation(self, single_site_cases):
        for beta, delta, t in single_site_cases:
            ham = DenseHamiltonian.from_lattice(Lattice.chain(1), Params(0.0, delta, 0.0))
            assert time_displaced_correlation(ham, beta, 0, 0, 0.0, t) == pytest.approx(
                single_site_correlation(beta, delta, t), rel=1e-10)

    def test_no_field_no_magnetization(self):
        assert single_spin_magnetization(1.0, 0.0, 0.0) == 0.0
        ham = DenseHamiltonian.from_lattice(Lattice(1, 1), Params(1.0, 1.0, 0.0))
        assert thermal_expectation(ham, 2.0, [0]) == pytest.approx(0.0, abs=1e-12)

    def test_correlation_is_periodic_in_time(self):
        assert single_spin_correlation(1.0, 1.0, 1.25) == pytest.approx(
            single_spin_correlation(1.0, 1.0, 0.25))


class TestRegionTransfer:
    """Test time-sliced transfer matrices on regions."""

    def test_matches_dense_on_full_box(self, two_site, params):
        x, y = Point(0, 0.1), Point(1, 0.6)
        ham = DenseHamiltonian.from_lattice(two_site.lattice, params)
        assert region_correlation(two_site, params, [x, y]) == pytest.approx(
            time_displaced_correlation(ham, 1.0, 0, 1, 0.1, 0.6), rel=1e-8)

    def test_single_circle_partition(self, single_site):
        """Z' = 2 cosh(delta beta) and the normalized form divides by 2 e^{-delta beta}."""
        assert region_log_partition(single_site, ZERO_FIELD) == pytest.approx(math.log(2 * math.cosh(1.0)))
        assert region_normalized_partition(single_site, ZERO_FIELD) == pytest.approx(math.e * math.cosh(1.0))

    def test_free_time_ends(self):
        """With free ends one spin decorrelates as e^{-2 delta tau}."""
        region = Region.box(Lattice.chain(1), TimeDomain(1.0, INTERVAL))
        value = region_correlation(region, ZERO_FIELD, [Point(0, 0.25), Point(0, 0.75)])
        assert value == pytest.approx(math.exp(-1.0), rel=1e-8)

    def test_empty_and_ghost_sources(self, single_site, params):
        assert region_correlation(single_site, params, []) == 1.0
        assert exact_correlation(single_site, params, [Point(-1, 0.0)]) == 1.0

    def test_exact_magnetization_on_single_site(self, single_site, params):
        assert exact_magnetization(single_site, params) == pytest.approx(
            single_spin_magnetization(1.0, params.delta, params.gamma), rel=1e-10)

    def test_insertion_outside_region(self, params):
        region = Region.from_intervals(Lattice.chain(1), TimeDomain(1.0), {0: [(0.0, 0.5)]})
        with pytest.raises(ConsistencyError):
            region_correlation(region, params, [Point(0, 0.75)])

    def test_too_many_vertices(self, params):
        region = Region.box(Lattice.chain(9), TimeDomain(1.0))
        with pytest.raises(CapabilityError):
            region_log_partition(region, params)


class TestConditionalIsing:
    """Test the Ising model on the death-split graph."""

    def test_death_components_wrap(self, single_site):
        comps = death_components(single_site, [Point(0, 0.25), Point(0, 0.75)])
        assert len(comps) == 2
        assert all(c.length == pytest.approx(0.5) for c in comps)
        assert comps[1].pieces == ((0.75, 1.0), (0.0, 0.25))

    def test_no_deaths_single_component(self, single_site, params):
        result = conditional_ising(single_site, [], [Point(0, 0.5)], params)
        assert result.n_components == 1
        assert result.correlation == pytest.approx(math.tanh(params.gamma))

    def test_routes_agree(self, two_site, params):
        result = conditional_ising(two_site, [Point(0, 0.3)], [Point(0, 0.5), Point(1, 0.1)], params)
        assert result.n_components == 2
        assert result.correlation == pytest.approx(result.parity_correlation, abs=1e-10)

    def test_source_on_death(self, single_site, params):
        with pytest.raises(ParameterError):
            conditional_ising(single_site, [Point(0, 0.5)], [Point(0, 0.5)], params)

    def test_death_outside_region(self, params):
        region = Region.from_intervals(Lattice.chain(1), TimeDomain(1.0), {0: [(0.0, 0.5)]})
        with pytest.raises(ConsistencyError):
            death_components(region, [Point(0, 0.75)])
