"""
Unit tests for space-time domain geometry.
"""

import json

import numpy as np
import pytest

from domain import (CIRCLE, FREE, INTERVAL, PERIODIC, Bridge, Configuration, Lattice, Ordering,
                    Params, Point, Region, Segment, TimeDomain, measure, point_order,
                    region_from_json, region_subtract, region_to_json, sample_configuration,
                    sample_events)
from exceptions import ConsistencyError, ParameterError


class TestLattice:
    """Test box lattices and free chains."""

    def test_ring_of_three(self):
        """Periodic d=1 box with n=1 is a triangle."""
        lattice = Lattice(1, 1, PERIODIC)
        assert lattice.n_vertices == 3
        assert lattice.edges == ((0, 1), (0, 2), (1, 2))

    def test_square_torus_degree(self):
        """Every vertex of a periodic square box has four neighbours."""
        lattice = Lattice(2, 1, PERIODIC)
        assert lattice.n_vertices == 9
        assert len(lattice.edges) == 18
        assert all(len(n) == 4 for n in lattice.neighbours)

    def test_free_chain(self):
        lattice = Lattice.chain(3)
        assert lattice.edges == ((0, 1), (1, 2))
        assert lattice.boundary == FREE
        assert lattice.origin == 0

    def test_periodic_single_vertex_rejected(self):
        """n = 0 with periodic boundary would create self-loops."""
        with pytest.raises(ParameterError):
            Lattice(1, 0, PERIODIC)

    def test_negative_dimension_rejected(self):
        with pytest.raises(ParameterError):
            Lattice(0, 1)

    def test_unknown_boundary_rejected(self):
        with pytest.raises(ParameterError):
            Lattice(1, 1, 'twisted')

    def test_torus_distance(self):
        """Distance wraps around the torus."""
        lattice = Lattice(1, 2, PERIODIC)
        assert lattice.distance(0, 4) == 1
        assert Lattice(1, 2, FREE).distance(0, 4) == 4

    def test_origin_is_centre(self):
        lattice = Lattice(2, 1)
        assert lattice.vertices[lattice.origin] == (0, 0)


class TestParams:
    """Test parameter validation."""

    def test_negative_rejected(self):
        with pytest.raises(ParameterError):
            Params(-1.0, 1.0, 0.0)

    def test_nonfinite_rejected(self):
        with pytest.raises(ParameterError):
            Params(float('inf'), 1.0, 0.0)

    def test_from_ratio_per_edge(self):
        """rho = 2 maps to lambda = 1 per unordered edge."""
        params = Params.from_ratio(2.0)
        assert params.lam == pytest.approx(1.0)
        assert params.rho == pytest.approx(2.0)

    def test_ratio_round_trip(self):
        assert Params.from_ratio(1.7, delta=0.8, gamma=0.3).rho == pytest.approx(1.7)

    def test_rho_undefined_without_deaths(self):
        with pytest.raises(ParameterError):
            Params(1.0, 0.0).rho

    def test_replace(self, params):
        changed = params.replace(gamma=0.0)
        assert changed.gamma == 0.0
        assert changed.lam == params.lam
        assert params.to_dict() == {'lambda': 1.0, 'delta': 1.0, 'gamma': 0.5}


class TestTimeDomain:
    def test_nonpositive_beta_rejected(self):
        with pytest.raises(ParameterError):
            TimeDomain(0.0)

    def test_unknown_topology_rejected(self):
        with pytest.raises(ParameterError):
            TimeDomain(1.0, 'torus')


class TestRegion:
    """Test region construction, membership and measures."""

    def test_box_on_circle_is_full(self, ring3):
        assert ring3.W == (0, 1, 2)
        assert ring3.N == 3
        assert ring3.total_measure == pytest.approx(3.0)
        assert ring3.overlap_measure == pytest.approx(3.0)

    def test_box_on_interval_has_endpoints(self):
        region = Region.box(Lattice.chain(2), TimeDomain(2.0, INTERVAL))
        assert region.W == ()
        assert region.is_endpoint(Point(0, 0.0))
        assert region.is_endpoint(Point(1, 2.0))

    def test_wrapping_interval_is_canonical(self):
        """An interval through time 0 is stored once, with end beyond beta."""
        region = Region.from_intervals(Lattice.chain(1), TimeDomain(1.0), {0: [(0.75, 1.25)]})
        assert region.intervals[0] == ((0.75, 1.25),)
        assert region.contains(Point(0, 0.125))
        assert not region.contains(Point(0, 0.5))
        assert region.total_measure == pytest.approx(0.5)

    def test_wrapping_needs_circle(self):
        with pytest.raises(ConsistencyError):
            Region.from_intervals(Lattice.chain(1), TimeDomain(1.0, INTERVAL), {0: [(0.5, 1.5)]})

    def test_full_circle_needs_circle_topology(self):
        with pytest.raises(ConsistencyError):
            Region(Lattice.chain(1), TimeDomain(1.0, INTERVAL), (((0.0, 1.0),),), frozenset({0}))

    def test_full_circle_accepted_on_circle(self):
        region = Region(Lattice.chain(1), TimeDomain(1.0), (((0.0, 1.0),),), frozenset({0}))
        assert region.full == frozenset({0})

    def test_overlapping_intervals_rejected(self):
        with pytest.raises(ConsistencyError):
            Region(Lattice.chain(1), TimeDomain(1.0), (((0.0, 0.5), (0.25, 0.75)),))

    def test_endpoint_detection(self):
        region = Region.from_intervals(Lattice.chain(1), TimeDomain(1.0), {0: [(0.25, 0.5)]})
        assert region.is_endpoint(Point(0, 0.25))
        assert region.is_endpoint(Point(0, 0.5))
        assert not region.is_endpoint(Point(0, 0.375))

    def test_ghost_is_not_contained(self, single_site):
        assert not single_site.contains(Point(-1, 0.0))
        assert not single_site.contains(Point(5, 0.0))

    def test_edge_overlap(self):
        region = Region.from_intervals(Lattice.chain(2), TimeDomain(1.0),
                                       {0: [(0.0, 0.5)], 1: [(0.25, 1.0)]})
        assert region.edge_overlap(0, 1) == [(0.25, 0.5)]
        assert region.overlap_measure == pytest.approx(0.25)

    def test_json_document(self, ring3):
        config = Configuration(bridges=(Bridge(0, 1, 0.5),), ghosts=(Point(2, 0.25),))
        region, restored = region_from_json(region_to_json(ring3, config))
        assert region == ring3
        assert restored == config

    def test_unknown_format_rejected(self, ring3):
        document = json.loads(region_to_json(ring3))
        document['format'] = 99
        with pytest.raises(ConsistencyError):
            region_from_json(json.dumps(document))


class TestSubtraction:
    """Test K minus a union of path segments."""

    def test_cut_circle_leaves_W(self, single_site):
        cut = region_subtract(single_site, [Segment(0, 0.25, 0.5)])
        assert cut.W == ()
        assert cut.intervals[0] == ((0.5, 1.25),)
        assert cut.total_measure == pytest.approx(0.75)

    def test_split_interval(self):
        region = Region.box(Lattice.chain(1), TimeDomain(1.0, INTERVAL))
        cut = region_subtract(region, [Segment(0, 0.25, 0.5)])
        assert cut.intervals[0] == ((0.0, 0.25), (0.5, 1.0))
        assert cut.N == 2

    def test_segment_outside_rejected(self):
        region = Region.from_intervals(Lattice.chain(1), TimeDomain(1.0), {0: [(0.0, 0.5)]})
        with pytest.raises(ConsistencyError):
            region_subtract(region, [Segment(0, 0.25, 0.75)])

    def test_empty_paths_are_identity(self, ring3):
        assert region_subtract(ring3, []) is ring3


class TestMeasureAndOrder:
    def test_weighted_measure(self, two_site):
        assert measure(two_site, {0: 2.0, 1: 0.5}) == pytest.approx(2.5)
        assert measure([Segment(0, 0.0, 0.25), Segment(1, 0.5, 1.0)]) == pytest.approx(0.75)

    def test_point_order(self):
        assert point_order(Point(0, 0.9), Point(1, 0.1)) == Ordering.LESS
        assert point_order(Point(1, 0.5), Point(1, 0.25)) == Ordering.GREATER
        assert point_order(Point(1, 0.5), Point(1, 0.5)) == Ordering.EQUAL


class TestPoissonSampling:
    """Test Poisson event sampling on K and F."""

    def test_zero_intensity(self, ring3, rng):
        assert sample_events(ring3, 0.0, 'vertices', rng) == []

    def test_invalid_arguments(self, ring3, rng):
        with pytest.raises(ParameterError):
            sample_events(ring3, -1.0, 'vertices', rng)
        with pytest.raises(ParameterError):
            sample_events(ring3, 1.0, 'faces', rng)

    def test_mean_count(self, ring3, rng):
        """E|events| = intensity * |K|."""
        counts = [len(sample_events(ring3, 2.0, 'vertices', rng)) for _ in range(2000)]
        assert np.mean(counts) == pytest.approx(6.0, abs=0.25)

    def test_bridges_on_edges(self, ring3, rng):
        bridges = sample_events(ring3, 3.0, 'edges', rng)
        assert all((b.u, b.v) in ring3.lattice.edges for b in bridges)
        assert all(0.0 <= b.time < 1.0 for b in bridges)

    def test_configuration_lies_in_region(self, ring3, params, rng):
        for _ in range(50):
            config = sample_configuration(ring3, params, rng, with_deaths=True)
            config.check(ring3)
            times = config.all_times()
            assert len(set(times)) == len(times)
