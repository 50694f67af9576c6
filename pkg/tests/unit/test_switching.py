"""
Unit tests for connectivity in colouring pairs and the switch map.
"""

import math

import pytest

from domain import GHOST, Bridge, Point, Segment
from exceptions import ParameterError, PreconditionError
from parity import EMPTY, SourceSet, build_colouring
from switching import (CutSet, OpenPath, build_connectivity, find_open_path, is_blocking, is_open,
                       sample_pair, switch_along, switched_log_weight, verify_switching)

X = Point(0, 0.25)
Y = Point(0, 0.75)


@pytest.fixture
def odd_arc(single_site):
    """psi1 odd on [0.25, 0.75] of one circle, psi2 even everywhere."""
    psi1 = build_colouring(single_site, SourceSet.of(X, Y), [], [])
    psi2 = build_colouring(single_site, EMPTY, [], [])
    return psi1, psi2


@pytest.fixture
def bridge_pair(two_site):
    """psi1 with sources (0, 0.25), (1, 0.75) joined through a bridge at 0.5."""
    x, y = Point(0, 0.25), Point(1, 0.75)
    psi1 = build_colouring(two_site, SourceSet.of(x, y), [Bridge(0, 1, 0.5)], [])
    psi2 = build_colouring(two_site, EMPTY, [], [])
    return psi1, psi2, x, y


class TestConnectivity:
    """Test open connections in (psi1, psi2, cuts)."""

    def test_cut_blocks_only_doubly_even(self, odd_arc):
        psi1, psi2 = odd_arc
        assert not is_blocking(psi1, psi2, Point(0, 0.5))
        assert is_blocking(psi1, psi2, Point(0, 0.9))

    def test_two_cuts_separate(self, single_site):
        psi = build_colouring(single_site, EMPTY, [], [])
        index = build_connectivity(psi, psi, CutSet((Point(0, 0.5), Point(0, 0.9))))
        assert not index.connected(X, Y)

    def test_one_cut_leaves_circle_connected(self, single_site):
        psi = build_colouring(single_site, EMPTY, [], [])
        index = build_connectivity(psi, psi, CutSet((Point(0, 0.5),)))
        assert index.connected(X, Y)

    def test_ghost_bond_reaches_ghost(self, single_site):
        psi1 = build_colouring(single_site, SourceSet.of(X), [], [Point(0, 0.5)])
        psi2 = build_colouring(single_site, EMPTY, [], [])
        index = build_connectivity(psi1, psi2, CutSet())
        assert index.connected(Point(0, 0.1), GHOST)

    def test_failed_colouring_rejected(self, single_site):
        failed = build_colouring(single_site, SourceSet.of(X), [], [])
        with pytest.raises(PreconditionError):
            build_connectivity(failed, failed, CutSet())

    def test_pivotal_measure(self, odd_arc):
        psi1, psi2 = odd_arc
        blocked = build_connectivity(psi1, psi2, CutSet((Point(0, 0.9),)), extra=(X, Y))
        assert blocked.pivotal_measure(X, Y) == pytest.approx(0.5)
        free = build_connectivity(psi1, psi2, CutSet(), extra=(X, Y))
        assert free.pivotal_measure(X, Y) == 0.0

    def test_only_via(self, odd_arc):
        psi1, psi2 = odd_arc
        z = Point(0, 0.5)
        blocked = build_connectivity(psi1, psi2, CutSet((Point(0, 0.9),)), extra=(X, Y))
        assert blocked.only_via(X, Y, z)
        free = build_connectivity(psi1, psi2, CutSet(), extra=(X, Y))
        assert not free.only_via(X, Y, z)


class TestSwitchMap:
    """Test f_pi along an open path."""

    def test_path_crosses_bridge(self, bridge_pair):
        psi1, psi2, x, y = bridge_pair
        path = find_open_path(psi1, psi2, CutSet(), x, y)
        assert path is not None
        assert path.bridges == (Bridge(0, 1, 0.5),)
        assert is_open(path, psi1, psi2, CutSet())

    def test_no_path_between_lines_without_bridges(self, two_site):
        psi = build_colouring(two_site, EMPTY, [], [])
        assert find_open_path(psi, psi, CutSet(), Point(0, 0.25), Point(1, 0.75)) is None

    def test_switch_moves_bridge_and_sources(self, bridge_pair):
        psi1, psi2, x, y = bridge_pair
        path = find_open_path(psi1, psi2, CutSet(), x, y)
        r1, r2 = switch_along(psi1, psi2, path, CutSet())
        assert r1.sources == EMPTY
        assert r2.sources == SourceSet.of(x, y)
        assert r1.bridges == ()
        assert r2.bridges == (Bridge(0, 1, 0.5),)

    def test_switch_is_involution(self, bridge_pair):
        psi1, psi2, x, y = bridge_pair
        path = find_open_path(psi1, psi2, CutSet(), x, y)
        r1, r2 = switch_along(psi1, psi2, path)
        back1, back2 = switch_along(r1, r2, path)
        assert back1 == psi1
        assert back2 == psi2

    def test_switch_preserves_weight(self, bridge_pair):
        psi1, psi2, x, y = bridge_pair
        path = find_open_path(psi1, psi2, CutSet(), x, y)
        r1, r2 = switch_along(psi1, psi2, path)
        assert switched_log_weight(r1, r2, path, 0.8) == pytest.approx(
            switched_log_weight(psi1, psi2, path, 0.8), abs=1e-12)

    def test_failed_colouring_has_no_weight(self, bridge_pair):
        psi1, psi2, x, y = bridge_pair
        path = find_open_path(psi1, psi2, CutSet(), x, y)
        failed = build_colouring(psi1.region, SourceSet.of(x), [], [])
        assert not failed.valid
        assert switched_log_weight(failed, psi2, path, 0.8) == -math.inf

    def test_foreign_bridge_rejected(self, bridge_pair):
        psi1, psi2, x, y = bridge_pair
        path = OpenPath(x, y, (Segment(0, 0.25, 0.5),), (Bridge(0, 1, 0.9),), ())
        with pytest.raises(PreconditionError):
            switch_along(psi1, psi2, path)


class TestSwitchingLemma:
    def test_sample_pair(self, two_site, params, rng):
        psi1, psi2, cuts = sample_pair(two_site, params, EMPTY, EMPTY, rng)
        assert psi1.region == two_site
        assert isinstance(cuts, CutSet)
        assert all(two_site.contains(c) for c in cuts)

    def test_both_sides_agree(self, two_site, params, rng):
        x, y = Point(0, 0.2), Point(1, 0.7)
        report = verify_switching(two_site, SourceSet.of(x, y), EMPTY, x, y, params, 3000, rng,
                                  sigma_buffer=4.0)
        assert report.passed
        assert report.lhs > 0

    def test_point_outside_region(self, two_site, params, rng):
        with pytest.raises(ParameterError):
            verify_switching(two_site, EMPTY, EMPTY, Point(0, 0.2), Point(4, 0.7), params, 10, rng)
