"""
Unit tests for backbone extraction and backbone weights.
"""

import json

import pytest

from backbone import (Backbone, backbone_to_json, backbone_weight, compatible, concatenate,
                      cut_backbone, decompose, extract_backbone, leftover_cycles,
                      verify_backbone_representation, verify_weight_factorization)
from domain import GHOST, Bridge, Lattice, Params, Point, Region, Segment, TimeDomain
from exceptions import CapabilityError, ParameterError, PreconditionError
from parity import EMPTY, SourceSet, build_colouring
from tests.fixtures.sample_data import single_site_correlation


@pytest.fixture
def crossing_path(two_site):
    """Odd path (0, 0.25) -> bridge at 0.5 -> (1, 0.75)."""
    sources = SourceSet.of(Point(0, 0.25), Point(1, 0.75))
    psi = build_colouring(two_site, sources, [Bridge(0, 1, 0.5)], [])
    return psi, extract_backbone(psi)


class TestExtraction:
    """Test backbone extraction from valid colourings."""

    def test_single_path_on_circle(self, single_site):
        psi = build_colouring(single_site, SourceSet.of(Point(0, 0.25), Point(0, 0.75)), [], [])
        nu = extract_backbone(psi)
        assert len(nu.paths) == 1
        assert nu.paths[0].segments == [Segment(0, 0.25, 0.75)]
        assert nu.length == pytest.approx(0.5)
        assert nu.endpoints() == psi.sources

    def test_path_to_ghost(self, single_site):
        psi = build_colouring(single_site, SourceSet.of(Point(0, 0.25)), [], [Point(0, 0.5)])
        nu = extract_backbone(psi)
        assert nu.ghost_ends == 1
        assert nu.paths[0].end == GHOST
        assert nu.paths[0].ghost_bond == Point(0, 0.5)
        assert nu.length == pytest.approx(0.25)

    def test_path_crosses_bridge(self, crossing_path):
        _, nu = crossing_path
        path = nu.paths[0]
        assert path.bridges == (Bridge(0, 1, 0.5),)
        assert path.segments == [Segment(0, 0.25, 0.5), Segment(1, 0.5, 0.75)]
        assert path.end == Point(1, 0.75)

    def test_leftover_cycle(self, two_site):
        bridges = [Bridge(0, 1, 0.25), Bridge(0, 1, 0.75)]
        psi = build_colouring(two_site, EMPTY, bridges, [])
        backbone, cycles = decompose(psi)
        assert backbone.is_empty
        assert len(cycles) == 1
        assert len(cycles[0]) == 2
        assert len(leftover_cycles(psi)) == 1

    def test_failed_colouring_has_empty_backbone(self, single_site):
        psi = build_colouring(single_site, SourceSet.of(Point(0, 0.5)), [], [])
        assert extract_backbone(psi).is_empty

    def test_json(self, crossing_path):
        _, nu = crossing_path
        document = json.loads(backbone_to_json(nu))
        assert document['paths'][0]['start'] == [0, 0.25]
        assert document['paths'][0]['bridges'] == [[0, 1, 0.5]]


class TestCutAndConcatenate:
    def test_cut_then_concatenate_restores(self, crossing_path):
        _, nu = crossing_path
        first, second = cut_backbone(nu, Point(0, 0.375), 1.0)
        assert first.paths[-1].end == Point(0, 0.375)
        assert second.paths[0].start == Point(0, 0.375)
        assert concatenate(first, second) == nu

    def test_cut_outside_backbone(self, crossing_path):
        _, nu = crossing_path
        with pytest.raises(PreconditionError):
            cut_backbone(nu, Point(0, 0.9), 1.0)


class TestWeights:
    """Test compatibility and backbone weights."""

    def test_compatibility(self, crossing_path, single_site):
        psi, nu = crossing_path
        assert compatible(psi.sources, nu, 0.0)
        assert not compatible(SourceSet.of(Point(0, 0.25)), nu, 1.0)
        ghost_psi = build_colouring(single_site, SourceSet.of(Point(0, 0.25)), [], [Point(0, 0.5)])
        ghost_nu = extract_backbone(ghost_psi)
        assert compatible(ghost_psi.sources, ghost_nu, 0.5)
        assert not compatible(ghost_psi.sources, ghost_nu, 0.0)

    def test_trivial_weights(self, two_site, params, rng, crossing_path):
        _, nu = crossing_path
        assert backbone_weight(two_site, Backbone(), EMPTY, params, 10, rng).value == 1.0
        est = backbone_weight(two_site, nu, SourceSet.of(Point(0, 0.25)), params, 10, rng)
        assert est.value == 0.0
        assert 'incompatible' in est.flags

    def test_unknown_inner(self, two_site, params, rng, crossing_path):
        _, nu = crossing_path
        with pytest.raises(ParameterError):
            backbone_weight(two_site, nu, nu.endpoints(), params, 10, rng, inner='exact')

    def test_oracle_weight_positive(self, two_site, params, rng, crossing_path):
        _, nu = crossing_path
        est = backbone_weight(two_site, nu, nu.endpoints(), params, 10, rng, inner='oracle')
        assert est.is_exact
        assert est.value > 0.0

    def test_factorization_exact(self, two_site, params, rng, crossing_path):
        """The cut weight telescopes exactly with exact partition functions."""
        _, nu = crossing_path
        report = verify_weight_factorization(two_site, nu, params, 10, rng, x=Point(0, 0.375),
                                             inner='oracle')
        assert report.passed
        assert report.lhs == pytest.approx(report.rhs, rel=1e-10)

    def test_factorization_needs_two_paths(self, two_site, params, rng, crossing_path):
        _, nu = crossing_path
        with pytest.raises(ParameterError):
            verify_weight_factorization(two_site, nu, params, 10, rng)


class TestRepresentation:
    def test_single_site(self, rng):
        """Backbone average reproduces the one-vertex two-point function."""
        region = Region.box(Lattice.chain(1), TimeDomain(1.0))
        A = SourceSet.of(Point(0, 0.0), Point(0, 0.25))
        report = verify_backbone_representation(region, A, Params(0.0, 1.0, 0.0), 4000, rng,
                                                inner='oracle', sigma_buffer=4.0)
        exact = single_site_correlation(1.0, 1.0, 0.25)
        assert report.exact == pytest.approx(exact, rel=1e-6)
        assert report.backbone.value == pytest.approx(exact, abs=5 * report.backbone.std_error + 1e-9)
        assert report.passed

    def test_too_many_vertices(self, params, rng):
        region = Region.box(Lattice(1, 2), TimeDomain(1.0))
        with pytest.raises(CapabilityError):
            verify_backbone_representation(region, EMPTY, params, 10, rng)
