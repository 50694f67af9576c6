"""
Unit tests for the verification batteries.
"""

import math

import pytest

import oracle
from battery import (FIELD_GAMMAS, GAMMA_RANGE, LAMBDA_RANGE, PDI_INSTANCE, Instance, ParameterGrid,
                     _z_against, field_exponent_check, oracle_case, pair_points, pdi_case,
                     random_points, rank_cases, run_pdi_battery, run_switch_map_battery,
                     separating_band, small_instances, summarize, switch_map_trial,
                     switching_cases)
from domain import PERIODIC, Lattice, Params, Point
from estimates import Estimate
from exceptions import ParameterError
from observables import GRID, Quadrature
from tests.fixtures.sample_data import PARAM_POINTS


def _record(case, abs_z, passed, params=(1.0, 1.0, 0.5)):
    lam, delta, gamma = params
    return {'case': case, 'lambda': lam, 'delta': delta, 'gamma': gamma, 'abs_z': abs_z,
            'passed': passed}


class TestParameterPoints:
    """Test parameter point generation."""

    def test_random_points_in_box(self, rng):
        points = random_points(rng, 50)
        assert len(points) == 50
        assert all(LAMBDA_RANGE[0] <= p.lam <= LAMBDA_RANGE[1] for p in points)
        assert all(GAMMA_RANGE[0] <= p.gamma <= GAMMA_RANGE[1] for p in points)

    def test_negative_count(self, rng):
        with pytest.raises(ParameterError):
            random_points(rng, -1)

    def test_grid(self):
        grid = ParameterGrid([0.5, 1.0], [1.0], [0.0, 0.5, 1.0])
        assert grid.count() == 6
        assert Params(1.0, 1.0, 0.5) in grid.generate()

    def test_small_instances(self):
        instances = small_instances()
        assert len(instances) == 6
        assert {i.lattice.n_vertices for i in instances} == {1, 2, 3}
        assert instances[0].region.total_measure == pytest.approx(instances[0].beta)


class TestSummaries:
    """Test ranking and the pass-rate verdict."""

    def test_rank_by_worst_z(self):
        records = [_record('a', 0.5, True), _record('b', 2.5, True), _record('a', 3.5, False)]
        ranked = rank_cases(records)
        assert [r['case'] for r in ranked] == ['a', 'b']
        assert ranked[0]['rank'] == 1
        assert ranked[0]['trials'] == 2
        assert ranked[0]['passed'] is False
        assert ranked[1]['passed'] is True

    def test_all_passing(self):
        result = summarize('unit', [_record(f'c{i}', 0.1, True) for i in range(10)])
        assert result.passed
        assert result.summary['pass_rate'] == 1.0
        assert result.to_dict()['summary']['cases'] == 10

    def test_many_failures(self):
        records = [_record(f'c{i}', 5.0, i % 2 == 0) for i in range(10)]
        result = summarize('unit', records)
        assert not result.passed
        assert result.summary['passes'] == 5

    def test_empty_battery_fails(self):
        assert not summarize('unit', []).passed

    def test_z_against_exact_estimate(self):
        assert _z_against(Estimate.exact(0.5), 0.5) == 0.0
        assert _z_against(Estimate.exact(0.6), 0.5) == math.inf
        assert _z_against(Estimate(0.6, 0.05, 10), 0.5) == pytest.approx(2.0)


class TestOracleBattery:
    def test_pair_points(self):
        x, y = pair_points(Instance('3 path', Lattice.chain(3), 1.5))
        assert x == Point(0, 0.0)
        assert y == Point(2, 0.5)

    def test_oracle_case_record(self, rng):
        instance = Instance('1 vertex', Lattice.chain(1), 1.0)
        params = Params(*PARAM_POINTS['balanced'])
        record = oracle_case(instance, params, 500, 2003, rng)
        assert record['seed_index'] == 3
        assert record['case'] == '1 vertex #2'
        assert record['magnetization_exact'] == pytest.approx(
            oracle.single_spin_magnetization(1.0, params.delta, params.gamma))
        assert record['abs_z'] == max(abs(record['z_magnetization']), abs(record['z_two_point']))


class TestSwitchingBatteries:
    """Test case generation and the exact switch-map checks."""

    def test_switching_cases(self, rng):
        cases = switching_cases(rng, count=6, with_predicate=2)
        assert len(cases) == 6
        assert all(c.predicate and c.instance.lattice.n_vertices == 2 for c in cases[:2])
        assert not any(c.predicate for c in cases[2:])

    def test_too_many_predicate_cases(self, rng):
        with pytest.raises(ParameterError):
            switching_cases(rng, count=2, with_predicate=3)

    def test_switch_map_trial(self, rng):
        instance = Instance('2 vertex', Lattice.chain(2), 1.0)
        record = switch_map_trial(instance, Params(*PARAM_POINTS['balanced']), rng)
        assert record['involution']
        assert record['union']
        assert record['sources']
        assert record['passed']

    def test_switch_map_battery(self, rng):
        result = run_switch_map_battery(rng, n_triples=25, n_points=2, chunk=10)
        assert result.summary['trials'] == 25
        assert result.passed


class TestSeparatingBand:
    def test_band_layout(self, rng):
        instance = Instance('2 vertex', Lattice.chain(2), 2.0)
        separator, a, b = separating_band(instance, rng, 0.1)
        assert len(separator) == 4
        assert all(seg.end - seg.start == pytest.approx(0.1) for seg in separator)
        for point in (a, b):
            assert not any(seg.vertex == point.vertex and seg.start <= point.time <= seg.end
                           for seg in separator)

    def test_band_too_wide(self, rng):
        with pytest.raises(ParameterError):
            separating_band(Instance('1 vertex', Lattice.chain(1), 0.5), rng, 0.2)


class TestPDIBattery:
    """Test the main PDI battery and the field-exponent slope."""

    RECORD = {'case': 'box', 'lambda': 1.0, 'delta': 1.0, 'gamma': 0.5, 'abs_z': 0.0, 'passed': True}

    def test_pdi_case_record(self, rng):
        instance = Instance('3-ring', Lattice(1, 1, PERIODIC), 1.0)
        record = pdi_case(instance, Params(*PARAM_POINTS['balanced']), 2000, rng,
                          quadrature=Quadrature(GRID, 0.25))
        assert record['case'] == '3-ring'
        assert record['abs_z'] == max(0.0, -record['slack_z'])
        assert record['passed'] == (0.0 <= record['slack'] + 3.0 * record['slack_se'])
        assert {'term_field', 'term_cubic', 'term_bridges', 'term_deaths'} <= set(record)

    def test_default_instance(self):
        assert PDI_INSTANCE.lattice.n_vertices == 5
        assert PDI_INSTANCE.beta == 1.0

    def test_critical_slope_passes(self, rng, mocker):
        curve = [Estimate(g ** (1 / 15), 0.01, 100) for g in FIELD_GAMMAS]
        mocker.patch('battery.magnetization_curve', return_value=curve)
        result = field_exponent_check(rng)
        assert result['slope']['value'] == pytest.approx(1 / 15)
        assert result['passed']

    def test_linear_response_fails(self, rng, mocker):
        curve = [Estimate(0.5 * g, 0.001, 100) for g in FIELD_GAMMAS]
        mocker.patch('battery.magnetization_curve', return_value=curve)
        result = field_exponent_check(rng)
        assert result['slope']['value'] == pytest.approx(1.0)
        assert not result['passed']

    def test_battery_needs_slope(self, rng, mocker):
        mocker.patch('battery.pdi_case', return_value=dict(self.RECORD))
        mocker.patch('battery.field_exponent_check', return_value={'passed': False})
        result = run_pdi_battery(rng, n_points=5)
        assert result.summary['trials'] == 5
        assert result.summary['field_exponent'] == {'passed': False}
        assert not result.passed

    def test_battery_without_slope(self, rng, mocker):
        mocker.patch('battery.pdi_case', return_value=dict(self.RECORD))
        field = mocker.patch('battery.field_exponent_check')
        result = run_pdi_battery(rng, n_points=2, field_sweeps=0)
        field.assert_not_called()
        assert result.summary['field_exponent'] is None
        assert result.passed
