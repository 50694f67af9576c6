"""
Unit tests for configuration loading and the typed run view.
"""

import pytest
import yaml

from domain import PERIODIC, Point
from exceptions import ConfigurationError, ParameterError
from observables import GRID
from st_ising import (DEFAULT_CONFIG, RunConfig, load_config, parse_point, parse_points, rho_grid)


class TestLoadConfig:
    """Test YAML loading merged over the defaults."""

    def test_load_valid_config(self, sample_config, tmp_path):
        path = tmp_path / 'config.yaml'
        path.write_text(yaml.dump(sample_config))
        config = load_config(path)
        assert config['params'] == sample_config['params']
        assert config['sampling']['seed'] == 7

    def test_config_merge_with_defaults(self, tmp_path):
        path = tmp_path / 'config.yaml'
        path.write_text(yaml.dump({'params': {'gamma': 0.0}}))
        config = load_config(path)
        assert config['params']['gamma'] == 0.0
        assert config['params']['lambda'] == DEFAULT_CONFIG['params']['lambda']
        assert config['lattice'] == DEFAULT_CONFIG['lattice']

    def test_defaults_not_mutated(self, tmp_path):
        path = tmp_path / 'config.yaml'
        path.write_text(yaml.dump({'params': {'delta': 9.0}}))
        load_config(path)
        assert DEFAULT_CONFIG['params']['delta'] != 9.0

    def test_missing_explicit_config(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / 'missing.yaml')

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / 'config.yaml'
        path.write_text("params: [unclosed")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_non_mapping(self, tmp_path):
        path = tmp_path / 'config.yaml'
        path.write_text("- just\n- a list\n")
        with pytest.raises(ConfigurationError):
            load_config(path)

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / 'config.yaml'
        path.write_text("")
        assert load_config(path) == DEFAULT_CONFIG


class TestRunConfig:
    """Test the typed view of one run."""

    def test_builders(self, sample_config):
        run = RunConfig.from_config(sample_config, 'estimate')
        assert run.build_lattice().boundary == PERIODIC
        assert run.build_region().N == 3
        assert run.build_params().gamma == 0.5
        assert run.quadrature.kind == GRID
        assert run.quadrature.h_fraction == 0.125
        assert run.seed == 7
        assert run.n_samples == 400

    def test_artifact_path(self, sample_config, tmp_path):
        sample_config['output']['dir'] = str(tmp_path)
        run = RunConfig.from_config(sample_config, 'estimate')
        assert run.artifact('estimate', 'csv') == tmp_path / 'test_estimate.csv'

    def test_hash_covers_options(self, sample_config):
        plain = RunConfig.from_config(sample_config, 'verify', {'target': 'ghs'})
        other = RunConfig.from_config(sample_config, 'verify', {'target': 'pdi'})
        assert plain.hash == RunConfig.from_config(sample_config, 'verify', {'target': 'ghs'}).hash
        assert plain.hash != other.hash

    def test_sections_are_copied(self, sample_config):
        run = RunConfig.from_config(sample_config, 'estimate')
        run.params['gamma'] = 0.0
        assert sample_config['params']['gamma'] == 0.5


class TestParsing:
    def test_parse_point(self):
        assert parse_point('2:0.25') == Point(2, 0.25)

    @pytest.mark.parametrize("text", ['2', '2:x', 'a:0.5', '1:2:3'])
    def test_bad_point(self, text):
        with pytest.raises(ParameterError):
            parse_point(text)

    def test_parse_points(self):
        assert parse_points('0:0.1,1:0.5') == (Point(0, 0.1), Point(1, 0.5))
        assert parse_points('') == ()

    def test_rho_grid(self, sample_config):
        assert rho_grid(sample_config['scan']) == [1.5, 2.0, 2.5]
