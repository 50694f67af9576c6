"""
Unit tests for configuration validation.
"""

import copy

import pytest

from config_validator import (ConfigValidator, ValidationError, ValidationResult,
                              validate_config)
from exceptions import ConfigurationError


def _fields(issues):
    return {issue.field for issue in issues}


class TestConfigValidator:
    """Test the ConfigValidator class."""

    def test_sample_config_valid(self, sample_config):
        result = ConfigValidator().validate(sample_config)
        assert result.is_valid is True
        assert not result.has_warnings

    def test_missing_required_section(self, sample_config):
        del sample_config['params']
        result = ConfigValidator().validate(sample_config)
        assert result.is_valid is False
        assert 'config.params' in _fields(result.errors)

    def test_missing_beta(self, sample_config):
        del sample_config['time']['beta']
        result = ConfigValidator().validate(sample_config)
        assert 'time.beta' in _fields(result.errors)

    def test_half_width_must_be_integer(self, sample_config):
        sample_config['lattice']['half_width'] = 1.5
        result = ConfigValidator().validate(sample_config)
        error = next(e for e in result.errors if e.field == 'lattice.half_width')
        assert error.expected_type == 'int'

    def test_bool_is_not_a_number(self, sample_config):
        sample_config['params']['gamma'] = True
        result = ConfigValidator().validate(sample_config)
        assert 'params.gamma' in _fields(result.errors)

    def test_beta_out_of_range(self, sample_config):
        sample_config['time']['beta'] = 0.0
        result = ConfigValidator().validate(sample_config)
        assert 'time.beta' in _fields(result.errors)

    def test_negative_intensity(self, sample_config):
        sample_config['params']['delta'] = -1.0
        result = ConfigValidator().validate(sample_config)
        assert 'params.delta' in _fields(result.errors)

    def test_missing_intensity_warns(self, sample_config):
        del sample_config['params']['gamma']
        result = ConfigValidator().validate(sample_config)
        assert result.is_valid
        assert 'params.gamma' in _fields(result.warnings)

    @pytest.mark.parametrize("section, key, value", [
        ('lattice', 'boundary', 'twisted'),
        ('time', 'topology', 'torus'),
        ('logging', 'level', 'VERBOSE'),
    ])
    def test_invalid_choices(self, sample_config, section, key, value):
        sample_config[section][key] = value
        result = ConfigValidator().validate(sample_config)
        assert f'{section}.{key}' in _fields(result.errors)

    def test_seed_validation(self, sample_config):
        sample_config['sampling']['seed'] = -3
        assert 'sampling.seed' in _fields(ConfigValidator().validate(sample_config).errors)

    def test_missing_seed_warns(self, sample_config):
        del sample_config['sampling']['seed']
        result = ConfigValidator().validate(sample_config)
        assert result.is_valid
        assert 'sampling.seed' in _fields(result.warnings)

    def test_unknown_section_warns(self, sample_config):
        sample_config['telemetry'] = {}
        result = ConfigValidator().validate(sample_config)
        assert result.is_valid
        assert 'config.telemetry' in _fields(result.warnings)

    def test_scan_sizes(self, sample_config):
        sample_config['scan']['sizes'] = [4, 0]
        assert 'scan.sizes' in _fields(ConfigValidator().validate(sample_config).errors)
        sample_config['scan']['sizes'] = [4]
        result = ConfigValidator().validate(sample_config)
        assert result.is_valid
        assert 'scan.sizes' in _fields(result.warnings)

    def test_decay_displacements(self, sample_config):
        sample_config['decay']['displacements'] = [1, -2]
        assert 'decay.displacements' in _fields(ConfigValidator().validate(sample_config).errors)

    def test_output_must_be_strings(self, sample_config):
        sample_config['output']['dir'] = 5
        assert 'output.dir' in _fields(ConfigValidator().validate(sample_config).errors)


class TestCrossFields:
    """Test relationships between fields."""

    def test_periodic_single_vertex(self, sample_config):
        sample_config['lattice']['half_width'] = 0
        result = ConfigValidator().validate(sample_config)
        assert 'lattice.boundary' in _fields(result.errors)

    def test_free_single_vertex_allowed(self, sample_config):
        sample_config['lattice'].update(half_width=0, boundary='free')
        assert ConfigValidator().validate(sample_config).is_valid

    def test_large_lattice_warns(self, sample_config):
        sample_config['lattice']['half_width'] = 2
        result = ConfigValidator().validate(sample_config)
        assert result.is_valid
        assert 'lattice' in _fields(result.warnings)

    def test_rho_grid_order(self, sample_config):
        sample_config['scan'].update(rho_min=2.5, rho_max=1.5)
        assert 'scan.rho_max' in _fields(ConfigValidator().validate(sample_config).errors)

    def test_rho_step_positive(self, sample_config):
        sample_config['scan']['rho_step'] = 0.0
        assert 'scan.rho_step' in _fields(ConfigValidator().validate(sample_config).errors)

    def test_long_burn_in_warns(self, sample_config):
        sample_config['sampling'].update(sweeps=10, burn_in=50)
        result = ConfigValidator().validate(sample_config)
        assert result.is_valid
        assert 'sampling.burn_in' in _fields(result.warnings)


class TestValidationResult:
    def test_issue_lists(self):
        error = ValidationError(field='a', message='bad')
        warning = ValidationError(field='b', message='odd', severity='warning')
        result = ValidationResult(is_valid=False, errors=[error], warnings=[warning])
        assert result.has_errors
        assert result.has_warnings
        assert result.get_all_issues() == [error, warning]


class TestReporting:
    """Test report formatting and the convenience wrappers."""

    def test_format_report(self, sample_config):
        sample_config['time']['beta'] = -1.0
        validator = ConfigValidator()
        report = validator.format_report(validator.validate(sample_config))
        assert 'CONFIGURATION VALIDATION REPORT' in report
        assert 'time.beta' in report
        assert 'Current: -1.0' in report

    def test_validate_config_quiet(self, sample_config, capsys):
        assert validate_config(sample_config, quiet=True) is True
        assert capsys.readouterr().out == ''

    def test_validate_config_strict(self, sample_config, capsys):
        config = copy.deepcopy(sample_config)
        config['params']['lambda'] = 'strong'
        with pytest.raises(ConfigurationError):
            validate_config(config, strict=True)
        assert 'params.lambda' in capsys.readouterr().out
