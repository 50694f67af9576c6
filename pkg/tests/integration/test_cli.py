"""
Integration tests for the st_ising command line: config files, artifacts and exit codes.
"""

import copy
import json

import pytest
import yaml

from reports import read_csv
from st_ising import EXIT_CAPABILITY, EXIT_FAILED, EXIT_OK, EXIT_USAGE, main


@pytest.fixture
def write_config(sample_config, tmp_path):
    """Write the sample configuration, with section overrides, to a YAML file."""
    def _write(**sections):
        config = copy.deepcopy(sample_config)
        config['output']['dir'] = str(tmp_path / 'results')
        for name, values in sections.items():
            config[name].update(values)
        path = tmp_path / 'config.yaml'
        path.write_text(yaml.dump(config))
        return str(path)
    return _write


@pytest.fixture
def results(tmp_path):
    return tmp_path / 'results'


class TestUsage:
    """Test argument and configuration errors."""

    def test_no_command(self):
        assert main([]) == EXIT_USAGE

    def test_help(self, capsys):
        assert main(['--help']) == EXIT_OK
        assert 'Examples:' in capsys.readouterr().out

    def test_unknown_verify_target(self, write_config):
        assert main(['verify', 'lemma', '-c', write_config()]) == EXIT_USAGE

    def test_missing_config(self, tmp_path):
        assert main(['estimate', '-c', str(tmp_path / 'missing.yaml')]) == EXIT_USAGE

    def test_invalid_config(self, write_config, capsys):
        assert main(['estimate', '-c', write_config(time={'beta': -1.0})]) == EXIT_USAGE
        assert 'time.beta' in capsys.readouterr().out

    def test_validate_config(self, write_config, capsys):
        assert main(['estimate', '--validate-config', '-c', write_config()]) == EXIT_OK
        assert 'Configuration is valid' in capsys.readouterr().out

    def test_reads_sys_argv(self, write_config, mocker, capsys):
        mocker.patch('sys.argv', ['st_ising.py', 'estimate', '--validate-config', '-c',
                                  write_config()])
        assert main() == EXIT_OK
        assert 'Configuration is valid' in capsys.readouterr().out

    def test_validate_config_with_errors(self, write_config):
        path = write_config(logging={'level': 'LOUD'})
        assert main(['estimate', '--validate-config', '-c', path]) == EXIT_USAGE

    def test_bad_point(self, write_config):
        assert main(['estimate', '-c', write_config(), '--x', 'origin']) == EXIT_USAGE


class TestEstimate:
    def test_magnetization_csv(self, write_config, results, capsys):
        code = main(['estimate', '-c', write_config(), '--observable', 'magnetization',
                     '--samples', '200', '--seed', '11'])
        assert code == EXIT_OK
        frame = read_csv(results / 'test_estimate.csv')
        assert list(frame['observable']) == ['magnetization']
        assert frame['seed'].iloc[0] == 11
        assert 'ESTIMATES' in capsys.readouterr().out

    def test_same_seed_same_artifact(self, write_config, results):
        path = write_config()
        args = ['estimate', '-c', path, '--observable', 'correlation', '--samples', '200']
        assert main(args) == EXIT_OK
        first = (results / 'test_estimate.csv').read_bytes()
        assert main(args) == EXIT_OK
        assert (results / 'test_estimate.csv').read_bytes() == first

    def test_out_override(self, write_config, tmp_path):
        out = tmp_path / 'elsewhere'
        code = main(['estimate', '-c', write_config(), '--observable', 'magnetization',
                     '--samples', '100', '--out', str(out)])
        assert code == EXIT_OK
        assert (out / 'test_estimate.csv').exists()


class TestVerify:
    """Test single verification runs."""

    def test_switching_report(self, write_config, results):
        path = write_config(lattice={'half_width': 0, 'boundary': 'free'},
                            checks={'sigma_buffer': 5.0})
        code = main(['verify', 'switching', '-c', path, '--x', '0:0.1', '--y', '0:0.6',
                     '--samples', '2000'])
        assert code == EXIT_OK
        report = json.loads((results / 'test_switching.json').read_text())
        assert report['passed'] is True
        assert report['provenance']['seed'] == 7
        assert report['config']['options']['target'] == 'switching'

    def test_partition_capability(self, write_config):
        path = write_config(lattice={'half_width': 2})
        assert main(['verify', 'partition', '-c', path, '--samples', '10']) == EXIT_CAPABILITY

    def test_pdi_needs_periodic_box(self, write_config):
        path = write_config(lattice={'half_width': 1, 'boundary': 'free'})
        assert main(['verify', 'pdi', '-c', path, '--samples', '10']) == EXIT_USAGE

    def test_pdi_battery_points(self, write_config, results):
        code = main(['verify', 'pdi', '-c', write_config(), '--points', '1', '--field-sweeps', '0',
                     '--samples', '1000'])
        assert code in (EXIT_OK, EXIT_FAILED)
        assert len(read_csv(results / 'test_pdi_battery.csv')) == 1
        report = json.loads((results / 'test_pdi_battery.json').read_text())
        assert report['summary']['field_exponent'] is None


class TestOracleCompare:
    def test_small_ring(self, write_config, results):
        path = write_config(checks={'sigma_buffer': 5.0})
        assert main(['oracle-compare', '-c', path, '--samples', '4000']) == EXIT_OK
        frame = read_csv(results / 'test_oracle_compare.csv')
        assert set(frame['observable']) == {'magnetization', 'two_point'}
        assert (results / 'test_oracle_compare.json').exists()

    def test_too_large_for_dense_oracle(self, write_config):
        path = write_config(lattice={'dimension': 2, 'half_width': 2})
        assert main(['oracle-compare', '-c', path, '--samples', '10']) == EXIT_CAPABILITY


class TestMonteCarloCommands:
    """Test the chain-based subcommands."""

    def test_decay_and_resume(self, write_config, results):
        path = write_config(sampling={'sweeps': 300, 'burn_in': 50})
        assert main(['decay', '-c', path]) == EXIT_OK
        checkpoint = results / 'test_decay.ckpt'
        assert checkpoint.exists()
        assert len(read_csv(results / 'test_decay.csv')) == 3
        assert main(['decay', '-c', path, '--resume', str(checkpoint)]) == EXIT_OK

    def test_resume_missing_checkpoint(self, write_config, tmp_path):
        path = write_config()
        assert main(['decay', '-c', path, '--resume', str(tmp_path / 'none.ckpt')]) == EXIT_FAILED

    def test_scan_writes_table(self, write_config, results):
        code = main(['scan-critical', '-c', write_config()])
        assert code in (EXIT_OK, EXIT_FAILED)
        frame = read_csv(results / 'test_scan.csv')
        assert len(frame) == 6
        assert set(frame['size']) == {4, 6}
