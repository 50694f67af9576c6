#!/usr/bin/env python3
"""
Space-time quantum Ising engine
Estimates correlations through random parities, verifies the correlation
identities and inequalities, and scans the critical point by cluster Monte Carlo.
"""

import argparse
import copy
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml
from termcolor import colored

import battery
import oracle
import reports
from backbone import verify_backbone_representation
from config_validator import validate_config
from domain import CIRCLE, PERIODIC, Lattice, Params, Point, Region, TimeDomain
from estimates import Estimate, z_score
from exceptions import (CapabilityError, CheckpointError, ConfigurationError, ConsistencyError,
                        InsufficientDataError, InvariantViolation, ParameterError,
                        PreconditionError, SpaceTimeIsingError)
from logger import get_logger
from mcmc import decay_profile, load_checkpoint, scan_critical
from observables import (GRID, RANDOM, Quadrature, check_ghs, check_main_pdi, check_simon_lieb,
                         default_origin, derivative_estimators, check_derivative_bounds,
                         free_boundary_susceptibility, magnetization, mass_estimate, susceptibility,
                         truncated_two_point, two_point)
from parity import SourceSet, verify_partition_identity
from sampling import make_rng, spawn_streams
from switching import verify_switching

# Default config path
DEFAULT_CONFIG_PATH = Path(__file__).parent / "config.yaml"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_CAPABILITY = 3

VERIFY_TARGETS = ('switching', 'ghs', 'simon-lieb', 'pdi', 'derivatives', 'partition', 'backbone',
                  'switch-map', 'inequalities')
ESTIMATE_OBSERVABLES = ('magnetization', 'correlation', 'truncated', 'susceptibility',
                        'free-susceptibility')

# Default configuration (used if no config file)
DEFAULT_CONFIG = {
    'lattice': {
        'dimension': 1,
        'half_width': 1,
        'boundary': PERIODIC
    },
    'time': {
        'beta': 1.0,
        'topology': CIRCLE
    },
    'params': {
        'lambda': 1.0,
        'delta': 1.0,
        'gamma': 0.5
    },
    'sampling': {
        'n_samples': 20000,
        'sweeps': 2000,
        'burn_in': 200,
        'seed': 12345,
        'workers': 1,
        'batch_size': 500
    },
    'checks': {
        'quadrature_h_fraction': 1 / 64,
        'sigma_buffer': 3.0,
        'fd_step': 1e-4,
        'fd_rel_tol': 0.05
    },
    'scan': {
        'sizes': [8, 16, 32],
        'aspect': 1.0,
        'rho_min': 1.5,
        'rho_max': 2.5,
        'rho_step': 0.1,
        'bootstrap': 200
    },
    'decay': {
        'half_width': 16,
        'beta': 16.0,
        'rho': 1.0,
        'displacements': [1, 2, 3, 4, 5, 6, 8]
    },
    'output': {
        'dir': 'results',
        'prefix': 'st_ising'
    },
    'logging': {
        'enabled': True,
        'level': 'INFO',
        'log_dir': 'logs'
    }
}


def _merge(base: Dict, override: Dict) -> Dict:
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def load_config(config_path=None) -> Dict[str, Any]:
    """Load configuration from YAML file, merged over the defaults."""
    explicit = config_path is not None
    path = Path(config_path) if explicit else DEFAULT_CONFIG_PATH
    config = copy.deepcopy(DEFAULT_CONFIG)
    logger = get_logger()

    if not path.exists():
        if explicit:
            logger.log_config_load(path, False, "file not found")
            raise ConfigurationError(f"Config file not found: {path}")
        return config
    try:
        with open(path, 'r') as f:
            user_config = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        logger.log_config_load(path, False, str(e))
        raise ConfigurationError(f"Cannot read config file {path}: {e}") from e
    if not isinstance(user_config, dict):
        raise ConfigurationError(f"Config file {path} must hold a mapping of sections")
    logger.log_config_load(path, True)
    return _merge(config, user_config)


@dataclass
class RunConfig:
    """Typed view of one run: merged configuration plus subcommand options."""
    subcommand: str
    lattice: Dict[str, Any]
    time: Dict[str, Any]
    params: Dict[str, Any]
    sampling: Dict[str, Any]
    checks: Dict[str, Any]
    scan: Dict[str, Any]
    decay: Dict[str, Any]
    output: Dict[str, Any]
    logging: Dict[str, Any]
    options: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: Dict[str, Any], subcommand: str,
                    options: Optional[Dict[str, Any]] = None) -> "RunConfig":
        sections = {name: copy.deepcopy(config.get(name, {})) for name in
                    ('lattice', 'time', 'params', 'sampling', 'checks', 'scan', 'decay', 'output', 'logging')}
        return cls(subcommand=subcommand, options=dict(options or {}), **sections)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def hash(self) -> str:
        return reports.config_hash(self.to_dict())

    @property
    def seed(self) -> Optional[int]:
        return self.sampling.get('seed')

    @property
    def workers(self) -> int:
        return int(self.sampling.get('workers', 1))

    @property
    def n_samples(self) -> int:
        return int(self.sampling.get('n_samples', 20000))

    @property
    def batch_size(self) -> int:
        return int(self.sampling.get('batch_size', 500))

    @property
    def sigma_buffer(self) -> float:
        return float(self.checks.get('sigma_buffer', 3.0))

    @property
    def quadrature(self) -> Quadrature:
        return Quadrature(GRID, float(self.checks.get('quadrature_h_fraction', 1 / 64)))

    def build_lattice(self) -> Lattice:
        return Lattice(int(self.lattice['dimension']), int(self.lattice['half_width']),
                       self.lattice.get('boundary', PERIODIC))

    def build_region(self) -> Region:
        return Region.box(self.build_lattice(),
                          TimeDomain(float(self.time['beta']), self.time.get('topology', CIRCLE)))

    def build_params(self) -> Params:
        return Params(float(self.params['lambda']), float(self.params['delta']),
                      float(self.params.get('gamma', 0.0)))

    def artifact(self, name: str, suffix: str) -> Path:
        out_dir = Path(self.output.get('dir', 'results'))
        return out_dir / f"{self.output.get('prefix', 'st_ising')}_{name}.{suffix}"


def parse_point(text: str) -> Point:
    """'vertex:time' -> Point."""
    try:
        vertex, time = text.split(':')
        return Point(int(vertex), float(time))
    except ValueError:
        raise ParameterError(f"expected VERTEX:TIME, got '{text}'")


def parse_points(text: str) -> Tuple[Point, ...]:
    if not text:
        return ()
    return tuple(parse_point(item) for item in text.split(','))


def _option_point(run: RunConfig, key: str, default: Point) -> Point:
    value = run.options.get(key)
    return parse_point(value) if value else default


def _far_point(region: Region, fraction: float = 0.5) -> Point:
    return Point(region.lattice.n_vertices - 1, region.beta * fraction)


def _finish(run: RunConfig, name: str, payload: Dict[str, Any], passed: Optional[bool]) -> bool:
    if passed is not None:
        scalars = {k: v for k, v in payload.items() if not isinstance(v, (list, dict))}
        get_logger().log_verification(name, passed, scalars)
    path = reports.write_json(run.artifact(name, 'json'), payload, run.to_dict(), run.seed)
    print(reports.format_verification(name, payload, passed))
    print(colored(f"\nReport written to {path}", "green"))
    return passed is not False


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def run_estimate(run: RunConfig) -> bool:
    region, params = run.build_region(), run.build_params()
    rng = make_rng(run.seed)
    which = run.options.get('observable', 'all')
    names = ESTIMATE_OBSERVABLES[:4] if which == 'all' else (which,)
    x = _option_point(run, 'x', default_origin(region))
    y = _option_point(run, 'y', _far_point(region))
    streams = dict(zip(ESTIMATE_OBSERVABLES, spawn_streams(rng, len(ESTIMATE_OBSERVABLES))))
    common = {'workers': run.workers, 'batch_size': run.batch_size}

    rows = []
    for name in names:
        stream = streams[name]
        if name == 'magnetization':
            est = magnetization(region, params, run.n_samples, stream, origin=x, **common)
        elif name == 'correlation':
            est = two_point(region, x, y, params, run.n_samples, stream, **common)
        elif name == 'truncated':
            est = truncated_two_point(region, x, y, params, run.n_samples, stream, **common)
        elif name == 'susceptibility':
            kind = run.options.get('quadrature', GRID)
            quadrature = Quadrature(kind, run.quadrature.h_fraction)
            est = susceptibility(region, params, run.n_samples, quadrature, stream, origin=x, **common)
        else:
            est = free_boundary_susceptibility(region.lattice, region.beta, params.replace(gamma=0.0),
                                               run.n_samples, stream, quadrature=run.quadrature,
                                               workers=run.workers)
        get_logger().log_estimate(name, est, params.to_dict())
        rows.append({'observable': name, 'estimate': est, 'x': f"{x.vertex}:{x.time:g}",
                     'y': f"{y.vertex}:{y.time:g}" if name in ('correlation', 'truncated') else '',
                     'beta': region.beta, 'n': region.lattice.half_width,
                     'd': region.lattice.dimension, **params.to_dict()})

    path = reports.write_csv(run.artifact('estimate', 'csv'), rows, run.to_dict(), run.seed)
    print(reports.format_estimates("ESTIMATES", [{'name': r['observable'], 'estimate': r['estimate']}
                                                  for r in rows]))
    print(colored(f"\nEstimates written to {path}", "green"))
    return True


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _battery_payload(result: battery.BatteryResult) -> Dict[str, Any]:
    return {'summary': result.summary, 'ranked': result.ranked}


def _write_battery(run: RunConfig, name: str, result: battery.BatteryResult) -> bool:
    reports.write_csv(run.artifact(name, 'csv'), result.records, run.to_dict(), run.seed)
    reports.write_json(run.artifact(name, 'json'), _battery_payload(result), run.to_dict(), run.seed)
    print(reports.format_battery(name.replace('_', ' ').upper(), result.ranked, result.summary))
    return result.passed


def verify_switching_cmd(run: RunConfig, rng: np.random.Generator) -> bool:
    if run.options.get('battery'):
        result = battery.run_switching_battery(rng, count=int(run.options.get('cases') or 20),
                                               n_samples=run.n_samples, workers=run.workers,
                                               sigma_buffer=run.sigma_buffer)
        return _write_battery(run, 'switching_battery', result)
    region, params = run.build_region(), run.build_params()
    x = _option_point(run, 'x', default_origin(region))
    y = _option_point(run, 'y', _far_point(region))
    A = SourceSet.of(x, y)
    B = SourceSet.of(*parse_points(run.options.get('sources_b') or ''))
    report = verify_switching(region, A, B, x, y, params, run.n_samples, rng, workers=run.workers,
                              batch_size=run.batch_size, sigma_buffer=run.sigma_buffer)
    return _finish(run, 'switching', report.to_dict(), report.passed)


def verify_ghs_cmd(run: RunConfig, rng: np.random.Generator) -> bool:
    region, params = run.build_region(), run.build_params()
    x = _option_point(run, 'x', default_origin(region))
    y = _option_point(run, 'y', _far_point(region, 1 / 3))
    z = _option_point(run, 'z', _far_point(region, 2 / 3))
    report = check_ghs(region, x, y, z, params, run.n_samples, rng, workers=run.workers,
                       sigma_buffer=run.sigma_buffer)
    return _finish(run, 'ghs', report.to_dict(), report.passed)


def verify_simon_lieb_cmd(run: RunConfig, rng: np.random.Generator) -> bool:
    region, params = run.build_region(), run.build_params()
    if not region.time.is_circle:
        raise ParameterError("the separating bands are placed on the time circle")
    epsilon = float(run.options.get('epsilon') or 0.1)
    instance = battery.Instance('configured', region.lattice, region.beta)
    band_stream, check_stream = spawn_streams(rng, 2)
    separator, a, b = battery.separating_band(instance, band_stream, epsilon)
    report = check_simon_lieb(region, a, b, separator, epsilon, params.replace(gamma=0.0), run.n_samples,
                              check_stream, quadrature=run.quadrature, workers=run.workers,
                              sigma_buffer=run.sigma_buffer)
    payload = report.to_dict()
    payload['separator'] = [list(s) for s in separator]
    payload['a'], payload['b'] = list(a), list(b)
    return _finish(run, 'simon_lieb', payload, report.passed)


def verify_pdi_cmd(run: RunConfig, rng: np.random.Generator) -> bool:
    kind = run.options.get('derivative_quadrature') or RANDOM
    if run.options.get('battery') or run.options.get('points'):
        field_sweeps = run.options.get('field_sweeps')
        result = battery.run_pdi_battery(
            rng, n_points=int(run.options.get('points') or 5), n_samples=run.n_samples,
            quadrature=run.quadrature, derivative_quadrature=Quadrature(kind, run.quadrature.h_fraction),
            workers=run.workers, sigma_buffer=run.sigma_buffer,
            field_sweeps=int(run.sampling['sweeps']) if field_sweeps is None else int(field_sweeps),
            rho_c=float(run.options.get('rho_c') or battery.CRITICAL_RATIO))
        passed = _write_battery(run, 'pdi_battery', result)
        field = result.summary.get('field_exponent')
        if field:
            slope = field['slope']
            print(f"  Field exponent slope: {slope['value']:.3f} +/- {slope['std_error']:.3f} "
                  f"(limit {field['limit']:.3f})")
        return passed

    region, params = run.build_region(), run.build_params()
    report = check_main_pdi(region, params, run.n_samples, rng, quadrature=run.quadrature,
                            derivative_quadrature=Quadrature(kind, run.quadrature.h_fraction),
                            workers=run.workers, sigma_buffer=run.sigma_buffer)
    return _finish(run, 'pdi', report.to_dict(), report.passed)


def verify_derivatives_cmd(run: RunConfig, rng: np.random.Generator) -> bool:
    fd_step = float(run.checks.get('fd_step', 1e-4))
    rel_tol = float(run.checks.get('fd_rel_tol', 0.05))
    if run.options.get('battery'):
        result = battery.run_derivative_battery(rng, n_points=int(run.options.get('points') or 5),
                                                n_samples=run.n_samples, workers=run.workers,
                                                fd_step=fd_step, rel_tol=rel_tol,
                                                sigma_buffer=run.sigma_buffer)
        return _write_battery(run, 'derivative_battery', result)

    region, params = run.build_region(), run.build_params()
    kind = run.options.get('derivative_quadrature') or RANDOM
    stream_d, stream_m = spawn_streams(rng, 2)
    derivs = derivative_estimators(region, params, run.n_samples, stream_d,
                                   quadrature=Quadrature(kind, run.quadrature.h_fraction),
                                   workers=run.workers, batch_size=run.batch_size)
    M = magnetization(region, params, run.n_samples, stream_m, workers=run.workers)
    bounds = check_derivative_bounds(derivs, M, params, region.lattice.dimension, run.sigma_buffer)
    payload: Dict[str, Any] = {'magnetization': M.to_dict(),
                               'derivatives': {k: v.to_dict() for k, v in derivs.items()},
                               'bounds': bounds}
    passed = all(b['passed'] for b in bounds.values())
    if region.lattice.n_vertices <= oracle.MAX_VERTICES:
        exact = oracle.exact_derivatives(region, params, step=fd_step)
        comparison = {}
        for key, est in derivs.items():
            z = z_score(est, Estimate.exact(exact[key]))
            rel = abs(est.value - exact[key]) / abs(exact[key]) if exact[key] else abs(est.value)
            ok = rel <= rel_tol or abs(z) < run.sigma_buffer
            comparison[key] = {'exact': exact[key], 'z': z, 'relative_error': rel, 'passed': ok}
            passed = passed and ok
        payload['finite_differences'] = comparison
    return _finish(run, 'derivatives', payload, passed)


def verify_partition_cmd(run: RunConfig, rng: np.random.Generator) -> bool:
    region, params = run.build_region(), run.build_params()
    report = verify_partition_identity(region, params, run.n_samples, rng, workers=run.workers,
                                       n_conditional=int(run.options.get('conditional') or 0),
                                       sigma_buffer=run.sigma_buffer)
    return _finish(run, 'partition', report.to_dict(), report.passed)


def verify_backbone_cmd(run: RunConfig, rng: np.random.Generator) -> bool:
    region, params = run.build_region(), run.build_params()
    sources = parse_points(run.options.get('sources') or '')
    A = SourceSet.of(*sources) if sources else SourceSet.of(default_origin(region))
    report = verify_backbone_representation(region, A, params, run.n_samples, rng,
                                            inner=run.options.get('inner') or 'mc',
                                            workers=run.workers, batch_size=run.batch_size,
                                            sigma_buffer=run.sigma_buffer)
    return _finish(run, 'backbone', report.to_dict(), report.passed)


def verify_switch_map_cmd(run: RunConfig, rng: np.random.Generator) -> bool:
    result = battery.run_switch_map_battery(rng, n_triples=int(run.options.get('triples') or 10 ** 4),
                                            workers=run.workers)
    reports.write_json(run.artifact('switch_map', 'json'),
                       {'summary': result.summary,
                        'failures': [r for r in result.records if not r['passed']]},
                       run.to_dict(), run.seed)
    print(reports.format_battery("SWITCH MAP", result.ranked, result.summary))
    return result.passed


def verify_inequalities_cmd(run: RunConfig, rng: np.random.Generator) -> bool:
    result = battery.run_inequality_suite(rng, count=int(run.options.get('cases') or 10),
                                          n_samples=run.n_samples, quadrature=run.quadrature,
                                          workers=run.workers, sigma_buffer=run.sigma_buffer)
    return _write_battery(run, 'inequalities', result)


VERIFY_HANDLERS = {
    'switching': verify_switching_cmd,
    'ghs': verify_ghs_cmd,
    'simon-lieb': verify_simon_lieb_cmd,
    'pdi': verify_pdi_cmd,
    'derivatives': verify_derivatives_cmd,
    'partition': verify_partition_cmd,
    'backbone': verify_backbone_cmd,
    'switch-map': verify_switch_map_cmd,
    'inequalities': verify_inequalities_cmd,
}


def run_verify(run: RunConfig) -> bool:
    target = run.options['target']
    return VERIFY_HANDLERS[target](run, make_rng(run.seed))


# ---------------------------------------------------------------------------
# oracle-compare, scan-critical, decay
# ---------------------------------------------------------------------------

def run_oracle_compare(run: RunConfig) -> bool:
    rng = make_rng(run.seed)
    if run.options.get('battery'):
        result = battery.run_oracle_battery(rng, n_points=int(run.options.get('points') or 5),
                                            n_seeds=int(run.options.get('seeds') or 100),
                                            n_samples=run.n_samples, workers=run.workers,
                                            sigma_buffer=run.sigma_buffer)
        return _write_battery(run, 'oracle_battery', result)

    region, params = run.build_region(), run.build_params()
    if region.lattice.n_vertices > oracle.MAX_VERTICES:
        raise CapabilityError(f"the dense oracle handles at most {oracle.MAX_VERTICES} vertices, "
                              f"got {region.lattice.n_vertices}")
    x = _option_point(run, 'x', default_origin(region))
    y = _option_point(run, 'y', _far_point(region, 1 / 3))
    stream_m, stream_xy = spawn_streams(rng, 2)
    estimates = {
        'magnetization': ((x,), magnetization(region, params, run.n_samples, stream_m, origin=x,
                                              workers=run.workers)),
        'two_point': ((x, y), two_point(region, x, y, params, run.n_samples, stream_xy,
                                        workers=run.workers)),
    }
    rows = []
    for name, (sources, est) in estimates.items():
        exact = oracle.exact_correlation(region, params, list(sources))
        z = z_score(est, Estimate.exact(exact))
        rows.append({'observable': name, 'estimate': est, 'exact': exact, 'z': z,
                     'passed': abs(z) < run.sigma_buffer, **params.to_dict()})
    reports.write_csv(run.artifact('oracle_compare', 'csv'), rows, run.to_dict(), run.seed)
    passed = all(r['passed'] for r in rows)
    payload = {r['observable']: {'estimate': r['estimate'].to_dict(), 'exact': r['exact'], 'z': r['z']}
               for r in rows}
    return _finish(run, 'oracle_compare', payload, passed)


def rho_grid(scan: Dict[str, Any]) -> List[float]:
    lo, hi, step = float(scan['rho_min']), float(scan['rho_max']), float(scan['rho_step'])
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 12) for i in range(count)]


def run_scan(run: RunConfig) -> bool:
    rng = make_rng(run.seed)
    result = scan_critical(run.scan['sizes'], rho_grid(run.scan), int(run.sampling['sweeps']), rng,
                           aspect=float(run.scan.get('aspect', 1.0)),
                           burn_in=run.sampling.get('burn_in'),
                           n_boot=int(run.scan.get('bootstrap', 200)), workers=run.workers,
                           topology=run.time.get('topology', CIRCLE))
    reports.write_csv(run.artifact('scan', 'csv'), result.table.to_dict(orient='records'),
                      run.to_dict(), run.seed)
    payload = {'crossings': result.crossings, 'rho_c': result.rho_c.to_dict() if result.rho_c else None,
               'diagnostic': result.diagnostic}
    reports.write_json(run.artifact('scan', 'json'), payload, run.to_dict(), run.seed)
    print(reports.format_scan(payload))
    if result.rho_c is None:
        return False
    expect = run.options.get('expect')
    if expect:
        lo, hi = (float(v) for v in expect.split(','))
        return lo <= result.rho_c.value <= hi
    return True


def run_decay(run: RunConfig) -> bool:
    decay = run.decay
    ckpt = run.artifact('decay', 'ckpt')
    world = None
    rng = make_rng(run.seed)
    if run.options.get('resume'):
        world, rng, _ = load_checkpoint(Path(run.options['resume']))
    sweeps = int(run.sampling['sweeps'])
    profile = decay_profile(int(run.lattice.get('dimension', 1)), int(decay['half_width']),
                            float(decay['beta']), float(decay['rho']), decay['displacements'], sweeps, rng,
                            burn_in=0 if world is not None else run.sampling.get('burn_in'),
                            topology=run.time.get('topology', CIRCLE),
                            checkpoint_path=ckpt, checkpoint_every=max(1, sweeps // 10), world=world)
    rows = [{'distance': r, 'estimate': est, 'rho': decay['rho'], 'beta': decay['beta'],
             'n': decay['half_width']} for r, est in profile]
    reports.write_csv(run.artifact('decay', 'csv'), rows, run.to_dict(), run.seed)

    payload: Dict[str, Any] = {'profile': [{'distance': r, **est.to_dict()} for r, est in profile]}
    passed: Optional[bool] = None
    try:
        mass = mass_estimate(profile)
        payload['mass'] = mass.to_dict()
    except InsufficientDataError as e:
        mass = None
        payload['mass_diagnostic'] = str(e)
    expect = run.options.get('expect')
    if expect == 'decay':
        passed = mass is not None and mass.value > run.sigma_buffer * mass.std_error
    elif expect == 'order':
        last = profile[-1][1]
        passed = last.value > 10 * last.std_error
    return _finish(run, 'decay', payload, passed)


COMMANDS = {
    'estimate': run_estimate,
    'verify': run_verify,
    'oracle-compare': run_oracle_compare,
    'scan-critical': run_scan,
    'decay': run_decay,
}


def run(config: RunConfig) -> int:
    """Dispatch one subcommand and map the outcome to an exit code."""
    logger = get_logger()
    try:
        passed = COMMANDS[config.subcommand](config)
    except (ConfigurationError, ParameterError) as e:
        logger.error(f"{config.subcommand}: {e}")
        print(colored(f"Error: {e}", "red"), file=sys.stderr)
        return EXIT_USAGE
    except CapabilityError as e:
        logger.error(f"{config.subcommand}: {e}")
        print(colored(f"Capability error: {e}", "red"), file=sys.stderr)
        return EXIT_CAPABILITY
    except (ConsistencyError, PreconditionError, InvariantViolation, InsufficientDataError,
            CheckpointError) as e:
        logger.error(f"{config.subcommand}: {e}")
        print(colored(f"Failed: {e}", "red"), file=sys.stderr)
        return EXIT_FAILED
    if not passed:
        logger.error(f"{config.subcommand}: assertions failed")
        return EXIT_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Space-time quantum Ising engine',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python st_ising.py estimate --observable magnetization
  python st_ising.py verify pdi
  python st_ising.py verify pdi --points 5 --field-sweeps 4000
  python st_ising.py verify switching --battery --cases 20
  python st_ising.py verify switch-map --triples 10000
  python st_ising.py oracle-compare --battery --points 5 --seeds 100
  python st_ising.py scan-critical --workers 8 --expect 1.8,2.2
  python st_ising.py decay --expect decay --out results/decay
        """
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', '-c', help='Path to config file (default: config.yaml)')
    common.add_argument('--seed', type=int, help='Root seed (overrides sampling.seed)')
    common.add_argument('--workers', type=int, help='Worker processes (overrides sampling.workers)')
    common.add_argument('--out', help='Output directory (overrides output.dir)')
    common.add_argument('--samples', type=int, help='Samples per estimate (overrides sampling.n_samples)')
    common.add_argument('--validate-config', action='store_true', help='Validate configuration and exit')

    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    p = subparsers.add_parser('estimate', parents=[common], help='Estimate M, correlations or chi')
    p.add_argument('--observable', choices=ESTIMATE_OBSERVABLES + ('all',), default='all')
    p.add_argument('--x', help='First point as VERTEX:TIME (default: origin at time 0)')
    p.add_argument('--y', help='Second point as VERTEX:TIME')
    p.add_argument('--quadrature', choices=(GRID, RANDOM), default=GRID, help='Integration over K for chi')

    p = subparsers.add_parser('verify', parents=[common], help='Verify an identity or inequality')
    p.add_argument('target', choices=VERIFY_TARGETS)
    p.add_argument('--battery', action='store_true', help='Run the randomized battery instead of one case')
    p.add_argument('--cases', type=int, help='Randomized cases in a battery')
    p.add_argument('--points', type=int, help='Random parameter points in a battery')
    p.add_argument('--triples', type=int, help='Random triples for the switch map')
    p.add_argument('--x', help='Point as VERTEX:TIME')
    p.add_argument('--y', help='Point as VERTEX:TIME')
    p.add_argument('--z', help='Point as VERTEX:TIME')
    p.add_argument('--sources', help='Comma-separated source points for the backbone check')
    p.add_argument('--sources-b', help='Comma-separated sources of the second colouring')
    p.add_argument('--epsilon', type=float, help='Width of the separating bands (simon-lieb)')
    p.add_argument('--inner', choices=('mc', 'oracle'), help='Remainder partition function (backbone)')
    p.add_argument('--conditional', type=int, help='Conditional-Ising samples (partition)')
    p.add_argument('--derivative-quadrature', choices=(GRID, RANDOM),
                   help='Integration over K in the derivative estimators')
    p.add_argument('--field-sweeps', type=int,
                   help='Chain sweeps per field strength in the pdi battery (0 skips the slope)')
    p.add_argument('--rho-c', type=float, help='Critical ratio for the field-exponent curve (pdi battery)')

    p = subparsers.add_parser('oracle-compare', parents=[common], help='Compare with exact diagonalization')
    p.add_argument('--battery', action='store_true', help='Run the small-instance oracle battery')
    p.add_argument('--points', type=int, help='Random parameter points')
    p.add_argument('--seeds', type=int, help='Seeds per case')
    p.add_argument('--x', help='Point as VERTEX:TIME')
    p.add_argument('--y', help='Point as VERTEX:TIME')

    p = subparsers.add_parser('scan-critical', parents=[common], help='Binder-crossing scan of rho_c')
    p.add_argument('--expect', help='Accepted rho_c range as LO,HI')

    p = subparsers.add_parser('decay', parents=[common], help='Correlation decay and mass fit')
    p.add_argument('--expect', choices=('decay', 'order'), help='Assert exponential decay or long-range order')
    p.add_argument('--resume', help='Continue the chain from a checkpoint file')

    return parser


OPTION_KEYS = ('observable', 'x', 'y', 'z', 'quadrature', 'target', 'battery', 'cases', 'points',
               'triples', 'sources', 'sources_b', 'epsilon', 'inner', 'conditional',
               'derivative_quadrature', 'field_sweeps', 'rho_c', 'seeds', 'expect', 'resume')


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    try:
        config = load_config(args.config)
    except ConfigurationError as e:
        print(colored(f"Error: {e}", "red"), file=sys.stderr)
        return EXIT_USAGE

    if args.seed is not None:
        config['sampling']['seed'] = args.seed
    if args.workers is not None:
        config['sampling']['workers'] = args.workers
    if args.samples is not None:
        config['sampling']['n_samples'] = args.samples
    if args.out:
        config['output']['dir'] = args.out

    if args.validate_config:
        return EXIT_OK if validate_config(config, strict=False) else EXIT_USAGE
    try:
        validate_config(config, strict=True, quiet=True)
    except ConfigurationError as e:
        print(colored(f"Error: {e}", "red"), file=sys.stderr)
        return EXIT_USAGE

    if config['logging'].get('enabled', True):
        logger = get_logger(config)
        logger.info("=" * 60)
        logger.info(f"st_ising {args.command} started")
        logger.info("=" * 60)

    options = {key: getattr(args, key) for key in OPTION_KEYS if getattr(args, key, None) is not None}
    try:
        run_config = RunConfig.from_config(config, args.command, options)
    except SpaceTimeIsingError as e:
        print(colored(f"Error: {e}", "red"), file=sys.stderr)
        return EXIT_USAGE
    get_logger().info(f"config hash {run_config.hash}")
    return run(run_config)


if __name__ == "__main__":
    sys.exit(main())
