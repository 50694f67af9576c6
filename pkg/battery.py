"""
Verification batteries.

Each battery generates parameter points and small instances, runs one
independent trial per (case, seed) with its own random stream, ranks the
cases by their worst |z| and summarizes the pass count with a one-sided
binomial test against the target rate.
"""

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

import oracle
from domain import CIRCLE, GHOST, PERIODIC, Lattice, Params, Point, Region, Segment, TimeDomain
from estimates import Estimate, binomial_pass_rate, one_sided_holds
from exceptions import ParameterError, PreconditionError
from logger import get_logger
from mcmc import magnetization_curve
from observables import (Quadrature, check_derivative_bounds, check_ghs, check_main_pdi,
                         check_monotonicity, check_simon_lieb, derivative_estimators,
                         field_exponent_slope, magnetization)
from parity import EMPTY, Colouring, SourceSet, estimate_correlation
from switching import find_open_path, sample_pair, switch_along, switched_log_weight, verify_switching

SMALL_BETAS = (0.5, 2.0)
LAMBDA_RANGE = (0.5, 2.0)
DELTA_RANGE = (0.5, 2.0)
GAMMA_RANGE = (0.1, 1.0)

DEFAULT_TARGET = 0.99
EXACT_REL_TOL = 1e-10
DERIVATIVE_REL_TOL = 0.05
MAX_VALID_DRAWS = 1000


@dataclass(frozen=True)
class Instance:
    """A small lattice with a time circle of circumference beta."""
    label: str
    lattice: Lattice
    beta: float

    @property
    def region(self) -> Region:
        return Region.box(self.lattice, TimeDomain(self.beta, CIRCLE))

    def to_dict(self) -> Dict:
        return {'label': self.label, 'lattice': self.lattice.to_dict(), 'beta': self.beta}


class ParameterGrid:
    """Cartesian product of intensity values."""

    def __init__(self, lam_range: Sequence[float], delta_range: Sequence[float],
                 gamma_range: Sequence[float]):
        self.lam_range = list(lam_range)
        self.delta_range = list(delta_range)
        self.gamma_range = list(gamma_range)

    def generate(self) -> List[Params]:
        combinations = itertools.product(self.lam_range, self.delta_range, self.gamma_range)
        return [Params(lam, delta, gamma) for lam, delta, gamma in combinations]

    def count(self) -> int:
        return len(self.lam_range) * len(self.delta_range) * len(self.gamma_range)


def random_points(rng: np.random.Generator, count: int, lam_range=LAMBDA_RANGE,
                  delta_range=DELTA_RANGE, gamma_range=GAMMA_RANGE) -> List[Params]:
    """Uniform parameter points in a box."""
    if count < 0:
        raise ParameterError(f"point count must be non-negative, got {count}")
    values = rng.uniform(size=(count, 3))
    lows = np.array([lam_range[0], delta_range[0], gamma_range[0]])
    highs = np.array([lam_range[1], delta_range[1], gamma_range[1]])
    points = lows + values * (highs - lows)
    return [Params(float(lam), float(delta), float(gamma)) for lam, delta, gamma in points]


def small_instances(betas: Sequence[float] = SMALL_BETAS) -> List[Instance]:
    """One vertex, a 2-vertex edge and a 3-vertex path, each at every beta."""
    shapes = [('1 vertex', Lattice.chain(1)), ('2-vertex edge', Lattice.chain(2)),
              ('3-vertex path', Lattice.chain(3))]
    return [Instance(f"{label}, beta={beta:g}", lattice, float(beta))
            for label, lattice in shapes for beta in betas]


def _random_point(instance: Instance, rng: np.random.Generator, vertices: Optional[Sequence[int]] = None) -> Point:
    choices = list(vertices) if vertices is not None else list(range(instance.lattice.n_vertices))
    return Point(int(rng.choice(choices)), float(rng.uniform(0.0, instance.beta)))


def run_tasks(fn: Callable, tasks: Sequence[Tuple], workers: int = 1, desc: Optional[str] = None) -> List:
    """fn(*task) for every task, in task order."""
    results = []
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(fn, *task) for task in tasks]
            for future in tqdm(futures, total=len(futures), desc=desc, disable=desc is None):
                results.append(future.result())
    else:
        for task in tqdm(tasks, desc=desc, disable=desc is None):
            results.append(fn(*task))
    return results


@dataclass
class BatteryResult:
    name: str
    records: List[Dict]
    ranked: List[Dict]
    summary: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.summary.get('passed'))

    def to_dict(self) -> Dict:
        return {'name': self.name, 'summary': dict(self.summary), 'ranked': self.ranked}


def rank_cases(records: List[Dict]) -> List[Dict]:
    """One row per case: its worst |z| over seeds and whether every trial passed."""
    cases: Dict[str, Dict] = {}
    for r in records:
        entry = cases.setdefault(r['case'], {
            'case': r['case'], 'lambda': r['lambda'], 'delta': r['delta'], 'gamma': r['gamma'],
            'abs_z': 0.0, 'trials': 0, 'passes': 0,
        })
        entry['abs_z'] = max(entry['abs_z'], r['abs_z'])
        entry['trials'] += 1
        entry['passes'] += int(r['passed'])
    ranked = sorted(cases.values(), key=lambda c: c['abs_z'], reverse=True)
    for i, c in enumerate(ranked):
        c['rank'] = i + 1
        c['passed'] = c['passes'] == c['trials']
    return ranked


def summarize(name: str, records: List[Dict], target: float = DEFAULT_TARGET) -> BatteryResult:
    trials = len(records)
    passes = sum(1 for r in records if r['passed'])
    ranked = rank_cases(records)
    if trials:
        passed, p_value = binomial_pass_rate(passes, trials, target)
    else:
        passed, p_value = False, float('nan')
    summary = {'cases': len(ranked), 'trials': trials, 'passes': passes,
               'pass_rate': passes / trials if trials else 0.0,
               'target': target, 'p_value': p_value, 'passed': passed}
    get_logger().log_verification(f'battery_{name}', passed, summary)
    return BatteryResult(name, records, ranked, summary)


def _case_fields(case: str, params: Params) -> Dict:
    return {'case': case, 'lambda': params.lam, 'delta': params.delta, 'gamma': params.gamma}


# ---------------------------------------------------------------------------
# Oracle battery
# ---------------------------------------------------------------------------

def pair_points(instance: Instance) -> Tuple[Point, Point]:
    """Origin at time 0 and the far end of the chain a third of the way round."""
    return Point(0, 0.0), Point(instance.lattice.n_vertices - 1, instance.beta / 3.0)


def oracle_case(instance: Instance, params: Params, n_samples: int, seed_index: int,
                rng: np.random.Generator, sigma_buffer: float = 3.0) -> Dict:
    """Parity estimates of M and of one two-point function against the dense oracle."""
    region = instance.region
    x, y = pair_points(instance)
    stream_m, stream_xy = rng.spawn(2)
    m = estimate_correlation(region, SourceSet.of(x), params, n_samples, stream_m)
    xy = estimate_correlation(region, SourceSet.of(x, y), params, n_samples, stream_xy)
    m_exact = oracle.exact_correlation(region, params, [x])
    xy_exact = oracle.exact_correlation(region, params, [x, y])
    z_m = _z_against(m, m_exact)
    z_xy = _z_against(xy, xy_exact)
    record = _case_fields(f"{instance.label} #{seed_index // 1000}", params)
    record.update({
        'instance': instance.label, 'seed_index': seed_index % 1000,
        'magnetization': m.value, 'magnetization_se': m.std_error, 'magnetization_exact': m_exact,
        'two_point': xy.value, 'two_point_se': xy.std_error, 'two_point_exact': xy_exact,
        'z_magnetization': z_m, 'z_two_point': z_xy,
        'abs_z': max(abs(z_m), abs(z_xy)),
    })
    record['passed'] = record['abs_z'] < sigma_buffer
    return record


def _z_against(estimate: Estimate, exact: float) -> float:
    diff = estimate.value - exact
    if estimate.std_error == 0:
        return 0.0 if abs(diff) <= EXACT_REL_TOL * max(1.0, abs(exact)) else math.copysign(math.inf, diff)
    return diff / estimate.std_error


def run_oracle_battery(rng: np.random.Generator, n_points: int = 5, n_seeds: int = 100,
                       n_samples: int = 10 ** 6, betas: Sequence[float] = SMALL_BETAS,
                       workers: int = 1, target: float = DEFAULT_TARGET,
                       sigma_buffer: float = 3.0) -> BatteryResult:
    """
    Every small instance at `n_points` random parameter points, each repeated
    over `n_seeds` independent streams.
    """
    point_stream, trial_stream = rng.spawn(2)
    points = random_points(point_stream, n_points)
    tasks = []
    for instance in small_instances(betas):
        for p_index, params in enumerate(points):
            for seed in range(n_seeds):
                tasks.append((instance, params, n_samples, p_index * 1000 + seed))
    streams = trial_stream.spawn(len(tasks))
    tasks = [task + (stream, sigma_buffer) for task, stream in zip(tasks, streams)]
    records = run_tasks(oracle_case, tasks, workers, desc="Oracle battery")
    return summarize('oracle', records, target)


# ---------------------------------------------------------------------------
# Switching lemma battery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SwitchingCase:
    label: str
    instance: Instance
    params: Params
    A: SourceSet
    B: SourceSet
    x: Point
    y: Point
    predicate: Tuple[Tuple[Point, Point, bool], ...] = ()


def switching_cases(rng: np.random.Generator, count: int = 20, with_predicate: int = 5,
                    betas: Sequence[float] = (0.5, 1.0, 2.0)) -> List[SwitchingCase]:
    """
    Randomized (A, B, x, y) on one or two vertices. The first `with_predicate`
    cases are two-vertex instances with F = 1{(1, t) <-> Gamma}.
    """
    if with_predicate > count:
        raise ParameterError("more predicate cases requested than cases")
    points = random_points(rng, count)
    cases = []
    for i, params in enumerate(points):
        size = 2 if i < with_predicate else int(rng.integers(1, 3))
        beta = float(rng.choice(betas))
        instance = Instance(f"{size} vertex, beta={beta:g}", Lattice.chain(size), beta)
        x, y = _random_point(instance, rng), _random_point(instance, rng)
        A = SourceSet.of(*[_random_point(instance, rng) for _ in range(int(rng.integers(0, 3)))])
        B = SourceSet.of(*[_random_point(instance, rng) for _ in range(int(rng.integers(0, 3)))])
        predicate = ()
        if i < with_predicate:
            predicate = ((_random_point(instance, rng, [1]), GHOST, True),)
        cases.append(SwitchingCase(f"switching {i}", instance, params, A, B, x, y, predicate))
    return cases


def switching_case(case: SwitchingCase, n_samples: int, rng: np.random.Generator,
                   sigma_buffer: float = 3.0) -> Dict:
    report = verify_switching(case.instance.region, case.A, case.B, case.x, case.y, case.params,
                              n_samples, rng, predicate=case.predicate, sigma_buffer=sigma_buffer)
    record = _case_fields(case.label, case.params)
    record.update(report.to_dict())
    record.update({'instance': case.instance.label, 'has_predicate': bool(case.predicate),
                   'abs_z': abs(report.z)})
    return record


def run_switching_battery(rng: np.random.Generator, count: int = 20, with_predicate: int = 5,
                          n_samples: int = 10 ** 6, workers: int = 1,
                          sigma_buffer: float = 3.0) -> BatteryResult:
    case_stream, trial_stream = rng.spawn(2)
    cases = switching_cases(case_stream, count, with_predicate)
    streams = trial_stream.spawn(len(cases))
    tasks = [(case, n_samples, stream, sigma_buffer) for case, stream in zip(cases, streams)]
    records = run_tasks(switching_case, tasks, workers, desc="Switching battery")
    result = summarize('switching', records, target=DEFAULT_TARGET)
    # every case must pass; the binomial test is reported alongside
    result.summary['passed'] = all(r['passed'] for r in records)
    return result


# ---------------------------------------------------------------------------
# Switch map
# ---------------------------------------------------------------------------

def same_colouring(a: Colouring, b: Colouring) -> bool:
    """Field-exact equality of sources, events, circle bits and labels."""
    return (a.sources == b.sources and set(a.bridges) == set(b.bridges)
            and set(a.ghosts) == set(b.ghosts) and dict(a.bits) == dict(b.bits)
            and a.lines == b.lines)


def switch_map_trial(instance: Instance, params: Params, rng: np.random.Generator) -> Dict:
    """
    One random triple (Q1, Q2, pi): Q1 carries sources {x, y} so that an open
    path exists, Q2 carries none. Checks the involution, the preserved union
    and the switched-weights identity.
    """
    region = instance.region
    for _ in range(MAX_VALID_DRAWS):
        x, y = _random_point(instance, rng), _random_point(instance, rng)
        psi1, psi2, cuts = sample_pair(region, params, SourceSet.of(x, y), EMPTY, rng)
        if psi1.valid and psi2.valid:
            break
    else:
        raise PreconditionError(f"no valid pair in {MAX_VALID_DRAWS} draws on {instance.label}")
    path = find_open_path(psi1, psi2, cuts, x, y)
    if path is None:
        raise PreconditionError("an odd path from x to y must be open")
    r1, r2 = switch_along(psi1, psi2, path, cuts)
    back1, back2 = switch_along(r1, r2, path)

    before = switched_log_weight(psi1, psi2, path, params.delta)
    after = switched_log_weight(r1, r2, path, params.delta)
    weight_error = abs(math.expm1(after - before))
    union = (set(psi1.bridges) | set(psi2.bridges) == set(r1.bridges) | set(r2.bridges)
             and set(psi1.ghosts) | set(psi2.ghosts) == set(r1.ghosts) | set(r2.ghosts))
    involution = same_colouring(back1, psi1) and same_colouring(back2, psi2)
    sources = (r1.sources == psi1.sources.symmetric_difference(x, y)
               and r2.sources == psi2.sources.symmetric_difference(x, y))
    return {
        'involution': involution, 'union': union, 'sources': sources,
        'weight_error': weight_error,
        'passed': involution and union and sources and weight_error <= EXACT_REL_TOL,
    }


def _switch_map_chunk(instances: Sequence[Instance], params_list: Sequence[Params],
                      rng: np.random.Generator, count: int) -> List[Dict]:
    out = []
    for _ in range(count):
        instance = instances[int(rng.integers(len(instances)))]
        k = int(rng.integers(len(params_list)))
        params = params_list[k]
        record = switch_map_trial(instance, params, rng)
        record.update(_case_fields(f"{instance.label}, point {k}", params))
        out.append(record)
    return out


def run_switch_map_battery(rng: np.random.Generator, n_triples: int = 10 ** 4, n_points: int = 5,
                           chunk: int = 500, workers: int = 1) -> BatteryResult:
    """Exact checks: every triple must pass."""
    point_stream, trial_stream = rng.spawn(2)
    instances = [Instance(f"{size} vertex, beta={beta:g}", Lattice.chain(size), beta)
                 for size in (1, 2) for beta in (0.5, 1.0, 2.0)]
    params_list = random_points(point_stream, n_points)
    sizes = [chunk] * (n_triples // chunk) + ([n_triples % chunk] if n_triples % chunk else [])
    streams = trial_stream.spawn(len(sizes))
    chunks = run_tasks(_switch_map_chunk, [(instances, params_list, s, n) for s, n in zip(streams, sizes)],
                       workers, desc="Switch map")
    records = [r for c in chunks for r in c]
    failures = [r for r in records if not r['passed']]
    summary = {
        'cases': len(instances) * len(params_list), 'trials': len(records),
        'passes': len(records) - len(failures),
        'pass_rate': (len(records) - len(failures)) / len(records) if records else 0.0,
        'max_weight_error': max((r['weight_error'] for r in records), default=0.0),
        'target': 1.0, 'p_value': float('nan'),
        'passed': bool(records) and not failures,
    }
    for r in records:
        r['abs_z'] = 0.0 if r['passed'] else math.inf
    get_logger().log_verification('battery_switch_map', summary['passed'], summary)
    return BatteryResult('switch_map', records, rank_cases(records), summary)


# ---------------------------------------------------------------------------
# Derivative representations
# ---------------------------------------------------------------------------

def derivative_instances() -> List[Instance]:
    """Settings where the derivative formulas apply: a single vertex and a periodic ring."""
    return [Instance("1 vertex, beta=1", Lattice.chain(1), 1.0),
            Instance("3-ring, beta=1", Lattice(1, 1, PERIODIC), 1.0)]


def derivative_case(instance: Instance, params: Params, n_samples: int, rng: np.random.Generator,
                    quadrature: Optional[Quadrature] = None, fd_step: float = 1e-4,
                    rel_tol: float = DERIVATIVE_REL_TOL, sigma_buffer: float = 3.0) -> Dict:
    """
    The three estimators against finite differences of the exact M, and the
    three bounds with M estimated independently.
    """
    region = instance.region
    stream_d, stream_m = rng.spawn(2)
    derivs = derivative_estimators(region, params, n_samples, stream_d, quadrature=quadrature)
    M = magnetization(region, params, n_samples, stream_m)
    exact = oracle.exact_derivatives(region, params, step=fd_step)
    record = _case_fields(instance.label, params)
    worst = 0.0
    matched = True
    for key, est in derivs.items():
        target = exact[key]
        z = _z_against(est, target)
        rel = abs(est.value - target) / abs(target) if target != 0 else abs(est.value)
        ok = rel <= rel_tol or abs(z) < sigma_buffer
        matched = matched and ok
        worst = max(worst, abs(z))
        record.update({f'{key}': est.value, f'{key}_se': est.std_error, f'{key}_exact': target,
                       f'{key}_z': z, f'{key}_rel': rel, f'{key}_passed': ok})
    bounds = check_derivative_bounds(derivs, M, params, region.lattice.dimension, sigma_buffer)
    bounds_ok = all(b['passed'] for b in bounds.values())
    record.update({'instance': instance.label, 'bounds': bounds, 'bounds_passed': bounds_ok,
                   'abs_z': worst, 'passed': matched and bounds_ok})
    return record


def run_derivative_battery(rng: np.random.Generator, n_points: int = 5, n_samples: int = 10 ** 5,
                           quadrature: Optional[Quadrature] = None, workers: int = 1,
                           fd_step: float = 1e-4, rel_tol: float = DERIVATIVE_REL_TOL,
                           sigma_buffer: float = 3.0) -> BatteryResult:
    point_stream, trial_stream = rng.spawn(2)
    points = random_points(point_stream, n_points)
    instances = derivative_instances()
    tasks = [(instance, params) for params in points for instance in instances]
    streams = trial_stream.spawn(len(tasks))
    tasks = [(inst, params, n_samples, s, quadrature, fd_step, rel_tol, sigma_buffer)
             for (inst, params), s in zip(tasks, streams)]
    records = run_tasks(derivative_case, tasks, workers, desc="Derivatives")
    result = summarize('derivatives', records)
    result.summary['passed'] = all(r['passed'] for r in records)
    return result


# ---------------------------------------------------------------------------
# Main PDI and the field exponent
# ---------------------------------------------------------------------------

PDI_INSTANCE = Instance("d=1 box, n=2, beta=1", Lattice(1, 2, PERIODIC), 1.0)
FIELD_GAMMAS = (0.05, 0.1, 0.2, 0.3, 0.4)
FIELD_SLOPE_LIMIT = 1.0 / 3.0 + 0.1
CRITICAL_RATIO = 2.0


def pdi_case(instance: Instance, params: Params, n_samples: int, rng: np.random.Generator,
             quadrature: Optional[Quadrature] = None,
             derivative_quadrature: Optional[Quadrature] = None,
             sigma_buffer: float = 3.0) -> Dict:
    """Main PDI slack at one parameter point; abs_z is the size of any violation in sigmas."""
    report = check_main_pdi(instance.region, params, n_samples, rng, quadrature=quadrature,
                            derivative_quadrature=derivative_quadrature, sigma_buffer=sigma_buffer)
    slack = report.slack
    if slack.std_error > 0:
        z = slack.value / slack.std_error
    else:
        z = 0.0 if slack.value >= 0 else -math.inf
    record = _case_fields(instance.label, params)
    record.update({'instance': instance.label, 'slack': slack.value, 'slack_se': slack.std_error,
                   'slack_z': z, 'combined_passed': report.combined_passed,
                   'abs_z': max(0.0, -z), 'passed': report.passed})
    record.update({f'term_{name}': value for name, value in report.terms.items()})
    return record


def field_exponent_check(rng: np.random.Generator, rho_c: float = CRITICAL_RATIO, size: int = 8,
                         gammas: Sequence[float] = FIELD_GAMMAS, sweeps: int = 2000,
                         burn_in: Optional[int] = None, workers: int = 1,
                         limit: float = FIELD_SLOPE_LIMIT) -> Dict:
    """Log-log slope of M(rho_c, gamma) from cluster chains; passes when it stays below the limit."""
    curve = magnetization_curve(size, rho_c, gammas, sweeps, rng, burn_in=burn_in, workers=workers)
    slope = field_exponent_slope(gammas, curve)
    passed = slope.value <= limit
    result = {'rho_c': rho_c, 'size': size, 'gammas': [float(g) for g in gammas],
              'magnetization': [m.to_dict() for m in curve], 'slope': slope.to_dict(),
              'limit': limit, 'passed': passed}
    get_logger().log_verification('field_exponent', passed, result)
    return result


def run_pdi_battery(rng: np.random.Generator, n_points: int = 5, n_samples: int = 10 ** 5,
                    quadrature: Optional[Quadrature] = None,
                    derivative_quadrature: Optional[Quadrature] = None, workers: int = 1,
                    sigma_buffer: float = 3.0, instance: Instance = PDI_INSTANCE,
                    field_sweeps: int = 2000, field_size: int = 8,
                    rho_c: float = CRITICAL_RATIO) -> BatteryResult:
    """
    Main PDI at random parameter points, then the field-exponent slope.

    field_sweeps = 0 skips the slope. Every point must pass.
    """
    point_stream, trial_stream, field_stream = rng.spawn(3)
    points = random_points(point_stream, n_points)
    tasks = [(instance, params, n_samples, s, quadrature, derivative_quadrature, sigma_buffer)
             for params, s in zip(points, trial_stream.spawn(len(points)))]
    records = run_tasks(pdi_case, tasks, workers, desc="Main PDI")
    result = summarize('pdi', records)
    field = None
    if field_sweeps:
        field = field_exponent_check(field_stream, rho_c=rho_c, size=field_size, sweeps=field_sweeps,
                                     workers=workers)
    result.summary['field_exponent'] = field
    result.summary['passed'] = bool(records) and all(r['passed'] for r in records) \
        and (field is None or field['passed'])
    return result


# ---------------------------------------------------------------------------
# Correlation inequalities
# ---------------------------------------------------------------------------

def separating_band(instance: Instance, rng: np.random.Generator,
                    epsilon: float) -> Tuple[List[Segment], Point, Point]:
    """
    Two bands of width epsilon at the same times on every vertex, with a and b
    placed in the two arcs between them.
    """
    beta = instance.beta
    if 4 * epsilon >= beta:
        raise ParameterError(f"epsilon {epsilon} is too wide for beta {beta}")
    s1 = float(rng.uniform(0.0, beta / 2 - epsilon))
    s2 = float(rng.uniform(beta / 2, beta - epsilon))
    separator = [Segment(v, s, s + epsilon) for v in range(instance.lattice.n_vertices) for s in (s1, s2)]
    a = Point(0, (s1 + epsilon + s2) / 2)
    last = instance.lattice.n_vertices - 1
    b = Point(int(rng.integers(0, last + 1)), ((s2 + epsilon + s1 + beta) / 2) % beta)
    return separator, a, b


def inequality_case(instance: Instance, params: Params, n_samples: int, rng: np.random.Generator,
                    epsilon: float = 0.1, quadrature: Optional[Quadrature] = None,
                    sigma_buffer: float = 3.0) -> Dict:
    """GKS positivity, GHS, Simon and Lieb, and monotonicity in lambda on one instance."""
    region = instance.region
    streams = rng.spawn(6)
    n = instance.lattice.n_vertices
    pts = [_random_point(instance, streams[0]) for _ in range(4)]

    gks = estimate_correlation(region, SourceSet.of(*pts), params, n_samples, streams[1])
    gks_ok = one_sided_holds(0.0, gks.value, gks.std_error, sigma_buffer)

    ghs = check_ghs(region, pts[0], pts[1], pts[2], params, n_samples, streams[2],
                    sigma_buffer=sigma_buffer)

    separator, a, b = separating_band(instance, streams[3], epsilon)
    simon = check_simon_lieb(region, a, b, separator, epsilon, params.replace(gamma=0.0), n_samples,
                             streams[4], quadrature=quadrature, sigma_buffer=sigma_buffer)

    mono = check_monotonicity(region, SourceSet.of(pts[0], pts[3]), params, 'lam',
                              [params.lam * 0.5, params.lam, params.lam * 1.5], n_samples, streams[5],
                              sigma_buffer=sigma_buffer)

    checks = {
        'gks': gks_ok,
        'ghs_triple': ghs.triple_passed,
        'ghs_concavity': ghs.concavity_passed,
        'simon': simon.simon_passed,
        'lieb': simon.lieb_passed,
        'lieb_below_simon': simon.lieb_below_simon,
        'monotonicity': mono.passed,
    }
    margins = [(gks.value, gks.std_error), (-ghs.triple.value, ghs.triple.std_error),
               (-ghs.second_difference.value, ghs.second_difference.std_error),
               (simon.simon_margin.value, simon.simon_margin.std_error),
               (simon.lieb_margin.value, simon.lieb_margin.std_error)]
    # distance below zero in standard errors; 0 when the margin is non-negative
    worst = max((max(0.0, -v) / s if s > 0 else (math.inf if v < 0 else 0.0)) for v, s in margins)
    record = _case_fields(instance.label, params)
    record.update({'instance': instance.label, 'vertices': n, 'gks': gks.value, 'gks_se': gks.std_error,
                   'ghs_triple': ghs.triple.value, 'ghs_second_difference': ghs.second_difference.value,
                   'simon_margin': simon.simon_margin.value, 'lieb_margin': simon.lieb_margin.value})
    record.update({f'{k}_passed': v for k, v in checks.items()})
    record.update({'abs_z': worst, 'passed': all(checks.values())})
    return record


def run_inequality_suite(rng: np.random.Generator, count: int = 10, n_samples: int = 10 ** 5,
                         epsilon: float = 0.1, quadrature: Optional[Quadrature] = None,
                         workers: int = 1, sigma_buffer: float = 3.0) -> BatteryResult:
    """Randomized instances over one to three vertices at beta in {0.5, 1, 2}."""
    case_stream, trial_stream = rng.spawn(2)
    points = random_points(case_stream, count)
    tasks = []
    for params in points:
        size = int(case_stream.integers(1, 4))
        beta = float(case_stream.choice([0.5, 1.0, 2.0]))
        tasks.append((Instance(f"{size} vertex, beta={beta:g}", Lattice.chain(size), beta), params))
    streams = trial_stream.spawn(len(tasks))
    tasks = [(inst, params, n_samples, s, epsilon, quadrature, sigma_buffer)
             for (inst, params), s in zip(tasks, streams)]
    records = run_tasks(inequality_case, tasks, workers, desc="Inequalities")
    return summarize('inequalities', records)
