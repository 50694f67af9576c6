"""
Physical observables and numeric checks of the correlation inequalities.

Every estimator here is a smooth function of column means of normalized
parity weights sampled on common (B, G) draws, so errors come from the
block jackknife. Independent estimates are combined with the delta method
and one-sided inequalities are asserted with a sigma buffer.
"""

import math
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from domain import (GHOST, INTERVAL, PERIODIC, Lattice, Params, Point, Region, Segment,
                    TimeDomain, region_subtract, sample_configuration)
from estimates import (Estimate, combine_quadrature, jackknife, one_sided_holds, propagate)
from exceptions import InsufficientDataError, ParameterError
from logger import get_logger
from parity import (EMPTY, EventLayout, PlacedSources, SourceSet, build_colouring, draw_bits,
                    estimate_correlation, normalized_weight, sample_weights)
from sampling import DEFAULT_BATCH_SIZE, collect
from switching import ConnectivityIndex, CutSet

GRID = 'grid'
RANDOM = 'random'

DEFAULT_H_FRACTION = 1.0 / 64

# Minimum signal-to-noise for a correlation to enter the mass fit
MASS_SIGNAL_SIGMAS = 3.0
MIN_MASS_POINTS = 3

DEFAULT_GHS_GAMMAS = (0.2, 0.4, 0.6)


def default_origin(region: Region) -> Point:
    return Point(region.lattice.origin, 0.0)


def check_assumption(region: Region):
    """
    Translation-invariant setting: every K_v is the full circle on a periodic box.

    A single free vertex is accepted as the trivially invariant case.
    """
    lattice = region.lattice
    if not region.time.is_circle or len(region.full) != lattice.n_vertices:
        raise ParameterError("derivative formulas need K_v = S for every vertex")
    if lattice.boundary != PERIODIC and lattice.n_vertices > 1:
        raise ParameterError("derivative formulas need a periodic box lattice")


# ---------------------------------------------------------------------------
# Quadrature over K
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Quadrature:
    """
    Time quadrature for integrals over K.

    `grid` uses h = h_fraction * beta: the periodic trapezoid rule on full
    circles and the trapezoid rule on every other maximal interval.
    `random` draws one uniform point of K per sample and weighs it by |K|.
    """
    kind: str = GRID
    h_fraction: float = DEFAULT_H_FRACTION

    def __post_init__(self):
        if self.kind not in (GRID, RANDOM):
            raise ParameterError(f"unknown quadrature kind '{self.kind}'")
        if not self.h_fraction > 0:
            raise ParameterError(f"quadrature step must be positive, got h = {self.h_fraction} beta")

    def step(self, beta: float) -> float:
        return self.h_fraction * beta

    def coarse(self) -> "Quadrature":
        return replace(self, h_fraction=2.0 * self.h_fraction)

    def nodes(self, region: Region) -> List[Tuple[Point, float]]:
        beta = region.beta
        h = self.step(beta)
        out = []
        for line in region.lines:
            length = line.end - line.start
            n = max(1, int(math.ceil(length / h - 1e-9)))
            width = length / n
            if line.cyclic:
                out.extend((Point(line.vertex, line.start + j * width), width) for j in range(n))
                continue
            for j in range(n + 1):
                t = line.start + j * width
                if region.time.is_circle and t >= beta:
                    t -= beta
                out.append((Point(line.vertex, t), width / 2 if j in (0, n) else width))
        return out

    def draw(self, region: Region, rng: np.random.Generator) -> Point:
        lengths = np.array([line.end - line.start for line in region.lines])
        line = region.lines[int(rng.choice(lengths.size, p=lengths / lengths.sum()))]
        t = line.start + rng.uniform() * (line.end - line.start)
        if region.time.is_circle:
            t %= region.beta
        return Point(line.vertex, t)


# ---------------------------------------------------------------------------
# Correlations
# ---------------------------------------------------------------------------

def magnetization(region: Region, params: Params, n_samples: int, rng: np.random.Generator,
                  origin: Optional[Point] = None, workers: int = 1,
                  batch_size: int = DEFAULT_BATCH_SIZE) -> Estimate:
    """M = <sigma_0>, exactly 0 at zero field."""
    origin = origin or default_origin(region)
    return estimate_correlation(region, SourceSet.of(origin), params, n_samples, rng,
                                workers=workers, batch_size=batch_size)


def two_point(region: Region, x: Point, y: Point, params: Params, n_samples: int,
              rng: np.random.Generator, workers: int = 1,
              batch_size: int = DEFAULT_BATCH_SIZE) -> Estimate:
    return estimate_correlation(region, SourceSet.of(x, y), params, n_samples, rng,
                                workers=workers, batch_size=batch_size)


def truncated_two_point(region: Region, x: Point, y: Point, params: Params, n_samples: int,
                        rng: np.random.Generator, workers: int = 1,
                        batch_size: int = DEFAULT_BATCH_SIZE) -> Estimate:
    """<sigma_x sigma_y> - <sigma_x><sigma_y> from one set of common samples."""
    sets = (EMPTY, SourceSet.of(x), SourceSet.of(y), SourceSet.of(x, y))
    weights = sample_weights(region, params, sets, n_samples, rng, workers=workers,
                             batch_size=batch_size)
    return jackknife(weights, lambda m: m[3] / m[0] - (m[1] / m[0]) * (m[2] / m[0]))


def truncated_triple(region: Region, x: Point, y: Point, z: Point, params: Params, n_samples: int,
                     rng: np.random.Generator, workers: int = 1,
                     batch_size: int = DEFAULT_BATCH_SIZE) -> Estimate:
    """<sigma_x; sigma_y; sigma_z> through its five-term expansion."""
    sets = (EMPTY, SourceSet.of(x), SourceSet.of(y), SourceSet.of(z), SourceSet.of(x, y),
            SourceSet.of(x, z), SourceSet.of(y, z), SourceSet.of(x, y, z))
    weights = sample_weights(region, params, sets, n_samples, rng, workers=workers,
                             batch_size=batch_size)

    def triple(m):
        mx, my, mz, mxy, mxz, myz, mxyz = m[1:] / m[0]
        return mxyz - mx * myz - my * mxz - mz * mxy + 2.0 * mx * my * mz

    return jackknife(weights, triple)


# ---------------------------------------------------------------------------
# Susceptibility
# ---------------------------------------------------------------------------

def _random_chi_batch(region: Region, params: Params, origin: Point, quadrature: Quadrature,
                      rng: np.random.Generator, count: int) -> np.ndarray:
    out = np.empty((count, 4))
    placed_empty = PlacedSources.place(region, EMPTY)
    placed_origin = PlacedSources.place(region, SourceSet.of(origin))
    for i in range(count):
        config = sample_configuration(region, params, rng)
        layout = EventLayout(region, config.bridges, config.ghosts, draw_bits(region, rng))
        x = quadrature.draw(region, rng)
        out[i] = [layout.normalized_weight(placed_empty, params.delta),
                  layout.normalized_weight(placed_origin, params.delta),
                  layout.normalized_weight(PlacedSources.place(region, SourceSet.of(origin, x)),
                                           params.delta),
                  layout.normalized_weight(PlacedSources.place(region, SourceSet.of(x)), params.delta)]
    return out


def _grid_columns(origin: Point, node_sets: Sequence[Sequence[Tuple[Point, float]]]):
    """Source sets for a union of quadrature grids and per-grid column maps."""
    sets = [EMPTY, SourceSet.of(origin)]
    column: Dict[Tuple[int, float], Tuple[int, int]] = {}
    maps = []
    for nodes in node_sets:
        pair_cols, single_cols, weights = [], [], []
        for x, w in nodes:
            key = (x.vertex, x.time)
            if key not in column:
                column[key] = (len(sets), len(sets) + 1)
                sets.extend([SourceSet.of(origin, x), SourceSet.of(x)])
            pair_cols.append(column[key][0])
            single_cols.append(column[key][1])
            weights.append(w)
        maps.append((np.array(pair_cols), np.array(single_cols), np.array(weights)))
    return sets, maps


def _chi_statistic(pair_cols, single_cols, weights):
    def statistic(m):
        m0 = m[1] / m[0]
        return float(np.dot(weights, m[pair_cols] / m[0] - m0 * m[single_cols] / m[0]))
    return statistic


def susceptibility(region: Region, params: Params, n_samples: int,
                   quadrature: Optional[Quadrature], rng: np.random.Generator,
                   origin: Optional[Point] = None, workers: int = 1,
                   batch_size: int = DEFAULT_BATCH_SIZE) -> Estimate:
    """
    chi = integral over x in K of <sigma_0; sigma_x>.

    On a grid the same samples are integrated at h and 2h; their difference
    gives the O(h^2) quadrature error, which is added in quadrature to the
    Monte Carlo error and flagged when it exceeds one standard error.
    """
    quadrature = quadrature or Quadrature()
    origin = origin or default_origin(region)
    logger = get_logger()

    if quadrature.kind == RANDOM:
        fn = partial(_random_chi_batch, region, params, origin, quadrature)
        rows = collect(fn, n_samples, rng, workers=workers, batch_size=batch_size)
        volume = region.total_measure
        return jackknife(rows, lambda m: volume * (m[2] / m[0] - (m[1] / m[0]) * (m[3] / m[0])))

    fine_nodes = quadrature.nodes(region)
    coarse_nodes = quadrature.coarse().nodes(region)
    sets, (fine_map, coarse_map) = _grid_columns(origin, (fine_nodes, coarse_nodes))
    weights = sample_weights(region, params, sets, n_samples, rng, workers=workers,
                             batch_size=batch_size)
    fine = jackknife(weights, _chi_statistic(*fine_map))
    coarse = jackknife(weights, _chi_statistic(*coarse_map))

    change = abs(fine.value - coarse.value)
    flags = ()
    if change > fine.std_error:
        flags = ('quadrature_unconverged',)
        logger.warning(f"susceptibility quadrature guard: halving h moved chi by {change:.3g} "
                       f"(standard error {fine.std_error:.3g})")
    quad_error = change / 3.0
    return Estimate(fine.value, combine_quadrature(fine.std_error, quad_error), n_samples, flags)


def free_boundary_susceptibility(lattice: Lattice, beta: float, params: Params, n_samples: int,
                                 rng: np.random.Generator, quadrature: Optional[Quadrature] = None,
                                 origin: Optional[Point] = None, workers: int = 1) -> Estimate:
    """Finite-volume chi at zero field with free time ends, K_v = [0, beta)."""
    if params.gamma != 0:
        raise ParameterError("the free-boundary susceptibility is defined at zero field")
    region = Region.box(lattice, TimeDomain(beta, INTERVAL))
    origin = origin or Point(lattice.origin, beta / 2.0)
    return susceptibility(region, params, n_samples, quadrature, rng, origin=origin, workers=workers)


# ---------------------------------------------------------------------------
# Derivatives of M
# ---------------------------------------------------------------------------

DERIVATIVE_KEYS = ('dM_dgamma', 'dM_dlambda', 'dM_ddelta')


def _open_without_ghost(psi1, psi2, cuts: CutSet, origin: Point) -> float:
    """1{0 not connected to Gamma} for a valid pair, else 0."""
    if not psi1.valid or not psi2.valid:
        return 0.0
    index = ConnectivityIndex(psi1, psi2, cuts, extra=(origin,))
    return 0.0 if index.connected(origin, GHOST) else 1.0


def _derivative_batch(region: Region, params: Params, origin: Point, quadrature: Quadrature,
                      nodes: Sequence[Tuple[Point, float]], rng: np.random.Generator,
                      count: int) -> np.ndarray:
    """Rows of (w psi1^0, w psi2^0, gamma term, lambda term, delta term)."""
    delta = params.delta
    neighbours = region.lattice.neighbours
    placed_empty = PlacedSources.place(region, EMPTY)
    out = np.zeros((count, 5))
    for i in range(count):
        c1 = sample_configuration(region, params, rng)
        c2 = sample_configuration(region, params, rng)
        bits1, bits2 = draw_bits(region, rng), draw_bits(region, rng)
        cuts = CutSet.sample(region, delta, rng)
        out[i, 0] = EventLayout(region, c1.bridges, c1.ghosts, bits1).normalized_weight(placed_empty, delta)
        psi2 = build_colouring(region, EMPTY, c2.bridges, c2.ghosts, bits=bits2)
        w2 = normalized_weight(psi2, delta)
        out[i, 1] = w2
        if w2 == 0.0:
            continue

        def colouring(*points):
            return build_colouring(region, SourceSet.of(*points), c1.bridges, c1.ghosts, bits=bits1)

        points = [(quadrature.draw(region, rng), region.total_measure)] if quadrature.kind == RANDOM \
            else nodes
        for x, weight in points:
            psi1 = colouring(origin, x)
            out[i, 2] += weight * normalized_weight(psi1, delta) * w2 \
                * _open_without_ghost(psi1, psi2, cuts, origin)
            for v in neighbours[x.vertex]:
                psi1 = colouring(origin, x, Point(v, x.time))
                out[i, 3] += 0.5 * weight * normalized_weight(psi1, delta) * w2 \
                    * _open_without_ghost(psi1, psi2, cuts, origin)

        psi1 = colouring(origin)
        if psi1.valid:
            index = ConnectivityIndex(psi1, psi2, cuts, extra=(origin,))
            out[i, 4] = 2.0 * normalized_weight(psi1, delta) * w2 * index.pivotal_measure(origin, GHOST)
    return out


def derivative_estimators(region: Region, params: Params, n_samples: int, rng: np.random.Generator,
                          quadrature: Optional[Quadrature] = None, origin: Optional[Point] = None,
                          workers: int = 1, batch_size: int = DEFAULT_BATCH_SIZE) -> Dict[str, Estimate]:
    """
    dM/dgamma, dM/dlambda and dM/ddelta from their two-replica representations.

    With Z = E(w psi^0):
        dM/dgamma  = Z^-2 int_K E(w psi1^{0x} w psi2^0 1{0 !<-> Gamma}) dx
        dM/dlambda = (2 Z^2)^-1 int_K sum_{y~x} E(w psi1^{0xy Gamma} w psi2^0 1{0 !<-> Gamma}) dx
        -dM/ddelta = 2 Z^-2 int_K E(w psi1^{0 Gamma} w psi2^0 1{0 <-> Gamma only via x}) dx
    The last integral is done exactly per sample as the pivotal measure.
    """
    check_assumption(region)
    quadrature = quadrature or Quadrature()
    origin = origin or default_origin(region)
    nodes = quadrature.nodes(region) if quadrature.kind == GRID else ()
    fn = partial(_derivative_batch, region, params, origin, quadrature, nodes)
    rows = collect(fn, n_samples, rng, workers=workers, batch_size=batch_size,
                   desc='derivatives' if workers > 1 else None)

    def normalized(column):
        return lambda m: m[column] / (m[0] * m[1])

    out = {
        'dM_dgamma': jackknife(rows, normalized(2)),
        'dM_dlambda': jackknife(rows, normalized(3)),
        'dM_ddelta': jackknife(rows, lambda m: -m[4] / (m[0] * m[1])),
    }
    for name, est in out.items():
        get_logger().log_estimate(name, est, params.to_dict())
    return out


def check_derivative_bounds(derivatives: Dict[str, Estimate], M: Estimate, params: Params,
                            dimension: int, sigma_buffer: float = 3.0) -> Dict[str, Dict]:
    """
    The bounds dM/dgamma <= M/gamma, dM/dlambda <= 2dM dM/dgamma and
    -dM/ddelta <= 2M/(1-M^2) dM/dgamma, each reported as a slack estimate.
    """
    dg, dl, dd = (derivatives[k] for k in DERIVATIVE_KEYS)
    checks = {}
    if params.gamma > 0:
        checks['gamma'] = propagate(lambda m, g: m / params.gamma - g, [M, dg])
    checks['lambda'] = propagate(lambda m, g, l: 2 * dimension * m * g - l, [M, dg, dl])
    if M.value < 1:
        checks['delta'] = propagate(lambda m, g, d: 2 * m / (1 - m * m) * g + d, [M, dg, dd])
    return {name: {'slack': est.to_dict(),
                   'passed': one_sided_holds(0.0, est.value, est.std_error, sigma_buffer)}
            for name, est in checks.items()}


# ---------------------------------------------------------------------------
# GHS
# ---------------------------------------------------------------------------

@dataclass
class GHSReport:
    triple: Estimate
    second_difference: Estimate
    gammas: Tuple[float, ...]
    magnetizations: List[Estimate]
    triple_passed: bool
    concavity_passed: bool

    @property
    def passed(self) -> bool:
        return self.triple_passed and self.concavity_passed

    def to_dict(self) -> Dict:
        return {
            'triple': self.triple.to_dict(),
            'second_difference': self.second_difference.to_dict(),
            'gammas': list(self.gammas),
            'magnetizations': [m.to_dict() for m in self.magnetizations],
            'triple_passed': self.triple_passed,
            'concavity_passed': self.concavity_passed,
            'passed': self.passed,
        }


def second_divided_difference(gammas: Sequence[float], values: Sequence[Estimate]) -> Estimate:
    g1, g2, g3 = gammas

    def second(a, b, c):
        return 2.0 * ((c - b) / (g3 - g2) - (b - a) / (g2 - g1)) / (g3 - g1)

    return propagate(second, list(values))


def check_ghs(region: Region, x: Point, y: Point, z: Point, params: Params, n_samples: int,
              rng: np.random.Generator, gammas: Sequence[float] = DEFAULT_GHS_GAMMAS,
              origin: Optional[Point] = None, workers: int = 1,
              sigma_buffer: float = 3.0) -> GHSReport:
    """Truncated triple <= 0 and M concave in gamma at three field values."""
    gammas = tuple(sorted(float(g) for g in gammas))
    if len(gammas) != 3 or len(set(gammas)) != 3:
        raise ParameterError("concavity needs three distinct field values")
    streams = rng.spawn(4)
    triple = truncated_triple(region, x, y, z, params, n_samples, streams[0], workers=workers)
    curve = [magnetization(region, params.replace(gamma=g), n_samples, s, origin=origin,
                           workers=workers)
             for g, s in zip(gammas, streams[1:])]
    second = second_divided_difference(gammas, curve)
    report = GHSReport(triple, second, gammas, curve,
                       one_sided_holds(triple.value, 0.0, triple.std_error, sigma_buffer),
                       one_sided_holds(second.value, 0.0, second.std_error, sigma_buffer))
    get_logger().log_verification('ghs', report.passed, report.to_dict())
    return report


# ---------------------------------------------------------------------------
# Simon and Lieb
# ---------------------------------------------------------------------------

def _line_pieces(line, beta: float) -> List[Tuple[float, float]]:
    if line.cyclic:
        return [(0.0, beta)]
    if line.end <= beta:
        return [(line.start, line.end)]
    return [(line.start, beta), (0.0, line.end - beta)]


def _line_components(region: Region) -> np.ndarray:
    """Connected components of the lines of K under positive-overlap neighbour jumps."""
    lines = region.lines
    beta = region.beta
    pieces = [_line_pieces(line, beta) for line in lines]
    rows, cols = [], []
    for u, v in region.lattice.edges:
        for i in region.lines_by_vertex[u]:
            for j in region.lines_by_vertex[v]:
                overlap = sum(max(0.0, min(e1, e2) - max(s1, s2))
                              for s1, e1 in pieces[i] for s2, e2 in pieces[j])
                if overlap > 0:
                    rows.append(i)
                    cols.append(j)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(lines), len(lines)))
    return connected_components(graph, directed=False)[1]


def separator_region(region: Region, separator: Sequence[Segment]) -> Region:
    per_vertex: Dict[int, List[Tuple[float, float]]] = {}
    for seg in separator:
        per_vertex.setdefault(int(seg.vertex), []).append((float(seg.start), float(seg.end)))
    return Region.from_intervals(region.lattice, region.time, per_vertex)


def separated_side(region: Region, a: Point, b: Point, separator: Sequence[Segment],
                   epsilon: float) -> Tuple[Region, Region]:
    """
    Validate an epsilon-fat separating set and return (T, U), where U is the
    side of a together with T itself.
    """
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    T = separator_region(region, separator)
    if T.is_empty:
        raise ParameterError("the separating set is empty")
    thin = [line for line in T.lines if line.end - line.start < epsilon]
    if thin:
        raise ParameterError(f"separating set is not {epsilon}-fat: interval of length "
                             f"{thin[0].end - thin[0].start:.4g} on vertex {thin[0].vertex}")

    rest = region_subtract(region, [Segment(line.vertex, line.start, line.end) for line in T.lines])
    found_a, found_b = rest.locate(a, closed=True), rest.locate(b, closed=True)
    if found_a is None or found_b is None:
        raise ParameterError("the endpoints must lie outside the separating set")
    labels = _line_components(rest)
    if labels[found_a[0]] == labels[found_b[0]]:
        raise ParameterError("the given set does not separate a from b")

    per_vertex: Dict[int, List[Tuple[float, float]]] = {}
    for li, line in enumerate(rest.lines):
        if labels[li] == labels[found_a[0]]:
            per_vertex.setdefault(line.vertex, []).append((line.start, line.end))
    for line in T.lines:
        per_vertex.setdefault(line.vertex, []).append((line.start, line.end))
    U = Region.from_intervals(region.lattice, region.time, per_vertex)
    return T, U


@dataclass
class SimonLiebReport:
    lhs: Estimate
    simon_rhs: Estimate
    lieb_rhs: Estimate
    simon_margin: Estimate
    lieb_margin: Estimate
    lieb_gap: Estimate
    epsilon: float
    simon_passed: bool
    lieb_passed: bool
    lieb_below_simon: bool

    @property
    def passed(self) -> bool:
        return self.simon_passed and self.lieb_passed

    def to_dict(self) -> Dict:
        out = {k: (v.to_dict() if isinstance(v, Estimate) else v) for k, v in self.__dict__.items()}
        out['passed'] = self.passed
        return out


def check_simon_lieb(region: Region, a: Point, b: Point, separator: Sequence[Segment], epsilon: float,
                     params: Params, n_samples: int, rng: np.random.Generator,
                     quadrature: Optional[Quadrature] = None, workers: int = 1,
                     sigma_buffer: float = 3.0) -> SimonLiebReport:
    """
    <sigma_a sigma_b> <= eps^-1 e^{8 eps delta} int_T <sigma_a sigma_x> <sigma_x sigma_b> dx,
    and the sharper form with <sigma_a sigma_x> taken in the restricted region U.
    """
    if params.gamma != 0:
        raise ParameterError("the Simon and Lieb inequalities are checked at zero field")
    quadrature = quadrature or Quadrature()
    if quadrature.kind != GRID:
        raise ParameterError("products of correlations need a grid quadrature")
    T, U = separated_side(region, a, b, separator, epsilon)
    nodes = quadrature.nodes(T)
    k = len(nodes)
    weights = np.array([w for _, w in nodes])
    prefactor = math.exp(8.0 * epsilon * params.delta) / epsilon

    full_sets = [EMPTY, SourceSet.of(a, b)] + [SourceSet.of(a, x) for x, _ in nodes] \
        + [SourceSet.of(x, b) for x, _ in nodes]
    restricted_sets = [EMPTY] + [SourceSet.of(a, x) for x, _ in nodes]
    stream_full, stream_restricted = rng.spawn(2)
    rows = np.hstack([
        sample_weights(region, params, full_sets, n_samples, stream_full, workers=workers),
        sample_weights(U, params, restricted_sets, n_samples, stream_restricted, workers=workers),
    ])
    ax = slice(2, 2 + k)
    xb = slice(2 + k, 2 + 2 * k)
    u0 = 2 + 2 * k
    ux = slice(u0 + 1, u0 + 1 + k)

    def lhs(m):
        return m[1] / m[0]

    def simon(m):
        return prefactor * float(np.dot(weights, m[ax] * m[xb])) / m[0] ** 2

    def lieb(m):
        return prefactor * float(np.dot(weights, (m[ux] / m[u0]) * (m[xb] / m[0])))

    report_lhs = jackknife(rows, lhs)
    simon_margin = jackknife(rows, lambda m: simon(m) - lhs(m))
    lieb_margin = jackknife(rows, lambda m: lieb(m) - lhs(m))
    gap = jackknife(rows, lambda m: simon(m) - lieb(m))
    report = SimonLiebReport(
        lhs=report_lhs,
        simon_rhs=jackknife(rows, simon),
        lieb_rhs=jackknife(rows, lieb),
        simon_margin=simon_margin,
        lieb_margin=lieb_margin,
        lieb_gap=gap,
        epsilon=epsilon,
        simon_passed=one_sided_holds(0.0, simon_margin.value, simon_margin.std_error, sigma_buffer),
        lieb_passed=one_sided_holds(0.0, lieb_margin.value, lieb_margin.std_error, sigma_buffer),
        lieb_below_simon=one_sided_holds(0.0, gap.value, gap.std_error, sigma_buffer),
    )
    get_logger().log_verification('simon_lieb', report.passed, report.to_dict())
    return report


# ---------------------------------------------------------------------------
# Partial differential inequalities
# ---------------------------------------------------------------------------

@dataclass
class PDIReport:
    magnetization: Estimate
    susceptibility: Estimate
    derivatives: Dict[str, Estimate]
    slack: Estimate
    terms: Dict[str, float]
    combined_slack: Optional[Estimate]
    bounds: Dict[str, Dict]
    passed: bool
    combined_passed: bool

    def to_dict(self) -> Dict:
        return {
            'magnetization': self.magnetization.to_dict(),
            'susceptibility': self.susceptibility.to_dict(),
            'derivatives': {k: v.to_dict() for k, v in self.derivatives.items()},
            'slack': self.slack.to_dict(),
            'terms': dict(self.terms),
            'combined_slack': self.combined_slack.to_dict() if self.combined_slack else None,
            'bounds': self.bounds,
            'passed': self.passed,
            'combined_passed': self.combined_passed,
        }


def main_pdi_slack(M: Estimate, chi: Estimate, dlam: Estimate, ddelta: Estimate,
                   params: Params) -> Estimate:
    """gamma chi + M^3 + 2 lambda M^2 dM/dlambda - 2 delta M^2 dM/ddelta - M."""
    lam, delta, gamma = params.lam, params.delta, params.gamma
    return propagate(lambda m, c, dl, dd: gamma * c + m ** 3 + 2 * lam * m * m * dl
                     - 2 * delta * m * m * dd - m, [M, chi, dlam, ddelta])


def check_combined_pdi(M: Estimate, chi: Estimate, params: Params, dimension: int,
                       sigma_buffer: float = 3.0) -> Tuple[Optional[Estimate], bool]:
    """M <= M^3 + chi (gamma + 4 d lambda M^3 + 4 delta M^3 / (1 - M^2))."""
    if M.value >= 1:
        get_logger().warning("combined inequality skipped: M estimate is not below 1")
        return None, False
    lam, delta, gamma = params.lam, params.delta, params.gamma
    slack = propagate(lambda m, c: m ** 3 + c * (gamma + 4 * dimension * lam * m ** 3
                                                 + 4 * delta * m ** 3 / (1 - m * m)) - m, [M, chi])
    return slack, one_sided_holds(0.0, slack.value, slack.std_error, sigma_buffer)


def check_main_pdi(region: Region, params: Params, n_samples: int, rng: np.random.Generator,
                   quadrature: Optional[Quadrature] = None, derivative_quadrature: Optional[Quadrature] = None,
                   origin: Optional[Point] = None, workers: int = 1,
                   sigma_buffer: float = 3.0) -> PDIReport:
    """
    M <= gamma chi + M^3 + 2 lambda M^2 dM/dlambda - 2 delta M^2 dM/ddelta,
    with every quantity estimated independently.
    """
    check_assumption(region)
    s_m, s_chi, s_der = rng.spawn(3)
    M = magnetization(region, params, n_samples, s_m, origin=origin, workers=workers)
    chi = susceptibility(region, params, n_samples, quadrature, s_chi, origin=origin, workers=workers)
    derivs = derivative_estimators(region, params, n_samples, s_der, quadrature=derivative_quadrature,
                                   origin=origin, workers=workers)
    slack = main_pdi_slack(M, chi, derivs['dM_dlambda'], derivs['dM_ddelta'], params)
    m = M.value
    terms = {
        'field': params.gamma * chi.value,
        'cubic': m ** 3,
        'bridges': 2 * params.lam * m * m * derivs['dM_dlambda'].value,
        'deaths': -2 * params.delta * m * m * derivs['dM_ddelta'].value,
    }
    dimension = region.lattice.dimension
    combined, combined_passed = check_combined_pdi(M, chi, params, dimension, sigma_buffer)
    report = PDIReport(
        magnetization=M, susceptibility=chi, derivatives=derivs, slack=slack, terms=terms,
        combined_slack=combined,
        bounds=check_derivative_bounds(derivs, M, params, dimension, sigma_buffer),
        passed=one_sided_holds(0.0, slack.value, slack.std_error, sigma_buffer),
        combined_passed=combined_passed,
    )
    get_logger().log_verification('main_pdi', report.passed, report.to_dict())
    return report


# ---------------------------------------------------------------------------
# Fits and monotonicity
# ---------------------------------------------------------------------------

def weighted_slope(x, y, sigma) -> Estimate:
    """
    Weighted least-squares slope of y against x.

    Known errors weigh the points; when any error is zero the fit is
    unweighted and the slope error comes from the residual scatter.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    design = np.column_stack([x, np.ones_like(x)])
    if np.all(sigma > 0):
        w = 1.0 / sigma ** 2
        normal = design.T @ (design * w[:, None])
        coef = np.linalg.solve(normal, design.T @ (w * y))
        cov = np.linalg.inv(normal)
    else:
        coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
        residual = y - design @ coef
        dof = max(x.size - 2, 1)
        cov = float(residual @ residual) / dof * np.linalg.inv(design.T @ design)
    return Estimate(float(coef[0]), float(math.sqrt(max(cov[0, 0], 0.0))), int(x.size))


def mass_estimate(correlations: Sequence[Tuple[float, Estimate]]) -> Estimate:
    """Slope of -log <sigma_0 sigma_x> against distance over the resolved points."""
    usable = [(float(d), c) for d, c in correlations
              if c.value > 0 and c.value > MASS_SIGNAL_SIGMAS * c.std_error]
    if len(usable) < MIN_MASS_POINTS:
        raise InsufficientDataError(f"mass fit needs {MIN_MASS_POINTS} resolved distances, "
                                    f"got {len(usable)}")
    usable.sort(key=lambda item: item[0])
    d = [u[0] for u in usable]
    y = [-math.log(c.value) for _, c in usable]
    s = [c.std_error / c.value for _, c in usable]
    return weighted_slope(d, y, s)


def field_exponent_slope(gammas: Sequence[float], curve: Sequence[Estimate]) -> Estimate:
    """Log-log slope of M(gamma); at criticality it stays near 1/3 or below."""
    points = [(g, m) for g, m in zip(gammas, curve) if g > 0 and m.value > 0]
    if len(points) < 2:
        raise InsufficientDataError("field exponent needs two positive magnetizations")
    x = [math.log(g) for g, _ in points]
    y = [math.log(m.value) for _, m in points]
    s = [m.std_error / m.value for _, m in points]
    return weighted_slope(x, y, s)


INCREASING = {'lam': True, 'gamma': True, 'delta': False}


@dataclass
class MonotonicityReport:
    parameter: str
    values: Tuple[float, ...]
    estimates: List[Estimate]
    passed: bool

    def to_dict(self) -> Dict:
        return {'parameter': self.parameter, 'values': list(self.values),
                'estimates': [e.to_dict() for e in self.estimates], 'passed': self.passed}


def check_monotonicity(region: Region, sources: SourceSet, params: Params, parameter: str,
                       values: Sequence[float], n_samples: int, rng: np.random.Generator,
                       workers: int = 1, sigma_buffer: float = 3.0) -> MonotonicityReport:
    """<sigma_A> increases in lambda and gamma and decreases in delta."""
    if parameter not in INCREASING:
        raise ParameterError(f"unknown parameter '{parameter}'")
    values = tuple(sorted(float(v) for v in values))
    streams = rng.spawn(len(values))
    curve = [estimate_correlation(region, sources, params.replace(**{parameter: v}), n_samples, s,
                                  workers=workers)
             for v, s in zip(values, streams)]
    passed = True
    for lo, hi in zip(curve[:-1], curve[1:]):
        step = hi.value - lo.value if INCREASING[parameter] else lo.value - hi.value
        if not one_sided_holds(0.0, step, combine_quadrature(lo.std_error, hi.std_error), sigma_buffer):
            passed = False
    report = MonotonicityReport(parameter, values, curve, passed)
    get_logger().log_verification(f'monotonicity_{parameter}', passed, report.to_dict())
    return report


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class ObservableReport:
    """One estimate at one parameter point, ready for the results artifacts."""
    name: str
    point: Dict[str, float]
    estimate: Estimate
    metadata: Dict = field(default_factory=dict)

    @classmethod
    def build(cls, name: str, region: Region, params: Params, estimate: Estimate,
              **metadata) -> "ObservableReport":
        point = dict(params.to_dict())
        point.update({'beta': region.beta, 'n': region.lattice.half_width,
                      'd': region.lattice.dimension})
        return cls(name, point, estimate, dict(metadata))

    def to_dict(self) -> Dict:
        out = {'name': self.name}
        out.update(self.point)
        out.update(self.estimate.to_dict())
        out.update(self.metadata)
        return out
