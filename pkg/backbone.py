"""
Backbone of a valid colouring.

Starting from the least pending source, the backbone follows the odd
segment leaving it, crosses every bridge it meets and stops at the first
source or ghost-bond. Repeating this for every pending source yields a
sequence of disjoint directed odd paths; what remains of the odd set is a
disjoint union of cycles.

The weight of a backbone nu for a source set A is Z_{K minus nu} / Z_K when
A matches the endpoints of nu and 0 otherwise, with Z_R = E_R(weight psi^empty).
"""

import json
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

import oracle
from domain import (GHOST, Bridge, Params, Point, Region, Segment, is_ghost, region_subtract,
                    sample_configuration)
from estimates import Estimate, mean_estimate, propagate, z_score
from exceptions import (CapabilityError, InsufficientDataError, InvariantViolation,
                        ParameterError, PreconditionError)
from logger import get_logger
from parity import (BRIDGE_END, EMPTY, ODD, SOURCE, Colouring, SourceSet, build_colouring,
                    estimate_correlation, point_key, sample_weights)
from sampling import DEFAULT_BATCH_SIZE, collect

# Largest lattice for the nested backbone check
BACKBONE_CHECK_MAX_VERTICES = 3

# Inner validity estimates are retried with a doubled budget this many times
INNER_RETRIES = 3

EXACT_TOL = 1e-10


class Leg(NamedTuple):
    """One closed odd segment of a path, traversed upwards in time when forward."""
    segment: Segment
    forward: bool

    @property
    def entry(self) -> float:
        return self.segment.start if self.forward else self.segment.end

    @property
    def exit(self) -> float:
        return self.segment.end if self.forward else self.segment.start


@dataclass(frozen=True)
class Path:
    """
    A directed odd path from a source to another source or to the ghost-site.

    Consecutive legs are joined by the bridges in `bridges`; a path ending
    at the ghost-site records the ghost-bond it stopped at.
    """
    start: Point
    end: Point
    legs: Tuple[Leg, ...]
    bridges: Tuple[Bridge, ...] = ()
    ghost_bond: Optional[Point] = None

    @property
    def ends_at_ghost(self) -> bool:
        return is_ghost(self.end)

    @property
    def length(self) -> float:
        return math.fsum(leg.segment.length for leg in self.legs)

    @property
    def segments(self) -> List[Segment]:
        return [leg.segment for leg in self.legs]

    def to_dict(self) -> Dict:
        return {
            'start': [self.start.vertex, self.start.time],
            'end': None if self.ends_at_ghost else [self.end.vertex, self.end.time],
            'ghost_bond': None if self.ghost_bond is None else [self.ghost_bond.vertex, self.ghost_bond.time],
            'legs': [[leg.segment.vertex, leg.segment.start, leg.segment.end, leg.forward]
                     for leg in self.legs],
            'bridges': [[b.u, b.v, b.time] for b in self.bridges],
        }


@dataclass(frozen=True)
class Backbone:
    """Ordered sequence of disjoint paths, in extraction order."""
    paths: Tuple[Path, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.paths

    @property
    def segments(self) -> List[Segment]:
        return [seg for path in self.paths for seg in path.segments]

    @property
    def length(self) -> float:
        return math.fsum(path.length for path in self.paths)

    @property
    def ghost_ends(self) -> int:
        return sum(1 for path in self.paths if path.ends_at_ghost)

    def endpoints(self) -> SourceSet:
        """Lattice endpoints of all paths, as a source set."""
        points = []
        for path in self.paths:
            points.append(path.start)
            if not path.ends_at_ghost:
                points.append(path.end)
        return SourceSet.of(points)

    def to_dict(self) -> Dict:
        return {'paths': [path.to_dict() for path in self.paths]}


def backbone_to_json(nu: Backbone) -> str:
    return json.dumps(nu.to_dict(), indent=2)


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

class _OddWalker:
    """Follows odd segments of a valid colouring, marking each segment used once."""

    def __init__(self, psi: Colouring):
        if not psi.valid:
            raise PreconditionError("cannot walk the failed colouring")
        self.psi = psi
        region = psi.region
        self.points: Dict[Tuple[int, float], Point] = {}
        self.partner: Dict[Tuple[int, float], Tuple[Tuple[int, float], Bridge]] = {}
        for p in list(psi.sources) + list(psi.ghosts):
            self.points[point_key(region, p)] = p
        for b in psi.bridges:
            x, y = b.endpoints()
            kx, ky = point_key(region, x), point_key(region, y)
            self.points[kx], self.points[ky] = x, y
            self.partner[kx] = (ky, b)
            self.partner[ky] = (kx, b)
        self.used = set()

    def odd_direction(self, li: int, pos: int) -> Optional[int]:
        line = self.psi.lines[li]
        left, right = line.adjacent_segments(pos)
        if line.labels[right] == ODD:
            return 1
        if line.labels[left] == ODD:
            return -1
        return None

    def odd_segment(self, li: int, pos: int, direction: int) -> int:
        left, right = self.psi.lines[li].adjacent_segments(pos)
        return right if direction > 0 else left

    def step(self, li: int, pos: int, direction: int) -> Tuple[Leg, Optional[int]]:
        line = self.psi.lines[li]
        seg = self.odd_segment(li, pos, direction)
        if (li, seg) in self.used:
            raise InvariantViolation(f"odd segment {seg} on vertex {line.vertex} visited twice")
        self.used.add((li, seg))
        leg = Leg(Segment(line.vertex, line.bounds[seg], line.bounds[seg + 1]), direction > 0)
        k = len(line.times)
        if line.cyclic:
            return leg, (pos + direction) % k
        nxt = pos + direction
        return leg, (nxt if 0 <= nxt < k else None)

    def cross(self, key) -> Tuple[int, int, int, Bridge]:
        """Jump over the bridge at `key`; returns (line, position, odd direction, bridge)."""
        other, bridge = self.partner[key]
        li, pos = self.psi.position_of(other)
        direction = self.odd_direction(li, pos)
        if direction is None:
            raise InvariantViolation(f"bridge {bridge} leads onto an even stretch")
        return li, pos, direction, bridge

    def walk(self, li: int, pos: int, direction: int):
        legs, bridges = [], []
        while True:
            leg, nxt = self.step(li, pos, direction)
            legs.append(leg)
            if nxt is None:
                raise InvariantViolation(f"odd path dead-ends on vertex {leg.segment.vertex}")
            line = self.psi.lines[li]
            kind, key = line.kinds[nxt], line.keys[nxt]
            if kind != BRIDGE_END:
                return legs, bridges, kind, key
            li, pos, direction, bridge = self.cross(key)
            bridges.append(bridge)

    def walk_cycle(self, li: int, seg: int) -> List[Leg]:
        line = self.psi.lines[li]
        if not line.times:
            self.used.add((li, seg))
            return [Leg(Segment(line.vertex, line.bounds[0], line.bounds[1]), True)]
        pos = seg if line.cyclic else seg - 1
        if pos < 0:
            raise InvariantViolation(f"odd segment touches the start of an interval on vertex {line.vertex}")
        start = (li, seg)
        direction = 1
        legs = []
        while True:
            leg, nxt = self.step(li, pos, direction)
            legs.append(leg)
            if nxt is None:
                raise InvariantViolation("leftover odd stretch dead-ends")
            kind, key = self.psi.lines[li].kinds[nxt], self.psi.lines[li].keys[nxt]
            if kind != BRIDGE_END:
                raise InvariantViolation(f"leftover odd stretch ends at a {kind} point {key}")
            li, pos, direction, _ = self.cross(key)
            if (li, self.odd_segment(li, pos, direction)) == start:
                return legs

    def remaining_cycles(self) -> List[List[Leg]]:
        cycles = []
        for li, line in enumerate(self.psi.lines):
            for seg, (lo, hi, label) in enumerate(line.segments()):
                if label == ODD and hi > lo and (li, seg) not in self.used:
                    cycles.append(self.walk_cycle(li, seg))
        return cycles


def decompose(psi: Colouring) -> Tuple[Backbone, List[List[Leg]]]:
    """Backbone of psi and the leftover odd cycles; raises if anything else is left."""
    if not psi.valid or len(psi.sources) == 0:
        if psi.valid:
            return Backbone(), _OddWalker(psi).remaining_cycles()
        return Backbone(), []

    walker = _OddWalker(psi)
    region = psi.region
    done = set()
    paths = []
    for a in psi.sources:
        ka = point_key(region, a)
        if ka in done:
            continue
        li, pos = psi.position_of(ka)
        direction = walker.odd_direction(li, pos)
        if direction is None:
            raise InvariantViolation(f"source {a} has no odd side")
        legs, bridges, kind, key = walker.walk(li, pos, direction)
        done.add(ka)
        if kind == SOURCE:
            done.add(key)
            paths.append(Path(a, walker.points[key], tuple(legs), tuple(bridges)))
        else:
            paths.append(Path(a, GHOST, tuple(legs), tuple(bridges), walker.points[key]))
    return Backbone(tuple(paths)), walker.remaining_cycles()


def extract_backbone(psi: Colouring) -> Backbone:
    """xi(psi); the failed colouring has the empty backbone."""
    backbone, _ = decompose(psi)
    return backbone


def leftover_cycles(psi: Colouring) -> List[List[Leg]]:
    _, cycles = decompose(psi)
    return cycles


# ---------------------------------------------------------------------------
# Cutting and concatenation
# ---------------------------------------------------------------------------

def _split_time(leg: Leg, x: Point, beta: float) -> Optional[float]:
    seg = leg.segment
    if seg.vertex != x.vertex:
        return None
    for t in (x.time, x.time + beta, x.time - beta):
        if seg.start < t < seg.end:
            return t
    return None


def cut_backbone(nu: Backbone, x: Point, beta: float) -> Tuple[Backbone, Backbone]:
    """
    Cut nu at an interior point x of one of its legs.

    Returns (nu1, nu2): the paths before x with the first half of the cut
    path ending at x, and the second half starting at x with the remaining
    paths. concatenate(nu1, nu2) restores nu.
    """
    for i, path in enumerate(nu.paths):
        for j, leg in enumerate(path.legs):
            t = _split_time(leg, x, beta)
            if t is None:
                continue
            v, lo, hi = leg.segment
            if leg.forward:
                before, after = Leg(Segment(v, lo, t), True), Leg(Segment(v, t, hi), True)
            else:
                before, after = Leg(Segment(v, t, hi), False), Leg(Segment(v, lo, t), False)
            head = Path(path.start, x, path.legs[:j] + (before,), path.bridges[:j])
            tail = Path(x, path.end, (after,) + path.legs[j + 1:], path.bridges[j:], path.ghost_bond)
            return Backbone(nu.paths[:i] + (head,)), Backbone((tail,) + nu.paths[i + 1:])
    raise PreconditionError(f"cut point {x} is not interior to the backbone")


def _contiguous(a: Leg, b: Leg) -> bool:
    if a.segment.vertex != b.segment.vertex or a.forward != b.forward:
        return False
    if a.forward:
        return a.segment.end == b.segment.start
    return a.segment.start == b.segment.end


def concatenate(nu1: Backbone, nu2: Backbone) -> Backbone:
    """nu1 o nu2; a path of nu1 ending where the first path of nu2 starts is rejoined."""
    if nu1.paths and nu2.paths:
        head, tail = nu1.paths[-1], nu2.paths[0]
        if not head.ends_at_ghost and head.end == tail.start \
                and _contiguous(head.legs[-1], tail.legs[0]):
            a, b = head.legs[-1], tail.legs[0]
            v = a.segment.vertex
            if a.forward:
                merged = Leg(Segment(v, a.segment.start, b.segment.end), True)
            else:
                merged = Leg(Segment(v, b.segment.start, a.segment.end), False)
            path = Path(head.start, tail.end, head.legs[:-1] + (merged,) + tail.legs[1:],
                        head.bridges + tail.bridges, tail.ghost_bond)
            return Backbone(nu1.paths[:-1] + (path,) + nu2.paths[1:])
    return Backbone(nu1.paths + nu2.paths)


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

def compatible(A: SourceSet, nu: Backbone, gamma: float) -> bool:
    """A ~ nu: the endpoints of nu are exactly A, and ghost ends need a field."""
    if nu.ghost_ends and gamma == 0:
        return False
    return nu.endpoints() == A


def estimate_normalized_partition(region: Region, params: Params, n_samples: int,
                                  rng: np.random.Generator, workers: int = 1) -> Tuple[Estimate, float]:
    """Mean of exp(-2 delta |odd psi^empty|) over the region, and the valid fraction."""
    weights = sample_weights(region, params, (EMPTY,), n_samples, rng, workers=workers)[:, 0]
    return mean_estimate(weights), float(np.mean(weights > 0))


def _exact_normalized(region: Region, params: Params) -> float:
    return oracle.region_normalized_partition(region, params) * math.exp(-2.0 * params.delta * region.total_measure)


def backbone_weight(region: Region, nu: Backbone, A: SourceSet, params: Params, n_samples: int,
                    rng: np.random.Generator, inner: str = 'mc', workers: int = 1) -> Estimate:
    """
    w^A(nu) = Z_{K minus nu} / Z_K = exp(-2 delta |nu|) z_{K minus nu} / z_K
    with z the mean normalized weight. inner='oracle' evaluates both exactly.
    """
    if inner not in ('mc', 'oracle'):
        raise ParameterError(f"inner must be 'mc' or 'oracle', got '{inner}'")
    if nu.is_empty and len(A) == 0:
        return Estimate.exact(1.0, n_samples)
    if not compatible(A, nu, params.gamma):
        return Estimate.exact(0.0, n_samples, flags=('incompatible',))

    remainder = region_subtract(region, nu.segments)
    decay = math.exp(-2.0 * params.delta * nu.length)
    if inner == 'oracle':
        return Estimate.exact(decay * _exact_normalized(remainder, params) / _exact_normalized(region, params))

    stream_r, stream_k = rng.spawn(2)
    z_r, _ = estimate_normalized_partition(remainder, params, n_samples, stream_r, workers)
    z_k, _ = estimate_normalized_partition(region, params, n_samples, stream_k, workers)
    weight = propagate(lambda a, b: decay * a / b, [z_r, z_k])
    get_logger().log_estimate('backbone_weight', weight, params.to_dict())
    return weight


@dataclass
class FactorizationReport:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    z: float
    passed: bool

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


def verify_weight_factorization(region: Region, nu: Backbone, params: Params, n_samples: int,
                                rng: np.random.Generator, x: Optional[Point] = None,
                                inner: str = 'mc', sigma_buffer: float = 3.0) -> FactorizationReport:
    """
    Compare w^A(nu) with w^{B1}(nu1) w^{B2}_{K minus nu1}(nu2).

    With x the split is a cut at x (B1, B2 both contain x); without x, nu1
    is the first path and nu2 the rest.
    """
    if x is not None:
        first, second = cut_backbone(nu, x, region.beta)
    else:
        if len(nu.paths) < 2:
            raise ParameterError("splitting without a cut point needs at least two paths")
        first, second = Backbone(nu.paths[:1]), Backbone(nu.paths[1:])

    streams = rng.spawn(3)
    lhs = backbone_weight(region, nu, nu.endpoints(), params, n_samples, streams[0], inner)
    w1 = backbone_weight(region, first, first.endpoints(), params, n_samples, streams[1], inner)
    shrunk = region_subtract(region, first.segments)
    w2 = backbone_weight(shrunk, second, second.endpoints(), params, n_samples, streams[2], inner)
    rhs = propagate(lambda a, b: a * b, [w1, w2])

    if lhs.is_exact and rhs.is_exact:
        z = 0.0
        passed = abs(lhs.value - rhs.value) <= EXACT_TOL * max(1.0, abs(lhs.value))
    else:
        z = z_score(lhs, rhs)
        passed = abs(z) < sigma_buffer
    report = FactorizationReport(lhs.value, lhs.std_error, rhs.value, rhs.std_error, z, passed)
    get_logger().log_verification('weight_factorization', passed, report.to_dict())
    return report


# ---------------------------------------------------------------------------
# Backbone representation of correlations
# ---------------------------------------------------------------------------

def _remainder_partition(remainder: Region, params: Params, inner: str, n_inner: int,
                         rng: np.random.Generator) -> Tuple[float, float]:
    """(z_R, P_R(psi^empty valid)) exactly or by inner Monte Carlo."""
    if inner == 'oracle':
        valid = oracle.region_normalized_partition(remainder, params.replace(delta=0.0))
        return _exact_normalized(remainder, params), valid
    budget = n_inner
    for _ in range(INNER_RETRIES + 1):
        weights = sample_weights(remainder, params, (EMPTY,), budget, rng)[:, 0]
        valid = float(np.mean(weights > 0))
        if valid > 0:
            return float(weights.mean()), valid
        budget *= 2
    raise InsufficientDataError(f"no valid colouring of the remainder in {budget // 2} inner samples")


def _representation_batch(region: Region, sources: SourceSet, params: Params, inner: str,
                          n_inner: int, rng: np.random.Generator, count: int) -> np.ndarray:
    """Rows (validity-corrected numerator, raw numerator, ends-at-ghost flag)."""
    rows = np.zeros((count, 3))
    for i in range(count):
        config = sample_configuration(region, params, rng)
        psi = build_colouring(region, sources, config.bridges, config.ghosts, rng=rng)
        if not psi.valid:
            continue
        nu = extract_backbone(psi)
        remainder = region_subtract(region, nu.segments)
        z_r, valid = _remainder_partition(remainder, params, inner, n_inner, rng)
        numerator = math.exp(-2.0 * params.delta * nu.length) * z_r
        rows[i] = (numerator / valid, numerator, 1.0 if nu.ghost_ends else 0.0)
    return rows


@dataclass
class RepresentationReport:
    """E(w^A(xi)) against the parity estimator and the exact value."""
    backbone: Estimate
    raw_weight_mean: Estimate
    parity: Estimate
    exact: Optional[float]
    contributions: Dict[str, float] = field(default_factory=dict)
    z_parity: float = 0.0
    z_exact: Optional[float] = None
    passed: bool = False

    def to_dict(self) -> Dict:
        return {
            'backbone': self.backbone.to_dict(),
            'raw_weight_mean': self.raw_weight_mean.to_dict(),
            'parity': self.parity.to_dict(),
            'exact': self.exact,
            'contributions': dict(self.contributions),
            'z_parity': self.z_parity,
            'z_exact': self.z_exact,
            'passed': self.passed,
        }


def verify_backbone_representation(region: Region, A: SourceSet, params: Params, n_samples: int,
                                   rng: np.random.Generator, inner: str = 'mc',
                                   n_inner: Optional[int] = None, workers: int = 1,
                                   batch_size: int = DEFAULT_BATCH_SIZE,
                                   sigma_buffer: float = 3.0) -> RepresentationReport:
    """
    Estimate <sigma_A> through sampled backbones.

    Each outer sample draws (B, G), extracts xi = xi(psi^A) and evaluates
    Z_{K minus xi} by inner sampling (default budget sqrt(n_samples)) or
    exactly. Conditioning on xi also conditions the remainder on a valid
    colouring, so each term is divided by the remainder's validity
    probability; the uncorrected mean of w^A(xi) is reported alongside.
    """
    if region.lattice.n_vertices > BACKBONE_CHECK_MAX_VERTICES:
        raise CapabilityError(f"nested backbone check supports at most {BACKBONE_CHECK_MAX_VERTICES} "
                              f"vertices, got {region.lattice.n_vertices}")
    if inner not in ('mc', 'oracle'):
        raise ParameterError(f"inner must be 'mc' or 'oracle', got '{inner}'")
    n_inner = n_inner or max(16, int(math.ceil(math.sqrt(n_samples))))
    stream_outer, stream_z, stream_parity = rng.spawn(3)

    if inner == 'oracle':
        z_k = Estimate.exact(_exact_normalized(region, params))
    else:
        z_k, _ = estimate_normalized_partition(region, params, n_samples, stream_z, workers)

    fn = partial(_representation_batch, region, A, params, inner, n_inner)
    rows = collect(fn, n_samples, stream_outer, workers=workers, batch_size=batch_size,
                   desc="Backbones" if workers > 1 else None)

    corrected = propagate(lambda a, b: a / b, [mean_estimate(rows[:, 0]), z_k])
    raw = propagate(lambda a, b: a / b, [mean_estimate(rows[:, 1]), z_k])
    ghost = rows[:, 2] > 0
    contributions = {
        'direct': float(np.mean(np.where(ghost, 0.0, rows[:, 0])) / z_k.value),
        'via_ghost': float(np.mean(np.where(ghost, rows[:, 0], 0.0)) / z_k.value),
    }

    parity = estimate_correlation(region, A, params, n_samples, stream_parity, workers=workers)
    z_parity = z_score(corrected, parity)

    exact = None
    z_exact = None
    if region.lattice.n_vertices <= oracle.MAX_REGION_VERTICES:
        exact = oracle.region_correlation(region, params, list(A))
        if corrected.is_exact:
            z_exact = 0.0 if abs(corrected.value - exact) <= EXACT_TOL * max(1.0, abs(exact)) else math.inf
        else:
            z_exact = (corrected.value - exact) / corrected.std_error

    passed = abs(z_parity) < sigma_buffer and (z_exact is None or abs(z_exact) < sigma_buffer)
    report = RepresentationReport(corrected, raw, parity, exact, contributions, z_parity, z_exact, passed)
    get_logger().log_verification('backbone_representation', passed, report.to_dict())
    return report
