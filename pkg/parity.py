"""
Random-parity representation.

Given bridges B and ghost-bonds G on a region K and a source set A, a valid
colouring labels K minus the switching points S = A u G u V(B) even/odd so
that the label flips at every switching point and is even at every
non-source interval endpoint. Weights are exp(2 delta |even part|); the
failed colouring weighs 0. Correlations follow as
<sigma_A> = E(weight psi^A) / E(weight psi^empty).
"""

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

import oracle
from domain import (Bridge, Params, Point, Region, Segment, is_ghost,
                    sample_configuration)
from estimates import Estimate, ratio_estimate
from exceptions import (CapabilityError, ConsistencyError, InvariantViolation, ParameterError,
                        PreconditionError)
from logger import get_logger
from sampling import DEFAULT_BATCH_SIZE, collect

EVEN = 0
ODD = 1

SOURCE = 'source'
GHOST_BOND = 'ghost'
BRIDGE_END = 'bridge'

# Largest vertex count for the exact partition-function cross-check
PARTITION_CHECK_MAX_VERTICES = 3


@dataclass(frozen=True)
class SourceSet:
    """
    Sorted lattice sources. The ghost-site counts as a source exactly when
    the number of lattice sources is odd.
    """
    points: Tuple[Point, ...] = ()

    @classmethod
    def of(cls, *points) -> "SourceSet":
        """Build from points (or one iterable); repeated points cancel, GHOST entries are dropped."""
        if len(points) == 1 and not isinstance(points[0], Point):
            points = tuple(points[0])
        kept: Dict[Tuple[int, float], Point] = {}
        for p in points:
            p = Point(int(p[0]), float(p[1]))
            if is_ghost(p):
                continue
            key = (p.vertex, p.time)
            if key in kept:
                del kept[key]
            else:
                kept[key] = p
        return cls(tuple(sorted(kept.values())))

    @property
    def includes_ghost(self) -> bool:
        return len(self.points) % 2 == 1

    def symmetric_difference(self, *points) -> "SourceSet":
        return SourceSet.of(tuple(self.points) + tuple(points))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def to_dict(self) -> Dict:
        return {'points': [[p.vertex, p.time] for p in self.points],
                'includes_ghost': self.includes_ghost}


EMPTY = SourceSet()


def point_key(region: Region, point: Point) -> Tuple[int, float]:
    """Canonical (vertex, time) key; circle times are reduced mod beta."""
    if is_ghost(point):
        return (-1, 0.0)
    if region.time.is_circle:
        return (point.vertex, point.time % region.beta)
    return (point.vertex, point.time)


def _line_labels(n_points: int, cyclic: bool, first_time: Optional[float], bit: int) -> List[int]:
    """Labels of the segments between consecutive switching points."""
    if not cyclic:
        return [i % 2 for i in range(n_points + 1)]
    if n_points == 0:
        return [bit]
    # Segment holding 0+: the one starting at 0, else the wrapping last one
    idx0 = 0 if first_time == 0.0 else n_points - 1
    return [bit ^ ((j - idx0) % 2) for j in range(n_points)]


@dataclass(frozen=True)
class LineColouring:
    """Colouring of one maximal interval (or full circle) of K."""
    vertex: int
    start: float
    end: float
    cyclic: bool
    times: Tuple[float, ...]
    kinds: Tuple[str, ...]
    keys: Tuple[Tuple[int, float], ...]
    bounds: Tuple[float, ...]
    labels: Tuple[int, ...]

    @property
    def length(self) -> float:
        return self.end - self.start

    def segments(self) -> Iterable[Tuple[float, float, int]]:
        for i, label in enumerate(self.labels):
            yield self.bounds[i], self.bounds[i + 1], label

    def measure_of(self, label: int) -> float:
        return math.fsum(hi - lo for lo, hi, lab in self.segments() if lab == label)

    def to_line_time(self, t: float, beta: float) -> float:
        if self.cyclic:
            t = t % beta
            if self.times and t < self.bounds[0]:
                t += beta
        return t

    def segment_index(self, t: float) -> int:
        """Index of the segment holding line time t (right-continuous)."""
        idx = bisect_right(self.bounds, t) - 1
        return min(max(idx, 0), len(self.labels) - 1)

    def label_at(self, t: float) -> int:
        return self.labels[self.segment_index(t)]

    def point_position(self, key: Tuple[int, float]) -> int:
        return self.keys.index(key)

    def adjacent_segments(self, position: int) -> Tuple[Optional[int], Optional[int]]:
        """(left, right) segment indices of the switching point at `position`."""
        if self.cyclic:
            k = len(self.times)
            return (position - 1) % k, position
        return position, position + 1


def _place(region: Region, point: Point, closed: bool) -> Tuple[int, float]:
    found = region.locate(point, closed=closed)
    if found is None:
        raise ConsistencyError(f"switching point {point} lies outside the region")
    return found


@dataclass(frozen=True)
class Colouring:
    """A valid colouring (lines set) or the failed colouring (lines None)."""
    region: Region
    sources: SourceSet
    bridges: Tuple[Bridge, ...]
    ghosts: Tuple[Point, ...]
    bits: Tuple[Tuple[int, int], ...]
    lines: Optional[Tuple[LineColouring, ...]]

    @property
    def valid(self) -> bool:
        return self.lines is not None

    def even_measure(self) -> float:
        if not self.valid:
            return 0.0
        return math.fsum(line.measure_of(EVEN) for line in self.lines)

    def odd_measure(self) -> float:
        if not self.valid:
            return 0.0
        return math.fsum(line.measure_of(ODD) for line in self.lines)

    def line_of(self, point: Point) -> Tuple[LineColouring, float]:
        if not self.valid:
            raise PreconditionError("the failed colouring has no labels")
        li, t = _place(self.region, point, closed=True)
        line = self.lines[li]
        return line, line.to_line_time(t, self.region.beta)

    def label_at(self, point: Point) -> int:
        line, t = self.line_of(point)
        return line.label_at(t)

    def odd_segments(self) -> List[Segment]:
        if not self.valid:
            return []
        return [Segment(line.vertex, lo, hi) for line in self.lines
                for lo, hi, lab in line.segments() if lab == ODD and hi > lo]

    def position_of(self, key: Tuple[int, float]) -> Tuple[int, int]:
        """(line index, point position) of a switching point by canonical key."""
        for li in self.region.lines_by_vertex[key[0]]:
            line = self.lines[li]
            if key in line.keys:
                return li, line.keys.index(key)
        raise InvariantViolation(f"switching point {key} not present in the colouring")

    def reconstruct(self) -> Tuple[Tuple[Bridge, ...], Tuple[Point, ...]]:
        """
        Recover (B, G) from the labels alone.

        Label changes that are not sources are paired by time: a time seen on
        two vertices is a bridge, a time seen once is a ghost-bond.
        """
        if not self.valid:
            raise PreconditionError("cannot reconstruct from the failed colouring")
        beta = self.region.beta
        source_keys = {point_key(self.region, p) for p in self.sources}
        by_time: Dict[float, List[int]] = {}
        for line in self.lines:
            changes = []
            if line.cyclic:
                k = len(line.labels)
                for j in range(k if len(line.times) else 0):
                    if line.labels[j] != line.labels[(j - 1) % k]:
                        changes.append(line.bounds[j])
            else:
                padded = (EVEN,) + line.labels + (EVEN,)
                all_bounds = line.bounds
                for j in range(len(all_bounds)):
                    if padded[j] != padded[j + 1]:
                        changes.append(all_bounds[j])
            for t in changes:
                canonical = t - beta if (self.region.time.is_circle and t >= beta) else t
                key = point_key(self.region, Point(line.vertex, canonical))
                if key in source_keys:
                    continue
                by_time.setdefault(key[1], []).append(line.vertex)
        bridges, ghosts = [], []
        for t, vertices in by_time.items():
            if len(vertices) == 2:
                u, v = sorted(vertices)
                bridges.append(Bridge(u, v, t))
            elif len(vertices) == 1:
                ghosts.append(Point(vertices[0], t))
            else:
                raise InvariantViolation(f"{len(vertices)} label changes share time {t}")
        return tuple(sorted(bridges)), tuple(sorted(ghosts))

    def check_invariants(self):
        """Alternation at every switching point and even labels at plain endpoints."""
        if not self.valid:
            return
        for line in self.lines:
            k = len(line.times)
            if line.cyclic:
                if k % 2:
                    raise InvariantViolation(f"odd switching count on circle {line.vertex}")
                for j in range(k):
                    if line.labels[j] == line.labels[(j - 1) % k]:
                        raise InvariantViolation(f"labels fail to alternate on circle {line.vertex}")
            else:
                if line.labels[0] != EVEN or line.labels[-1] != EVEN:
                    raise InvariantViolation(f"interval on vertex {line.vertex} has an odd endpoint")
                for j in range(1, len(line.labels)):
                    if line.labels[j] == line.labels[j - 1]:
                        raise InvariantViolation(f"labels fail to alternate on vertex {line.vertex}")


def draw_bits(region: Region, rng: Optional[np.random.Generator]) -> Tuple[Tuple[int, int], ...]:
    """One fair bit per full-circle vertex, in vertex order."""
    w = region.W
    if rng is None:
        return tuple((v, 0) for v in w)
    values = rng.integers(0, 2, size=len(w))
    return tuple((v, int(b)) for v, b in zip(w, values))


def build_colouring(region: Region, sources: SourceSet, bridges: Sequence[Bridge],
                    ghosts: Sequence[Point], rng: Optional[np.random.Generator] = None,
                    bits: Optional[Sequence[Tuple[int, int]]] = None) -> Colouring:
    """
    Construct psi^A(B, G).

    Circle bits are drawn from rng before the parity check so that streams
    stay aligned whether or not the colouring fails. With neither rng nor
    bits, every circle starts even at 0+.
    """
    if bits is None:
        bits = draw_bits(region, rng)
    bits = tuple(bits)
    bit_of = dict(bits)

    per_line: List[List[Tuple[float, str, Tuple[int, float]]]] = [[] for _ in region.lines]
    seen = set()

    def add(point: Point, kind: str):
        key = point_key(region, point)
        if key in seen:
            raise ParameterError(f"switching point {point} is used twice")
        seen.add(key)
        li, t = _place(region, point, closed=(kind == SOURCE))
        per_line[li].append((t, kind, key))

    for p in sources:
        add(p, SOURCE)
    for g in ghosts:
        add(g, GHOST_BOND)
    for b in bridges:
        for p in b.endpoints():
            add(p, BRIDGE_END)

    lines = []
    failed = False
    for li, geom in enumerate(region.lines):
        entries = sorted(per_line[li])
        if len(entries) % 2:
            failed = True
            continue
        times = tuple(e[0] for e in entries)
        if geom.cyclic:
            bounds = times + (times[0] + region.beta,) if times else (0.0, region.beta)
        else:
            bounds = (geom.start,) + times + (geom.end,)
        labels = _line_labels(len(times), geom.cyclic, times[0] if times else None,
                              bit_of.get(geom.vertex, 0))
        lines.append(LineColouring(geom.vertex, geom.start, geom.end, geom.cyclic, times,
                                   tuple(e[1] for e in entries), tuple(e[2] for e in entries),
                                   bounds, tuple(labels)))

    return Colouring(region, sources, tuple(bridges), tuple(ghosts), bits,
                     None if failed else tuple(lines))


def colouring_weight(psi: Colouring, delta: float) -> float:
    """exp(2 delta |ev(psi)|); 0 for the failed colouring."""
    if delta < 0:
        raise ParameterError(f"delta must be non-negative, got {delta}")
    if not psi.valid:
        return 0.0
    return math.exp(2.0 * delta * psi.even_measure())


def log_weight(psi: Colouring, delta: float) -> float:
    if not psi.valid:
        return -math.inf
    return 2.0 * delta * psi.even_measure()


def normalized_weight(psi: Colouring, delta: float) -> float:
    """exp(-2 delta |odd(psi)|) = weight * exp(-2 delta |K|); bounded by 1."""
    if not psi.valid:
        return 0.0
    return math.exp(-2.0 * delta * psi.odd_measure())


# ---------------------------------------------------------------------------
# Fast weight evaluation for many source sets on one (B, G)
# ---------------------------------------------------------------------------

def _odd_length(times: np.ndarray, start: float, cyclic: bool, bit: int, beta: float) -> Optional[float]:
    k = times.size
    if k % 2:
        return None
    if not cyclic:
        return float(np.sum(times[1::2] - times[0::2]))
    if k == 0:
        return beta if bit else 0.0
    lengths = np.diff(np.append(times, times[0] + beta))
    parity = np.arange(k) % 2
    if times[0] != 0.0:
        parity = 1 - parity
    labels = parity ^ bit
    return float(np.sum(lengths[labels == 1]))


@dataclass(frozen=True)
class PlacedSources:
    """A source set pre-located on the lines of a region."""
    sources: SourceSet
    per_line: Dict[int, Tuple[float, ...]] = field(default_factory=dict)

    @classmethod
    def place(cls, region: Region, sources: SourceSet) -> "PlacedSources":
        per_line: Dict[int, List[float]] = {}
        for p in sources:
            li, t = _place(region, p, closed=True)
            per_line.setdefault(li, []).append(t)
        return cls(sources, {li: tuple(ts) for li, ts in per_line.items()})


class EventLayout:
    """Bridge and ghost switching points of one (B, G), sorted per line."""

    def __init__(self, region: Region, bridges: Sequence[Bridge], ghosts: Sequence[Point],
                 bits: Sequence[Tuple[int, int]]):
        self.region = region
        collected: List[List[float]] = [[] for _ in region.lines]
        for g in ghosts:
            li, t = _place(region, g, closed=False)
            collected[li].append(t)
        for b in bridges:
            for p in b.endpoints():
                li, t = _place(region, p, closed=False)
                collected[li].append(t)
        self.times = [np.sort(np.array(ts, dtype=float)) for ts in collected]
        bit_of = dict(bits)
        self.bits = [bit_of.get(line.vertex, 0) for line in region.lines]
        self.base = [_odd_length(ts, line.start, line.cyclic, bit, region.beta)
                     for ts, line, bit in zip(self.times, region.lines, self.bits)]
        self.base_failures = sum(1 for b in self.base if b is None)
        self.base_total = math.fsum(b for b in self.base if b is not None)

    def odd_measure(self, placed: PlacedSources) -> Optional[float]:
        """Odd measure of psi^A, or None when psi^A fails."""
        failures = self.base_failures
        total = self.base_total
        for li, extra in placed.per_line.items():
            old = self.base[li]
            if old is None:
                failures -= 1
            else:
                total -= old
            merged = np.sort(np.concatenate([self.times[li], np.array(extra)]))
            line = self.region.lines[li]
            new = _odd_length(merged, line.start, line.cyclic, self.bits[li], self.region.beta)
            if new is None:
                failures += 1
            else:
                total += new
        return None if failures else total

    def normalized_weight(self, placed: PlacedSources, delta: float) -> float:
        odd = self.odd_measure(placed)
        return 0.0 if odd is None else math.exp(-2.0 * delta * odd)


def _weight_batch(region: Region, params: Params, placed: Tuple[PlacedSources, ...],
                  rng: np.random.Generator, count: int) -> np.ndarray:
    out = np.empty((count, len(placed)))
    for i in range(count):
        config = sample_configuration(region, params, rng)
        bits = draw_bits(region, rng)
        layout = EventLayout(region, config.bridges, config.ghosts, bits)
        for j, ps in enumerate(placed):
            out[i, j] = layout.normalized_weight(ps, params.delta)
    return out


def sample_weights(region: Region, params: Params, source_sets: Sequence[SourceSet],
                   n_samples: int, rng: np.random.Generator, workers: int = 1,
                   batch_size: int = DEFAULT_BATCH_SIZE, desc: Optional[str] = None) -> np.ndarray:
    """
    Normalized weights exp(-2 delta |odd|) of psi^A for every A in source_sets,
    all evaluated on the same (B, G) and circle bits per row.
    """
    placed = tuple(PlacedSources.place(region, s) for s in source_sets)
    fn = partial(_weight_batch, region, params, placed)
    return collect(fn, n_samples, rng, workers=workers, batch_size=batch_size, desc=desc)


def estimate_correlation(region: Region, sources: SourceSet, params: Params, n_samples: int,
                         rng: np.random.Generator, workers: int = 1,
                         batch_size: int = DEFAULT_BATCH_SIZE) -> Estimate:
    """<sigma_A> as mean(weight psi^A) / mean(weight psi^empty) on common samples."""
    if len(sources) == 0:
        return Estimate.exact(1.0, n_samples)
    for p in sources:
        if not region.contains(p, closed=True):
            raise ConsistencyError(f"source {p} lies outside the region")
    if sources.includes_ghost and params.gamma == 0:
        get_logger().debug("odd source set at zero field: correlation vanishes")
        return Estimate.exact(0.0, n_samples, flags=('odd_sources_zero_field',))

    weights = sample_weights(region, params, (sources, EMPTY), n_samples, rng,
                             workers=workers, batch_size=batch_size)
    return ratio_estimate(weights[:, 0], weights[:, 1])


@dataclass
class PartitionReport:
    """Monte Carlo Z' against the exact transfer-matrix Z'."""
    z_prime_mc: float
    z_prime_mc_se: float
    z_prime_exact: float
    z_prime_conditional: Optional[float]
    ratio: float
    z: float
    passed: bool

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


def partition_prefactor(region: Region, params: Params) -> float:
    """log of 2^N exp(lambda |F| + gamma |K| + delta |K|), the factor turning
    the mean normalized weight into Z'."""
    return (region.N * math.log(2.0) + params.lam * region.overlap_measure
            + (params.gamma + params.delta) * region.total_measure)


def verify_partition_identity(region: Region, params: Params, n_samples: int,
                              rng: np.random.Generator, workers: int = 1,
                              n_conditional: int = 0, sigma_buffer: float = 3.0) -> PartitionReport:
    """
    Check Z' = 2^N e^{lambda|F| + gamma|K| - delta|K|} E(weight psi^empty).

    The exact Z' comes from the time-sliced transfer matrix; with
    n_conditional > 0 the conditional-Ising route E_D[Z_D] is averaged too.
    """
    if region.lattice.n_vertices > PARTITION_CHECK_MAX_VERTICES:
        raise CapabilityError(f"partition check supports at most {PARTITION_CHECK_MAX_VERTICES} "
                              f"vertices, got {region.lattice.n_vertices}")
    stream_mc, stream_cond = rng.spawn(2)
    weights = sample_weights(region, params, (EMPTY,), n_samples, stream_mc, workers=workers)[:, 0]
    mean = float(weights.mean())
    se = float(weights.std(ddof=1) / math.sqrt(weights.size))

    log_pre = partition_prefactor(region, params)
    log_exact = oracle.region_log_partition(region, params)
    exact_normalized = math.exp(log_exact - log_pre)

    conditional = None
    if n_conditional > 0:
        conditional = oracle.conditional_partition_average(region, params, n_conditional, stream_cond)

    z = (mean - exact_normalized) / se if se > 0 else (0.0 if mean == exact_normalized else math.inf)
    report = PartitionReport(
        z_prime_mc=math.exp(log_pre) * mean,
        z_prime_mc_se=math.exp(log_pre) * se,
        z_prime_exact=math.exp(log_exact),
        z_prime_conditional=conditional,
        ratio=mean / exact_normalized if exact_normalized > 0 else math.nan,
        z=z,
        passed=abs(z) < sigma_buffer,
    )
    get_logger().log_verification('partition', report.passed, report.to_dict())
    return report
