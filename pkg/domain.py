"""
Space-time domain geometry for the transverse-field Ising engine.

A region K is a union of time intervals K_v on each vertex line of a box
lattice, with time either a circle of circumference beta or the interval
[0, beta). Intervals are stored half-open as (start, end) with
0 <= start < beta and start < end <= start + beta; an end beyond beta means
the interval wraps through 0 on the circle. A vertex whose K_v is the whole
circle carries no endpoints and belongs to W(K).
"""

import itertools
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from exceptions import ConsistencyError, ParameterError

PERIODIC = "periodic"
FREE = "free"
CIRCLE = "circle"
INTERVAL = "interval"

FORMAT_VERSION = 1

# Relative slack used when checking that a path lies inside its region
CONTAINMENT_TOL = 1e-12


class Point(NamedTuple):
    """A space-time point (vertex index, time)."""
    vertex: int
    time: float


# The ghost site. Sorts before every lattice point.
GHOST = Point(-1, 0.0)


def is_ghost(point: Point) -> bool:
    return point.vertex < 0


class Bridge(NamedTuple):
    """A bridge between neighbouring vertices u < v at a common time."""
    u: int
    v: int
    time: float

    def endpoints(self) -> Tuple[Point, Point]:
        return Point(self.u, self.time), Point(self.v, self.time)


class Segment(NamedTuple):
    """A closed stretch [start, end] of one vertex line; end may pass beta."""
    vertex: int
    start: float
    end: float

    @property
    def length(self) -> float:
        return self.end - self.start


class Ordering(IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


@dataclass(frozen=True)
class Lattice:
    """
    Box lattice [-n, n]^d, or a free chain of arbitrary length.

    Vertices are numbered row-major over the coordinates, which fixes the
    vertex order used by point_order.
    """
    dimension: int
    half_width: int
    boundary: str = PERIODIC
    length: Optional[int] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ParameterError(f"dimension must be positive, got {self.dimension}")
        if self.half_width < 0:
            raise ParameterError(f"half_width must be non-negative, got {self.half_width}")
        if self.boundary not in (PERIODIC, FREE):
            raise ParameterError(f"unknown boundary '{self.boundary}'")
        if self.length is not None:
            if self.dimension != 1 or self.boundary != FREE or self.length < 1:
                raise ParameterError("explicit length is only available for free chains")
        elif self.boundary == PERIODIC and self.half_width == 0:
            raise ParameterError("periodic boundary with n = 0 would create self-loops; "
                                 "use boundary 'free' for a single vertex")

    @classmethod
    def chain(cls, length: int) -> "Lattice":
        """Free chain 0 - 1 - ... - (length-1)."""
        return cls(dimension=1, half_width=0, boundary=FREE, length=length)

    @cached_property
    def vertices(self) -> Tuple[Tuple[int, ...], ...]:
        if self.length is not None:
            return tuple((i,) for i in range(self.length))
        axis = range(-self.half_width, self.half_width + 1)
        return tuple(itertools.product(axis, repeat=self.dimension))

    @cached_property
    def index(self) -> Dict[Tuple[int, ...], int]:
        return {coords: i for i, coords in enumerate(self.vertices)}

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def edges(self) -> Tuple[Tuple[int, int], ...]:
        """Sorted unordered neighbour pairs (u, v) with u < v."""
        found = set()
        for coords in self.vertices:
            for axis in range(self.dimension):
                shifted = self._step(coords, axis, 1)
                if shifted is None:
                    continue
                u, v = self.index[coords], self.index[shifted]
                if u != v:
                    found.add((min(u, v), max(u, v)))
        return tuple(sorted(found))

    @cached_property
    def neighbours(self) -> Tuple[Tuple[int, ...], ...]:
        adjacent: List[List[int]] = [[] for _ in self.vertices]
        for u, v in self.edges:
            adjacent[u].append(v)
            adjacent[v].append(u)
        return tuple(tuple(sorted(a)) for a in adjacent)

    @property
    def origin(self) -> int:
        if self.length is not None:
            return 0
        return self.index[(0,) * self.dimension]

    def _step(self, coords, axis, amount):
        if self.length is not None:
            value = coords[0] + amount
            return (value,) if 0 <= value < self.length else None
        n = self.half_width
        value = coords[axis] + amount
        if value > n or value < -n:
            if self.boundary == FREE:
                return None
            side = 2 * n + 1
            value = (value + n) % side - n
        return coords[:axis] + (value,) + coords[axis + 1:]

    def translate(self, vertex: int, shift: Sequence[int]) -> Optional[int]:
        """Vertex reached by shifting coordinates; None if it leaves a free box."""
        coords = self.vertices[vertex]
        for axis, amount in enumerate(shift):
            if amount == 0:
                continue
            coords = self._step(coords, axis, amount)
            if coords is None:
                return None
        return self.index[coords]

    def distance(self, u: int, v: int) -> int:
        """Sup-norm distance, measured around the torus under periodic boundary."""
        a, b = self.vertices[u], self.vertices[v]
        side = 2 * self.half_width + 1
        best = 0
        for x, y in zip(a, b):
            gap = abs(x - y)
            if self.boundary == PERIODIC and self.length is None:
                gap = min(gap, side - gap)
            best = max(best, gap)
        return best

    def to_dict(self) -> Dict:
        return {'dimension': self.dimension, 'half_width': self.half_width,
                'boundary': self.boundary, 'length': self.length}


@dataclass(frozen=True)
class TimeDomain:
    beta: float
    topology: str = CIRCLE

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ParameterError(f"beta must be positive and finite, got {self.beta}")
        if self.topology not in (CIRCLE, INTERVAL):
            raise ParameterError(f"unknown time topology '{self.topology}'")

    @property
    def is_circle(self) -> bool:
        return self.topology == CIRCLE


@dataclass(frozen=True)
class Params:
    """Intensities of bridges (lambda), deaths (delta) and ghost-bonds (gamma)."""
    lam: float
    delta: float
    gamma: float = 0.0

    def __post_init__(self):
        for name in ('lam', 'delta', 'gamma'):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value}")
            if value < 0:
                raise ParameterError(f"{name} must be non-negative, got {value}")

    @property
    def rho(self) -> float:
        """Quantum ratio 2 lam / delta, the inverse of from_ratio."""
        if self.delta <= 0:
            raise ParameterError("rho = 2 lambda/delta is undefined for delta = 0")
        return 2.0 * self.lam / self.delta

    @classmethod
    def from_ratio(cls, rho: float, delta: float = 1.0, gamma: float = 0.0) -> "Params":
        """
        Parameters for the chain H = -(rho/2) sum sigma3 sigma3 - sum sigma1.

        The engine couples each unordered edge with intensity lam, so the
        quantum ratio rho corresponds to lam = rho * delta / 2.
        """
        return cls(lam=rho * delta / 2.0, delta=delta, gamma=gamma)

    def replace(self, **changes) -> "Params":
        values = {'lam': self.lam, 'delta': self.delta, 'gamma': self.gamma}
        values.update(changes)
        return Params(**values)

    def to_dict(self) -> Dict[str, float]:
        return {'lambda': self.lam, 'delta': self.delta, 'gamma': self.gamma}


class LineGeometry(NamedTuple):
    """One maximal interval of K_v; cyclic lines are whole circles."""
    vertex: int
    start: float
    end: float
    cyclic: bool


def _split_pieces(start: float, end: float, beta: float) -> List[Tuple[float, float]]:
    if end <= beta:
        return [(start, end)]
    return [(start, beta), (0.0, end - beta)]


def _merge_pieces(pieces: Iterable[Tuple[float, float]]) -> List[Tuple[float, float]]:
    merged: List[List[float]] = []
    for s, e in sorted(p for p in pieces if p[1] > p[0]):
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def _canonical(pieces: Iterable[Tuple[float, float]], beta: float,
               circle: bool) -> Tuple[Tuple[Tuple[float, float], ...], bool]:
    """Merge non-wrapping pieces of [0, beta] into canonical intervals."""
    merged = _merge_pieces(pieces)
    if not merged:
        return (), False
    if circle:
        if len(merged) == 1 and merged[0][0] <= 0.0 and merged[0][1] >= beta:
            return ((0.0, beta),), True
        if len(merged) > 1 and merged[0][0] <= 0.0 and merged[-1][1] >= beta:
            head = merged.pop(0)
            tail = merged.pop()
            merged.append((tail[0], head[1] + beta))
            merged.sort()
    return tuple(merged), False


def _subtract_pieces(pieces, cut):
    """Remove the closed stretch cut = (a, b) from non-wrapping pieces."""
    a, b = cut
    out = []
    for s, e in pieces:
        if b <= s or a >= e:
            out.append((s, e))
            continue
        if s < a:
            out.append((s, a))
        if b < e:
            out.append((b, e))
    return out


def _intersect_pieces(first, second):
    out = []
    for s1, e1 in first:
        for s2, e2 in second:
            lo, hi = max(s1, s2), min(e1, e2)
            if hi > lo:
                out.append((lo, hi))
    return sorted(out)


@dataclass(frozen=True)
class Region:
    """
    A region K: per-vertex tuples of disjoint sorted intervals.

    `full` lists the vertices whose K_v is the whole time circle.
    """
    lattice: Lattice
    time: TimeDomain
    intervals: Tuple[Tuple[Tuple[float, float], ...], ...]
    full: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if len(self.intervals) != self.lattice.n_vertices:
            raise ConsistencyError("one interval list per vertex is required")
        beta = self.time.beta
        for v, ivs in enumerate(self.intervals):
            previous_end = None
            for s, e in ivs:
                if not (0.0 <= s < beta and s < e <= s + beta):
                    raise ConsistencyError(f"interval ({s}, {e}) on vertex {v} is not canonical")
                if e > beta and not self.time.is_circle:
                    raise ConsistencyError("wrapping intervals need circle topology")
                if previous_end is not None and s < previous_end:
                    raise ConsistencyError(f"intervals on vertex {v} overlap or are unsorted")
                previous_end = e
            if len(ivs) > 1 and ivs[-1][1] > beta and ivs[-1][1] - beta > ivs[0][0]:
                raise ConsistencyError(f"wrapping interval on vertex {v} overlaps the first one")
        if self.full and not self.time.is_circle:
            raise ConsistencyError("full circles need circle topology")

    # -- constructors ------------------------------------------------------

    @classmethod
    def box(cls, lattice: Lattice, time: TimeDomain) -> "Region":
        """K = L x S: every vertex line is the full circle, or [0, beta)."""
        beta = time.beta
        intervals = tuple(((0.0, beta),) for _ in lattice.vertices)
        full = frozenset(range(lattice.n_vertices)) if time.is_circle else frozenset()
        return cls(lattice, time, intervals, full)

    @classmethod
    def from_intervals(cls, lattice: Lattice, time: TimeDomain,
                       per_vertex: Dict[int, Iterable[Tuple[float, float]]]) -> "Region":
        """Build a canonical region; intervals may be given with end > beta to wrap."""
        beta = time.beta
        intervals = []
        full = set()
        for v in range(lattice.n_vertices):
            pieces = []
            for s, e in per_vertex.get(v, ()):
                if e <= s:
                    continue
                if not time.is_circle and (s < 0 or e > beta):
                    raise ConsistencyError(f"interval ({s}, {e}) leaves [0, beta)")
                s_mod = s % beta if time.is_circle else s
                pieces.extend(_split_pieces(s_mod, s_mod + (e - s), beta) if e - s < beta
                              else [(0.0, beta)])
            canonical, is_full = _canonical(pieces, beta, time.is_circle)
            intervals.append(canonical)
            if is_full:
                full.add(v)
        return cls(lattice, time, tuple(intervals), frozenset(full))

    # -- derived quantities -------------------------------------------------

    @property
    def beta(self) -> float:
        return self.time.beta

    @property
    def W(self) -> Tuple[int, ...]:
        return tuple(sorted(self.full))

    def m(self, vertex: int) -> int:
        return len(self.intervals[vertex])

    @cached_property
    def N(self) -> int:
        """Total number of maximal intervals comprising K."""
        return sum(len(ivs) for ivs in self.intervals)

    def recount_intervals(self) -> int:
        count = 0
        for v in range(self.lattice.n_vertices):
            for _ in self.intervals[v]:
                count += 1
        return count

    def is_full(self, vertex: int) -> bool:
        return vertex in self.full

    @cached_property
    def lines(self) -> Tuple[LineGeometry, ...]:
        out = []
        for v, ivs in enumerate(self.intervals):
            for s, e in ivs:
                out.append(LineGeometry(v, s, e, v in self.full))
        return tuple(out)

    @cached_property
    def lines_by_vertex(self) -> Tuple[Tuple[int, ...], ...]:
        table: List[List[int]] = [[] for _ in self.intervals]
        for i, line in enumerate(self.lines):
            table[line.vertex].append(i)
        return tuple(tuple(t) for t in table)

    def pieces(self, vertex: int) -> List[Tuple[float, float]]:
        """K_v as non-wrapping pieces of [0, beta]."""
        out = []
        for s, e in self.intervals[vertex]:
            out.extend(_split_pieces(s, e, self.beta))
        return sorted(out)

    def vertex_measure(self, vertex: int) -> float:
        return math.fsum(e - s for s, e in self.intervals[vertex])

    @cached_property
    def total_measure(self) -> float:
        return math.fsum(self.vertex_measure(v) for v in range(self.lattice.n_vertices))

    def edge_overlap(self, u: int, v: int) -> List[Tuple[float, float]]:
        """K_e = K_u intersect K_v as non-wrapping pieces."""
        return _intersect_pieces(self.pieces(u), self.pieces(v))

    @cached_property
    def overlap_measure(self) -> float:
        """|F|: total measure of the edge overlaps."""
        return math.fsum(e - s for (u, v) in self.lattice.edges
                         for s, e in self.edge_overlap(u, v))

    @property
    def is_empty(self) -> bool:
        return self.N == 0

    def locate(self, point: Point, closed: bool = False) -> Optional[Tuple[int, float]]:
        """
        Find the line holding a point.

        Returns (line index, time unwrapped into that line's coordinates), or
        None. With closed=True interval endpoints count as members.
        """
        beta = self.beta
        for li in self.lines_by_vertex[point.vertex]:
            line = self.lines[li]
            if line.cyclic:
                return li, point.time % beta
            for t in (point.time, point.time + beta):
                if line.start < t < line.end or t == line.start:
                    return li, t
                if closed and t == line.end:
                    return li, t
        return None

    def contains(self, point: Point, closed: bool = False) -> bool:
        if is_ghost(point):
            return False
        if not 0 <= point.vertex < self.lattice.n_vertices:
            return False
        return self.locate(point, closed=closed) is not None

    def is_endpoint(self, point: Point) -> bool:
        """True when the point is an endpoint of a non-cyclic maximal interval."""
        found = self.locate(point, closed=True)
        if found is None:
            return False
        li, t = found
        line = self.lines[li]
        return not line.cyclic and (t == line.start or t == line.end)

    def to_dict(self) -> Dict:
        return {
            'format': FORMAT_VERSION,
            'lattice': self.lattice.to_dict(),
            'beta': self.beta,
            'topology': self.time.topology,
            'vertices': [list(c) for c in self.lattice.vertices],
            'intervals': [[[s, e] for s, e in ivs] for ivs in self.intervals],
            'full': sorted(self.full),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Region":
        if data.get('format') != FORMAT_VERSION:
            raise ConsistencyError(f"unsupported region format {data.get('format')}")
        lattice = Lattice(**data['lattice'])
        time = TimeDomain(data['beta'], data['topology'])
        intervals = tuple(tuple((float(s), float(e)) for s, e in ivs) for ivs in data['intervals'])
        return cls(lattice, time, intervals, frozenset(data['full']))


@dataclass(frozen=True)
class Configuration:
    """Bridges B, ghost-bonds G and deaths D as sorted event tuples."""
    bridges: Tuple[Bridge, ...] = ()
    ghosts: Tuple[Point, ...] = ()
    deaths: Tuple[Point, ...] = ()

    def all_times(self) -> List[float]:
        return ([b.time for b in self.bridges] + [g.time for g in self.ghosts]
                + [d.time for d in self.deaths])

    def check(self, region: Region):
        """Assert every event lies in the region and all times are distinct."""
        times = self.all_times()
        if len(set(times)) != len(times):
            raise ConsistencyError("event times are not pairwise distinct")
        for b in self.bridges:
            for p in b.endpoints():
                if not region.contains(p):
                    raise ConsistencyError(f"bridge {b} leaves the region")
        for p in itertools.chain(self.ghosts, self.deaths):
            if not region.contains(p):
                raise ConsistencyError(f"event {p} leaves the region")

    def to_dict(self) -> Dict:
        return {
            'format': FORMAT_VERSION,
            'bridges': [[b.u, b.v, b.time] for b in self.bridges],
            'ghosts': [[g.vertex, g.time] for g in self.ghosts],
            'deaths': [[d.vertex, d.time] for d in self.deaths],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Configuration":
        if data.get('format') != FORMAT_VERSION:
            raise ConsistencyError(f"unsupported configuration format {data.get('format')}")
        return cls(
            bridges=tuple(Bridge(int(u), int(v), float(t)) for u, v, t in data['bridges']),
            ghosts=tuple(Point(int(v), float(t)) for v, t in data['ghosts']),
            deaths=tuple(Point(int(v), float(t)) for v, t in data['deaths']),
        )


# ---------------------------------------------------------------------------
# Poisson sampling
# ---------------------------------------------------------------------------

def _poisson_on_pieces(pieces: Sequence[Tuple[float, float]], intensity: float,
                       rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Independent Poisson counts per piece, then i.i.d. uniform times."""
    if not pieces or intensity == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    starts = np.array([s for s, _ in pieces])
    lengths = np.array([e - s for s, e in pieces])
    counts = rng.poisson(intensity * lengths)
    owner = np.repeat(np.arange(len(pieces)), counts)
    times = starts[owner] + rng.random(owner.size) * lengths[owner]
    return owner, times


def sample_events(region: Region, intensity: float, support: str,
                  rng: np.random.Generator) -> list:
    """
    Sample a Poisson process of the given intensity on K (vertices) or F (edges).

    Each maximal interval receives an independent Poisson count of uniform
    times. Returns Points for support 'vertices' and Bridges for 'edges',
    sorted by (vertex or edge, time).
    """
    if intensity < 0 or not math.isfinite(intensity):
        raise ParameterError(f"intensity must be finite and non-negative, got {intensity}")
    if support not in ('vertices', 'edges'):
        raise ParameterError(f"support must be 'vertices' or 'edges', got '{support}'")
    if intensity == 0:
        return []

    beta = region.beta
    while True:
        if support == 'vertices':
            pieces, owners = [], []
            for line in region.lines:
                pieces.append((line.start, line.end))
                owners.append(line.vertex)
            which, times = _poisson_on_pieces(pieces, intensity, rng)
            times = np.where(times >= beta, times - beta, times)
            events = sorted(Point(owners[i], float(t)) for i, t in zip(which, times))
        else:
            pieces, owners = [], []
            for u, v in region.lattice.edges:
                for piece in region.edge_overlap(u, v):
                    pieces.append(piece)
                    owners.append((u, v))
            which, times = _poisson_on_pieces(pieces, intensity, rng)
            events = sorted(Bridge(owners[i][0], owners[i][1], float(t))
                            for i, t in zip(which, times))
        stamps = [e.time for e in events]
        if len(set(stamps)) == len(stamps):
            return events


def sample_configuration(region: Region, params: Params, rng: np.random.Generator,
                         with_deaths: bool = False) -> Configuration:
    """Draw (B, G[, D]) with pairwise distinct times across all event kinds."""
    while True:
        bridges = sample_events(region, params.lam, 'edges', rng)
        ghosts = sample_events(region, params.gamma, 'vertices', rng)
        deaths = sample_events(region, params.delta, 'vertices', rng) if with_deaths else []
        config = Configuration(tuple(bridges), tuple(ghosts), tuple(deaths))
        times = config.all_times()
        if len(set(times)) == len(times):
            return config


# ---------------------------------------------------------------------------
# Measures, subtraction and order
# ---------------------------------------------------------------------------

def _weight_of(weight, vertex: int) -> float:
    if isinstance(weight, (int, float)):
        return float(weight)
    return float(weight[vertex])


def measure(subset: Union[Region, Iterable[Segment]],
            weight: Union[float, Sequence[float], Dict[int, float]] = 1.0) -> float:
    """Weighted Lebesgue measure of a region or of a union of disjoint segments."""
    if isinstance(subset, Region):
        return math.fsum(_weight_of(weight, v) * subset.vertex_measure(v)
                         for v in range(subset.lattice.n_vertices))
    return math.fsum(_weight_of(weight, seg.vertex) * seg.length for seg in subset)


def normalize_segment(segment: Segment, beta: float) -> Segment:
    """Shift a segment so that 0 <= start < beta; the end may pass beta."""
    start, end = segment.start, segment.end
    if end < start:
        start, end = end, start
    shift = math.floor(start / beta) * beta
    return Segment(segment.vertex, start - shift, end - shift)


def region_subtract(region: Region, paths: Iterable[Segment]) -> Region:
    """
    Remove closed path segments from a region, returning K minus nu.

    Every segment must lie inside the closure of K_v; cut host intervals
    split or shrink and circles that lose a stretch leave W.
    """
    beta = region.beta
    per_vertex: Dict[int, List[Tuple[float, float]]] = {}
    for raw in paths:
        seg = normalize_segment(raw, beta) if region.time.is_circle else raw
        if seg.length <= 0:
            continue
        if seg.length > beta:
            raise ConsistencyError(f"segment {raw} is longer than the time circle")
        if not region.time.is_circle and (seg.start < 0 or seg.end > beta):
            raise ConsistencyError(f"segment {raw} leaves [0, beta]")
        host = region.pieces(seg.vertex)
        cut_pieces = _split_pieces(seg.start, seg.end, beta)
        covered = math.fsum(e - s for s, e in _intersect_pieces(host, cut_pieces))
        if covered < seg.length * (1 - CONTAINMENT_TOL) - CONTAINMENT_TOL * beta:
            raise ConsistencyError(f"segment {raw} escapes the region")
        per_vertex.setdefault(seg.vertex, []).extend(cut_pieces)

    if not per_vertex:
        return region

    intervals = list(region.intervals)
    full = set(region.full)
    for v, cuts in per_vertex.items():
        remaining = region.pieces(v)
        for cut in cuts:
            remaining = _subtract_pieces(remaining, cut)
        canonical, is_full = _canonical(remaining, beta, region.time.is_circle)
        intervals[v] = canonical
        if is_full:
            full.add(v)
        else:
            full.discard(v)
    return Region(region.lattice, region.time, tuple(intervals), frozenset(full))


def point_order(x: Point, y: Point) -> Ordering:
    """Lexicographic order on (vertex index, time)."""
    if (x.vertex, x.time) < (y.vertex, y.time):
        return Ordering.LESS
    if (x.vertex, x.time) > (y.vertex, y.time):
        return Ordering.GREATER
    return Ordering.EQUAL


def region_to_json(region: Region, config: Optional[Configuration] = None) -> str:
    payload = {'format': FORMAT_VERSION, 'region': region.to_dict()}
    if config is not None:
        payload['configuration'] = config.to_dict()
    return json.dumps(payload, indent=2)


def region_from_json(text: str) -> Tuple[Region, Optional[Configuration]]:
    payload = json.loads(text)
    if payload.get('format') != FORMAT_VERSION:
        raise ConsistencyError(f"unsupported document format {payload.get('format')}")
    region = Region.from_dict(payload['region'])
    config = None
    if 'configuration' in payload:
        config = Configuration.from_dict(payload['configuration'])
    return region, config
