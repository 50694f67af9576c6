"""
Connectivity in pairs of colourings and the switching lemma.

Two colourings psi1, psi2 on the same region and an independent cut process
Delta of intensity 4 delta define a graph on K plus the ghost-site: lines
are passable except at cuts lying where both colourings are even, bridges of
B1 u B2 join their endpoints and ghost-bonds of G1 u G2 join the ghost-site.
"""

import math
from bisect import bisect_right
from dataclasses import dataclass
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from domain import Bridge, Params, Point, Region, Segment, is_ghost, sample_configuration, sample_events
from estimates import mean_estimate, z_score
from exceptions import ConsistencyError, InvariantViolation, ParameterError, PreconditionError
from logger import get_logger
from parity import EVEN, Colouring, SourceSet, build_colouring, log_weight, point_key
from sampling import DEFAULT_BATCH_SIZE, collect

GHOST_NODE = 0

POINT = 'point'
CUT = 'cut'
REMOVED = 'removed'


@dataclass(frozen=True)
class CutSet:
    """Sorted cuts, a Poisson process of intensity 4 delta on K."""
    points: Tuple[Point, ...] = ()

    @classmethod
    def sample(cls, region: Region, delta: float, rng: np.random.Generator) -> "CutSet":
        return cls(tuple(sample_events(region, 4.0 * delta, 'vertices', rng)))

    def with_extra(self, *points: Point) -> "CutSet":
        return CutSet(tuple(sorted(self.points + tuple(points))))

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


@dataclass(frozen=True)
class OpenPath:
    """A self-avoiding open path; segments are whole pieces between breakpoints."""
    x: Point
    y: Point
    segments: Tuple[Segment, ...]
    bridges: Tuple[Bridge, ...]
    ghosts: Tuple[Point, ...]

    @property
    def length(self) -> float:
        return math.fsum(s.length for s in self.segments)

    def to_dict(self) -> Dict:
        return {
            'x': list(self.x), 'y': list(self.y),
            'segments': [list(s) for s in self.segments],
            'bridges': [list(b) for b in self.bridges],
            'ghosts': [list(g) for g in self.ghosts],
        }


def is_blocking(psi1: Colouring, psi2: Colouring, cut: Point) -> bool:
    """A cut blocks only where both colourings are even."""
    return psi1.label_at(cut) == EVEN and psi2.label_at(cut) == EVEN


class ConnectivityIndex:
    """
    Graph of K^Gamma for the triple (psi1, psi2, Delta).

    Nodes are the ghost-site, every switching point of either colouring
    (plus requested extra points), and the pieces of line between consecutive
    breakpoints. A piece is joined to the point nodes bounding it; blocking
    cuts and a removed point bound pieces without joining them.
    """

    def __init__(self, psi1: Colouring, psi2: Colouring, cuts: CutSet,
                 removed: Optional[Point] = None, extra: Sequence[Point] = ()):
        if not psi1.valid or not psi2.valid:
            raise PreconditionError("connectivity needs two valid colourings")
        if psi1.region != psi2.region:
            raise ConsistencyError("colourings live on different regions")
        self.psi1, self.psi2, self.cuts = psi1, psi2, cuts
        self.region = region = psi1.region
        self.removed = removed
        self.ghost_removed = removed is not None and is_ghost(removed)
        removed_key = None if removed is None or self.ghost_removed else point_key(region, removed)

        per_line: List[Dict[float, Tuple[str, Tuple[int, float]]]] = [dict() for _ in region.lines]
        for psi in (psi1, psi2):
            for li, line in enumerate(psi.lines):
                for t, key in zip(line.times, line.keys):
                    per_line[li][t] = (POINT, key)
        for p in extra:
            if is_ghost(p):
                continue
            li, t = self._place(p)
            per_line[li].setdefault(t, (POINT, point_key(region, p)))
        if removed_key is not None:
            li, t = self._place(removed)
            per_line[li][t] = (REMOVED, removed_key)
        for c in cuts:
            if is_blocking(psi1, psi2, c):
                li, t = self._place(c, closed=False)
                per_line[li].setdefault(t, (CUT, point_key(region, c)))

        self.n_nodes = 1
        self.key_node: Dict[Tuple[int, float], int] = {}
        self.node_info: Dict[int, Tuple] = {GHOST_NODE: ('ghost',)}
        self.line_times: List[List[float]] = []
        self.line_pieces: List[List[int]] = []
        self.adjacency: Dict[int, List[Tuple[int, Tuple]]] = {GHOST_NODE: []}
        break_nodes: List[List[Optional[int]]] = []

        for li, line in enumerate(region.lines):
            times = sorted(per_line[li])
            self.line_times.append(times)
            nodes = []
            for t in times:
                kind, key = per_line[li][t]
                if kind == POINT:
                    node = self._new_node(('point', line.vertex, t, key))
                    self.key_node[key] = node
                    nodes.append(node)
                else:
                    nodes.append(None)
            break_nodes.append(nodes)

            m = len(times)
            if line.cyclic:
                bounds = times + [times[0] + region.beta] if m else [0.0, region.beta]
                n_pieces = max(m, 1)
            else:
                bounds = [line.start] + times + [line.end]
                n_pieces = m + 1
            pieces = []
            for j in range(n_pieces):
                piece = self._new_node(('piece', line.vertex, bounds[j], bounds[j + 1]))
                pieces.append(piece)
                if line.cyclic:
                    ends = (j, (j + 1) % m) if m else ()
                else:
                    ends = tuple(i for i in (j - 1, j) if 0 <= i < m)
                for i in ends:
                    if nodes[i] is not None:
                        self._link(piece, nodes[i], ('line',))
            self.line_pieces.append(pieces)

        for psi in (psi1, psi2):
            for b in psi.bridges:
                x, y = b.endpoints()
                nx = self.key_node.get(point_key(region, x))
                ny = self.key_node.get(point_key(region, y))
                if nx is not None and ny is not None:
                    self._link(nx, ny, ('bridge', b))
            if not self.ghost_removed:
                for g in psi.ghosts:
                    ng = self.key_node.get(point_key(region, g))
                    if ng is not None:
                        self._link(ng, GHOST_NODE, ('ghost', g))

        self._rows = np.array([a for a, nbrs in self.adjacency.items() for b, _ in nbrs], dtype=int)
        self._cols = np.array([b for a, nbrs in self.adjacency.items() for b, _ in nbrs], dtype=int)
        self.labels = self._components(np.ones(self._rows.size, dtype=bool))

    def _components(self, keep: np.ndarray) -> np.ndarray:
        rows, cols = self._rows[keep], self._cols[keep]
        graph = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        return connected_components(graph, directed=False)[1]

    def _place(self, point: Point, closed: bool = True) -> Tuple[int, float]:
        found = self.region.locate(point, closed=closed)
        if found is None:
            raise ConsistencyError(f"point {point} lies outside the region")
        return found

    def _new_node(self, info: Tuple) -> int:
        node = self.n_nodes
        self.n_nodes += 1
        self.node_info[node] = info
        self.adjacency[node] = []
        return node

    def _link(self, a: int, b: int, payload: Tuple):
        self.adjacency[a].append((b, payload))
        self.adjacency[b].append((a, payload))

    def node_of(self, point: Point) -> Optional[int]:
        """Node holding a point of K^Gamma, or None for the removed point."""
        if is_ghost(point):
            return None if self.ghost_removed else GHOST_NODE
        key = point_key(self.region, point)
        if key in self.key_node:
            return self.key_node[key]
        if self.removed is not None and not self.ghost_removed \
                and key == point_key(self.region, self.removed):
            return None
        li, t = self._place(point)
        line = self.region.lines[li]
        times = self.line_times[li]
        if line.cyclic:
            if not times:
                return self.line_pieces[li][0]
            t = t % self.region.beta
            if t < times[0]:
                t += self.region.beta
            return self.line_pieces[li][bisect_right(times, t) - 1]
        return self.line_pieces[li][bisect_right(times, t)]

    def connected(self, x: Point, y: Point) -> bool:
        """x <-> y in the triple; every point is connected to itself."""
        if is_ghost(x) and is_ghost(y):
            return not self.ghost_removed
        if not is_ghost(x) and not is_ghost(y) and point_key(self.region, x) == point_key(self.region, y):
            return self.node_of(x) is not None
        nx, ny = self.node_of(x), self.node_of(y)
        if nx is None or ny is None:
            return False
        return bool(self.labels[nx] == self.labels[ny])

    def only_via(self, x: Point, y: Point, z: Point) -> bool:
        """x <-> y, but every open path between them passes through z."""
        if not self.connected(x, y):
            return False
        if _same_point(self.region, z, x) or _same_point(self.region, z, y):
            return True
        without = ConnectivityIndex(self.psi1, self.psi2, self.cuts, removed=z, extra=(x, y))
        return not without.connected(x, y)

    def pivotal_measure(self, x: Point, y: Point) -> float:
        """
        Lebesgue measure of the points z with x <-> y only via z.

        Removing an interior point detaches its piece from one of the two
        bounding nodes, so such a z exists inside a piece exactly when
        dropping the whole piece disconnects x from y.
        """
        if not self.connected(x, y):
            return 0.0
        nx, ny = self.node_of(x), self.node_of(y)
        if nx == ny:
            return 0.0
        label = self.labels[nx]
        total = 0.0
        for node, info in self.node_info.items():
            if info[0] != 'piece' or node in (nx, ny) or self.labels[node] != label:
                continue
            if info[3] <= info[2] or len({b for b, _ in self.adjacency[node]}) < 2:
                continue
            labels = self._components((self._rows != node) & (self._cols != node))
            if labels[nx] != labels[ny]:
                total += info[3] - info[2]
        return total

    def _order(self, node: int) -> Tuple:
        info = self.node_info[node]
        if info[0] == 'ghost':
            return (-1, 0.0)
        return (info[1], info[2])

    def find_path(self, x: Point, y: Point, avoid: Optional[Point] = None) -> Optional[OpenPath]:
        """
        Deterministic depth-first open path from x to y.

        Neighbours are explored in point order. With `avoid`, paths missing
        that point take precedence; it is used only when nothing else works.
        """
        if avoid is not None:
            blocked = self.node_of(avoid)
            if blocked is not None and blocked not in (self.node_of(x), self.node_of(y)):
                found = self._dfs(x, y, {blocked})
                if found is not None:
                    return found
        return self._dfs(x, y, set())

    def _dfs(self, x: Point, y: Point, forbidden) -> Optional[OpenPath]:
        start, goal = self.node_of(x), self.node_of(y)
        if start is None or goal is None or self.labels[start] != self.labels[goal]:
            return None
        parent: Dict[int, Tuple[Optional[int], Optional[Tuple]]] = {start: (None, None)}
        stack = [start]
        while stack:
            node = stack.pop()
            if node == goal:
                break
            nbrs = sorted(self.adjacency[node], key=lambda item: self._order(item[0]), reverse=True)
            for nbr, payload in nbrs:
                if nbr in parent or nbr in forbidden:
                    continue
                parent[nbr] = (node, payload)
                stack.append(nbr)
        if goal not in parent:
            return None

        chain = []
        node = goal
        while node is not None:
            chain.append((node, parent[node][1]))
            node = parent[node][0]
        chain.reverse()

        segments, bridges, ghosts = [], [], []
        for node, payload in chain:
            info = self.node_info[node]
            if info[0] == 'piece' and info[3] > info[2]:
                segments.append(Segment(info[1], info[2], info[3]))
            if payload is not None and payload[0] == 'bridge':
                bridges.append(payload[1])
            elif payload is not None and payload[0] == 'ghost':
                ghosts.append(payload[1])
        return OpenPath(x, y, tuple(segments), tuple(bridges), tuple(ghosts))


def _same_point(region: Region, a: Point, b: Point) -> bool:
    if is_ghost(a) or is_ghost(b):
        return is_ghost(a) and is_ghost(b)
    return point_key(region, a) == point_key(region, b)


def build_connectivity(psi1: Colouring, psi2: Colouring, cuts: CutSet,
                       removed: Optional[Point] = None, extra: Sequence[Point] = ()) -> ConnectivityIndex:
    return ConnectivityIndex(psi1, psi2, cuts, removed=removed, extra=extra)


def find_open_path(psi1: Colouring, psi2: Colouring, cuts: CutSet, x: Point, y: Point,
                   avoid: Optional[Point] = None) -> Optional[OpenPath]:
    return build_connectivity(psi1, psi2, cuts, extra=(x, y)).find_path(x, y, avoid=avoid)


# ---------------------------------------------------------------------------
# The switch map
# ---------------------------------------------------------------------------

def _segment_label(psi: Colouring, segment: Segment) -> int:
    return psi.label_at(Point(segment.vertex, (segment.start + segment.end) / 2))


def doubly_even_measure(psi1: Colouring, psi2: Colouring, path: OpenPath) -> float:
    """|ev(psi1) n ev(psi2) n pi|."""
    return math.fsum(s.length for s in path.segments
                     if _segment_label(psi1, s) == EVEN and _segment_label(psi2, s) == EVEN)


def switched_log_weight(psi1: Colouring, psi2: Colouring, path: OpenPath, delta: float) -> float:
    """
    log of weight(psi1) weight(psi2) exp(-4 delta |ev1 n ev2 n pi|), with the
    unnormalized weight exp(2 delta |ev|). Unchanged by switch_along(psi1, psi2, path);
    -inf when either colouring failed.
    """
    total = log_weight(psi1, delta) + log_weight(psi2, delta)
    if math.isinf(total):
        return total
    return total - 4.0 * delta * doubly_even_measure(psi1, psi2, path)


def is_open(path: OpenPath, psi1: Colouring, psi2: Colouring, cuts: CutSet) -> bool:
    beta = psi1.region.beta
    for seg in path.segments:
        for c in cuts:
            if c.vertex != seg.vertex:
                continue
            if any(seg.start < t < seg.end for t in (c.time, c.time + beta)) and is_blocking(psi1, psi2, c):
                return False
    return True


def _reference_time(path: OpenPath, vertex: int, beta: float) -> float:
    """A time on the circle of `vertex` off the path: the middle of the largest gap."""
    covered = []
    for s in path.segments:
        if s.vertex != vertex:
            continue
        lo, hi = s.start % beta, s.start % beta + s.length
        covered.extend([(lo, min(hi, beta))] + ([(0.0, hi - beta)] if hi > beta else []))
    if not covered:
        return beta / 2
    covered.sort()
    best, best_gap = 0.0, -1.0
    cursor = 0.0
    for lo, hi in covered + [(beta, beta)]:
        if lo - cursor > best_gap:
            best, best_gap = (cursor + lo) / 2, lo - cursor
        cursor = max(cursor, hi)
    if best_gap <= 0:
        raise InvariantViolation(f"path covers the whole circle of vertex {vertex}")
    return best


def _rebuild(original: Colouring, sources: SourceSet, bridges, ghosts, path: OpenPath) -> Colouring:
    region = original.region
    bits = dict(original.bits)
    switched = build_colouring(region, sources, bridges, ghosts, bits=original.bits)
    if not switched.valid:
        raise InvariantViolation("switching produced the failed colouring")
    changed = False
    for w in region.W:
        ref = Point(w, _reference_time(path, w, region.beta))
        if switched.label_at(ref) != original.label_at(ref):
            bits[w] ^= 1
            changed = True
    if changed:
        switched = build_colouring(region, sources, bridges, ghosts, bits=tuple(sorted(bits.items())))
    return switched


def switch_along(psi1: Colouring, psi2: Colouring, path: OpenPath,
                 cuts: Optional[CutSet] = None) -> Tuple[Colouring, Colouring]:
    """
    f_pi: move the bridges and ghost-bonds of pi to the other colouring,
    toggle x and y in both source sets, and fix circle colours so that each
    colouring is unchanged off pi. Applying it twice is the identity.
    """
    if cuts is not None and not is_open(path, psi1, psi2, cuts):
        raise PreconditionError("path is not open in the triple")
    union_bridges = set(psi1.bridges) | set(psi2.bridges)
    union_ghosts = set(psi1.ghosts) | set(psi2.ghosts)
    on_bridges, on_ghosts = set(path.bridges), set(path.ghosts)
    if not on_bridges <= union_bridges or not on_ghosts <= union_ghosts:
        raise PreconditionError("path uses events outside B1 u B2, G1 u G2")

    def moved(own, other, chosen):
        return tuple(sorted((set(own) - chosen) | (set(other) & chosen)))

    b1, b2 = moved(psi1.bridges, psi2.bridges, on_bridges), moved(psi2.bridges, psi1.bridges, on_bridges)
    g1, g2 = moved(psi1.ghosts, psi2.ghosts, on_ghosts), moved(psi2.ghosts, psi1.ghosts, on_ghosts)
    s1 = psi1.sources.symmetric_difference(path.x, path.y)
    s2 = psi2.sources.symmetric_difference(path.x, path.y)
    return _rebuild(psi1, s1, b1, g1, path), _rebuild(psi2, s2, b2, g2, path)


# ---------------------------------------------------------------------------
# Monte Carlo check of the switching lemma
# ---------------------------------------------------------------------------

def _check_sources(region: Region, sources: SourceSet):
    for p in sources:
        if not region.contains(p, closed=True):
            raise ParameterError(f"source {p} lies outside the region")


def _indicator(index: ConnectivityIndex, x: Point, y: Point,
               predicate: Sequence[Tuple[Point, Point, bool]]) -> float:
    if not index.connected(x, y):
        return 0.0
    for p, q, expected in predicate:
        if index.connected(p, q) != expected:
            return 0.0
    return 1.0


def _switching_batch(region: Region, params: Params, sources1: SourceSet, sources2: SourceSet,
                     x: Point, y: Point, predicate, rng: np.random.Generator, count: int) -> np.ndarray:
    out = np.zeros(count)
    extra = tuple(p for p in [x, y] + [p for pair in predicate for p in pair[:2]] if not is_ghost(p))
    for i in range(count):
        psi1, psi2, cuts = sample_pair(region, params, sources1, sources2, rng)
        if not psi1.valid or not psi2.valid:
            continue
        weight = math.exp(-2.0 * params.delta * (psi1.odd_measure() + psi2.odd_measure()))
        index = ConnectivityIndex(psi1, psi2, cuts, extra=extra)
        out[i] = weight * _indicator(index, x, y, predicate)
    return out


@dataclass
class SwitchingReport:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    z: float
    passed: bool

    def to_dict(self) -> Dict:
        return {'lhs': self.lhs, 'lhs_se': self.lhs_se, 'rhs': self.rhs, 'rhs_se': self.rhs_se,
                'z': self.z, 'passed': self.passed}


def verify_switching(region: Region, A: SourceSet, B: SourceSet, x: Point, y: Point, params: Params,
                     n_samples: int, rng: np.random.Generator,
                     predicate: Sequence[Tuple[Point, Point, bool]] = (), workers: int = 1,
                     batch_size: int = DEFAULT_BATCH_SIZE, sigma_buffer: float = 3.0) -> SwitchingReport:
    """
    Estimate both sides of
        E(w psi1^A w psi2^B F 1{x<->y}) = E(w psi1^{A xy} w psi2^{B xy} F 1{x<->y})
    with independent samples. F is the indicator that every (p, q, expected)
    in `predicate` has connectivity `expected`. With A = {x, y} and no
    predicate this is E(w psi1^{xy} w psi2^B) = E(w psi1^0 w psi2^{B xy} 1{x<->y}).
    """
    A2, B2 = A.symmetric_difference(x, y), B.symmetric_difference(x, y)
    for s in (A, B, A2, B2):
        _check_sources(region, s)
    for p in (x, y):
        if not is_ghost(p) and not region.contains(p, closed=True):
            raise ParameterError(f"point {p} lies outside the region")
    predicate = tuple((Point(*p), Point(*q), bool(e)) for p, q, e in predicate)

    stream_l, stream_r = rng.spawn(2)
    lhs_rows = collect(partial(_switching_batch, region, params, A, B, x, y, predicate),
                       n_samples, stream_l, workers=workers, batch_size=batch_size)[:, 0]
    lhs = mean_estimate(lhs_rows)
    if _same_point(region, x, y):
        rhs = lhs
    else:
        rhs_rows = collect(partial(_switching_batch, region, params, A2, B2, x, y, predicate),
                           n_samples, stream_r, workers=workers, batch_size=batch_size)[:, 0]
        rhs = mean_estimate(rhs_rows)

    z = 0.0 if rhs is lhs else z_score(lhs, rhs)
    report = SwitchingReport(lhs.value, lhs.std_error, rhs.value, rhs.std_error, z, abs(z) < sigma_buffer)
    get_logger().log_verification('switching', report.passed, report.to_dict())
    return report


def sample_pair(region: Region, params: Params, sources1: SourceSet, sources2: SourceSet,
                rng: np.random.Generator) -> Tuple[Colouring, Colouring, CutSet]:
    """One draw of (psi1^A, psi2^B, Delta) with independent configurations."""
    c1 = sample_configuration(region, params, rng)
    c2 = sample_configuration(region, params, rng)
    psi1 = build_colouring(region, sources1, c1.bridges, c1.ghosts, rng=rng)
    psi2 = build_colouring(region, sources2, c2.bridges, c2.ghosts, rng=rng)
    return psi1, psi2, CutSet.sample(region, params.delta, rng)
