"""
Exact ground truth for small instances.

Three independent routes:

- DenseHamiltonian: the quantum Hamiltonian
  H = -lambda sum_{uv} s3_u s3_v - delta sum_v s1_v - gamma sum_v s3_v
  on 2^|V| states (one coupling term per unordered edge), with thermal and
  imaginary-time-displaced expectations through a full eigendecomposition.
- Time-sliced transfer matrices for an arbitrary region K, giving Z'_K and
  <sigma_A>_K exactly (holes, free time ends and wrapped intervals included).
- Conditional Ising sums over the death-split graph G(D), computed both by
  spin summation and by parity-vector summation of the discrete random
  current, which must coincide.
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la
from scipy import integrate

from domain import Lattice, Params, Point, Region, is_ghost, sample_events
from exceptions import CapabilityError, ConsistencyError, InvariantViolation, ParameterError

MAX_VERTICES = 12
MAX_REGION_VERTICES = 8
MAX_CONDITIONAL_COMPONENTS = 20

# Agreement required between the spin and parity routes
ROUTE_TOLERANCE = 1e-10


def _spin_table(n: int) -> np.ndarray:
    """(2^n, n) table of +-1 spins; bit v set means spin -1 at vertex v."""
    states = np.arange(2 ** n)
    return (1 - 2 * ((states[:, None] >> np.arange(n)) & 1)).astype(np.int8)


def _generator(n: int, edges: Sequence[Tuple[int, int]], params: Params,
               active: Optional[Iterable[int]] = None) -> np.ndarray:
    """-H restricted to the active vertices (identity action elsewhere)."""
    active = set(range(n)) if active is None else set(active)
    z = _spin_table(n).astype(float)
    diag = np.zeros(2 ** n)
    for u, v in edges:
        if u in active and v in active:
            diag += params.lam * z[:, u] * z[:, v]
    for v in active:
        diag += params.gamma * z[:, v]
    mat = np.diag(diag)
    states = np.arange(2 ** n)
    for v in active:
        mat[states, states ^ (1 << v)] += params.delta
    return mat


class DenseHamiltonian:
    """Full 2^|V| Hamiltonian with a cached eigendecomposition."""

    def __init__(self, n_vertices: int, edges: Sequence[Tuple[int, int]], params: Params):
        if n_vertices > MAX_VERTICES:
            raise CapabilityError(f"dense Hamiltonian supports at most {MAX_VERTICES} vertices, "
                                  f"got {n_vertices}")
        self.n_vertices = n_vertices
        self.edges = tuple(edges)
        self.params = params
        self.matrix = -_generator(n_vertices, self.edges, params)
        self._eig: Optional[Tuple[np.ndarray, np.ndarray]] = None
        self._spins = _spin_table(n_vertices).astype(float)

    @classmethod
    def from_lattice(cls, lattice: Lattice, params: Params) -> "DenseHamiltonian":
        return cls(lattice.n_vertices, lattice.edges, params)

    @property
    def dimension(self) -> int:
        return 2 ** self.n_vertices

    def eigh(self) -> Tuple[np.ndarray, np.ndarray]:
        if self._eig is None:
            self._eig = la.eigh(self.matrix)
        return self._eig

    def spin_diagonal(self, vertices: Sequence[int]) -> np.ndarray:
        """Diagonal of the product of s3 over the given vertices."""
        d = np.ones(self.dimension)
        for v in vertices:
            d = d * self._spins[:, v]
        return d

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.T)) <= tol)


def thermal_expectation(hamiltonian: DenseHamiltonian, beta: float,
                        observable: Union[Sequence[int], np.ndarray]) -> float:
    """
    tr(e^{-beta H} Q) / tr(e^{-beta H}).

    `observable` is either a list of vertices (product of s3) or a full matrix.
    """
    if beta < 0:
        raise ParameterError(f"beta must be non-negative, got {beta}")
    energies, vectors = hamiltonian.eigh()
    weights = np.exp(-beta * (energies - energies[0]))
    if isinstance(observable, np.ndarray) and observable.ndim == 2:
        diagonal = np.einsum('sn,st,tn->n', vectors, observable, vectors)
    else:
        d = hamiltonian.spin_diagonal(list(observable))
        diagonal = np.einsum('sn,s->n', vectors ** 2, d)
    return float(np.dot(weights, diagonal) / weights.sum())


def time_displaced_correlation(hamiltonian: DenseHamiltonian, beta: float, u: int, v: int,
                               s: float, t: float) -> float:
    """<sigma_(u,s) sigma_(v,t)> = tr(e^{-(beta-tau)H} s3_u e^{-tau H} s3_v) / Z, tau = t - s mod beta."""
    energies, vectors = hamiltonian.eigh()
    tau = (t - s) % beta
    shifted = energies - energies[0]
    a = vectors.T @ (hamiltonian.spin_diagonal([u])[:, None] * vectors)
    b = vectors.T @ (hamiltonian.spin_diagonal([v])[:, None] * vectors)
    left = np.exp(-(beta - tau) * shifted)
    right = np.exp(-tau * shifted)
    value = np.einsum('i,ij,j,ji->', left, a, right, b)
    return float(value / np.exp(-beta * shifted).sum())


def single_spin_magnetization(beta: float, delta: float, gamma: float) -> float:
    """(gamma / r) tanh(beta r) with r = sqrt(delta^2 + gamma^2)."""
    r = math.hypot(delta, gamma)
    if r == 0:
        return 0.0
    return gamma / r * math.tanh(beta * r)


def single_spin_correlation(beta: float, delta: float, tau: float) -> float:
    """Zero-field single-spin two-point function cosh(delta(beta - 2 tau)) / cosh(delta beta)."""
    tau = tau % beta
    return math.cosh(delta * (beta - 2 * tau)) / math.cosh(delta * beta)


# ---------------------------------------------------------------------------
# Transfer matrices on general regions
# ---------------------------------------------------------------------------

def _active(pieces: List[Tuple[float, float]], t: float) -> bool:
    return any(s <= t < e for s, e in pieces)


def _active_before(pieces: List[Tuple[float, float]], t: float) -> bool:
    return any(s < t <= e for s, e in pieces)


def _place_insertions(region: Region, points: Iterable[Point]) -> List[Tuple[float, int, bool]]:
    """(sweep time in [0, beta], vertex, is interval end) per inserted s3."""
    beta = region.beta
    placed = []
    for p in points:
        if is_ghost(p):
            continue
        found = region.locate(p, closed=True)
        if found is None:
            raise ConsistencyError(f"insertion {p} lies outside the region")
        li, t = found
        line = region.lines[li]
        is_end = (not line.cyclic) and t == line.end
        if t > beta or (t == beta and not is_end):
            t -= beta
        placed.append((t, p.vertex, is_end))
    return placed


class _Propagators:
    """exp(dt * generator) per active vertex set, from cached eigendecompositions."""

    def __init__(self, n: int, edges, params: Params):
        self.n = n
        self.edges = edges
        self.params = params
        self._cache: Dict[frozenset, Tuple[np.ndarray, np.ndarray]] = {}

    def apply(self, active: frozenset, dt: float, matrix: np.ndarray) -> Tuple[np.ndarray, float]:
        if active not in self._cache:
            self._cache[active] = la.eigh(_generator(self.n, self.edges, self.params, active))
        w, u = self._cache[active]
        top = float(w.max())
        step = (u * np.exp(dt * (w - top))) @ u.T
        return step @ matrix, dt * top


def _region_trace(region: Region, params: Params, insertions: Sequence[Point]) -> Tuple[float, float]:
    """(sign, log |Z'_K(insertions)|) by a time-ordered trace over 2^|V| states."""
    n = region.lattice.n_vertices
    if n > MAX_REGION_VERTICES:
        raise CapabilityError(f"region transfer matrix supports at most {MAX_REGION_VERTICES} "
                              f"vertices, got {n}")
    beta = region.beta
    pieces = [region.pieces(v) for v in range(n)]
    placed = _place_insertions(region, insertions)
    spins = _spin_table(n).astype(float)
    states = np.arange(2 ** n)

    times = {0.0, beta}
    for vp in pieces:
        for s, e in vp:
            times.update((s, e))
    times.update(t for t, _, _ in placed)
    times = sorted(times)

    def active_after(v, t):
        if t >= beta:
            return region.time.is_circle and _active(pieces[v], 0.0)
        return _active(pieces[v], t)

    propagators = _Propagators(n, region.lattice.edges, params)
    matrix = np.eye(2 ** n)
    log_scale = 0.0
    for i, t in enumerate(times):
        for tp, v, is_end in placed:
            if tp == t and is_end:
                matrix = spins[:, v][:, None] * matrix
        for v in range(n):
            if _active_before(pieces[v], t) and not active_after(v, t):
                matrix = matrix + matrix[states ^ (1 << v)]
        for tp, v, is_end in placed:
            if tp == t and not is_end:
                matrix = spins[:, v][:, None] * matrix
        if i + 1 < len(times):
            dt = times[i + 1] - t
            mid = t + dt / 2
            active = frozenset(v for v in range(n) if _active(pieces[v], mid))
            matrix, grown = propagators.apply(active, dt, matrix)
            log_scale += grown
        top = np.abs(matrix).max()
        if top == 0:
            return 0.0, -math.inf
        matrix = matrix / top
        log_scale += math.log(top)

    trace = float(np.trace(matrix))
    if trace == 0:
        return 0.0, -math.inf
    empty = sum(1 for vp in pieces if not vp)
    return math.copysign(1.0, trace), log_scale + math.log(abs(trace)) - empty * math.log(2.0)


def region_log_partition(region: Region, params: Params) -> float:
    """log Z'_K, the unnormalized space-time partition function of the region."""
    _, log_z = _region_trace(region, params, ())
    return log_z


def region_normalized_partition(region: Region, params: Params) -> float:
    """Z_R = E_R(weight psi^empty) = Z'_R / (2^N e^{lambda|F| + gamma|R| - delta|R|})."""
    log_z = region_log_partition(region, params)
    log_pre = (region.N * math.log(2.0) + params.lam * region.overlap_measure
               + (params.gamma - params.delta) * region.total_measure)
    return math.exp(log_z - log_pre)


def region_correlation(region: Region, params: Params, points: Sequence[Point]) -> float:
    """Exact <sigma_A>_K for lattice points A (ghost entries ignored)."""
    lattice_points = [p for p in points if not is_ghost(p)]
    if not lattice_points:
        return 1.0
    sign_a, log_a = _region_trace(region, params, lattice_points)
    _, log_0 = _region_trace(region, params, ())
    if sign_a == 0:
        return 0.0
    return sign_a * math.exp(log_a - log_0)


def _is_full_box(region: Region) -> bool:
    return region.time.is_circle and len(region.full) == region.lattice.n_vertices


def exact_correlation(region: Region, params: Params, points: Sequence[Point]) -> float:
    """<sigma_A>; one- and two-point functions on full circle boxes use the dense Hamiltonian."""
    lattice_points = [p for p in points if not is_ghost(p)]
    if _is_full_box(region) and len(lattice_points) <= 2:
        ham = DenseHamiltonian.from_lattice(region.lattice, params)
        if not lattice_points:
            return 1.0
        if len(lattice_points) == 1:
            return thermal_expectation(ham, region.beta, [lattice_points[0].vertex])
        x, y = lattice_points
        return time_displaced_correlation(ham, region.beta, x.vertex, y.vertex, x.time, y.time)
    return region_correlation(region, params, lattice_points)


def exact_magnetization(region: Region, params: Params, origin: Optional[Point] = None) -> float:
    origin = origin or Point(region.lattice.origin, 0.0)
    return exact_correlation(region, params, [origin])


def exact_truncated_two_point(region: Region, params: Params, x: Point, y: Point) -> float:
    return (exact_correlation(region, params, [x, y])
            - exact_correlation(region, params, [x]) * exact_correlation(region, params, [y]))


def exact_derivatives(region: Region, params: Params, step: float = 1e-4,
                      origin: Optional[Point] = None) -> Dict[str, float]:
    """Central finite differences of M in gamma, lambda and delta (one-sided at 0)."""
    out = {}
    for name, key in (('dM_dgamma', 'gamma'), ('dM_dlambda', 'lam'), ('dM_ddelta', 'delta')):
        value = getattr(params, key)
        h = step * max(1.0, abs(value))
        up = exact_magnetization(region, params.replace(**{key: value + h}), origin)
        if value >= h:
            down = exact_magnetization(region, params.replace(**{key: value - h}), origin)
            out[name] = (up - down) / (2 * h)
        else:
            out[name] = (up - exact_magnetization(region, params, origin)) / h
    return out


def exact_susceptibility(region: Region, params: Params, origin: Optional[Point] = None) -> float:
    """chi = integral over K of the truncated two-point function with the origin."""
    origin = origin or Point(region.lattice.origin, 0.0)
    if _is_full_box(region):
        ham = DenseHamiltonian.from_lattice(region.lattice, params)
        m0 = thermal_expectation(ham, region.beta, [origin.vertex])

        def integrand(t, v):
            mx = thermal_expectation(ham, region.beta, [v])
            return time_displaced_correlation(ham, region.beta, origin.vertex, v, origin.time, t) - m0 * mx
    else:
        m0 = exact_correlation(region, params, [origin])

        def integrand(t, v):
            x = Point(v, t)
            return exact_correlation(region, params, [origin, x]) - m0 * exact_correlation(region, params, [x])

    total = 0.0
    for v in range(region.lattice.n_vertices):
        for s, e in region.pieces(v):
            cuts = [s, e]
            if v == origin.vertex and s < origin.time % region.beta < e:
                cuts = [s, origin.time % region.beta, e]
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                value, _ = integrate.quad(integrand, lo, hi, args=(v,), limit=100)
                total += value
    return total


# ---------------------------------------------------------------------------
# Conditional Ising model on G(D)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Component:
    """A maximal death-free interval of K, as non-wrapping pieces of [0, beta]."""
    vertex: int
    line: int
    lo: float
    hi: float
    pieces: Tuple[Tuple[float, float], ...]

    @property
    def length(self) -> float:
        return math.fsum(e - s for s, e in self.pieces)


@dataclass
class ConditionalIsingResult:
    correlation: float
    parity_correlation: float
    log_partition: float
    n_components: int


def _to_pieces(lo: float, hi: float, beta: float) -> Tuple[Tuple[float, float], ...]:
    if lo >= beta:
        lo, hi = lo - beta, hi - beta
    if hi <= beta:
        return ((lo, hi),)
    return ((lo, beta), (0.0, hi - beta))


def death_components(region: Region, deaths: Sequence[Point]) -> List[Component]:
    beta = region.beta
    per_line: List[List[float]] = [[] for _ in region.lines]
    for d in deaths:
        found = region.locate(d)
        if found is None:
            raise ConsistencyError(f"death {d} lies outside the region")
        per_line[found[0]].append(found[1])
    comps = []
    for li, line in enumerate(region.lines):
        cuts = sorted(per_line[li])
        if line.cyclic:
            if not cuts:
                comps.append(Component(line.vertex, li, 0.0, beta, ((0.0, beta),)))
                continue
            ends = cuts[1:] + [cuts[0] + beta]
            for lo, hi in zip(cuts, ends):
                comps.append(Component(line.vertex, li, lo, hi, _to_pieces(lo, hi, beta)))
        else:
            bounds = [line.start] + cuts + [line.end]
            for lo, hi in zip(bounds[:-1], bounds[1:]):
                comps.append(Component(line.vertex, li, lo, hi, _to_pieces(lo, hi, beta)))
    return comps


def _overlap(a: Component, b: Component) -> float:
    return math.fsum(max(0.0, min(e1, e2) - max(s1, s2))
                     for s1, e1 in a.pieces for s2, e2 in b.pieces)


def _component_of(region: Region, comps: List[Component], point: Point) -> int:
    found = region.locate(point, closed=True)
    if found is None:
        raise ConsistencyError(f"source {point} lies outside the region")
    li, t = found
    for i, c in enumerate(comps):
        if c.line != li:
            continue
        tt = t
        if region.lines[li].cyclic and tt < c.lo:
            tt += region.beta
        if c.lo < tt < c.hi or (c.lo == tt and c.lo == region.lines[li].start) \
                or (c.hi == tt and c.hi == region.lines[li].end):
            return i
        if region.lines[li].cyclic and c.lo == 0.0 and c.hi == region.beta:
            return i
    raise ParameterError(f"source {point} coincides with a death")


def conditional_couplings(region: Region, deaths: Sequence[Point], params: Params):
    """Components, edge list (a, b, J) and fields h of the graph G(D)."""
    comps = death_components(region, deaths)
    by_vertex: Dict[int, List[int]] = {}
    for i, c in enumerate(comps):
        by_vertex.setdefault(c.vertex, []).append(i)
    edges = []
    for u, v in region.lattice.edges:
        for a in by_vertex.get(u, []):
            for b in by_vertex.get(v, []):
                overlap = _overlap(comps[a], comps[b])
                if overlap > 0:
                    edges.append((a, b, params.lam * overlap))
    fields = [params.gamma * c.length for c in comps]
    return comps, edges, fields


def conditional_ising(region: Region, deaths: Sequence[Point], sources: Sequence[Point],
                      params: Params) -> ConditionalIsingResult:
    """
    Exact <sigma_A | D> on G(D), by spin summation and by parity summation.

    The parity route uses independent Poisson currents n_e ~ Poisson(J_e)
    and ghost currents n_v ~ Poisson(h_v):
        Z_D(A) = e^{sum J + sum h} 2^{|V(D)|} P(boundary of n = A).
    Both routes must agree to 1e-10.
    """
    comps, edges, fields = conditional_couplings(region, deaths, params)
    n = len(comps)
    if n > MAX_CONDITIONAL_COMPONENTS:
        raise CapabilityError(f"G(D) has {n} vertices; exact summation supports "
                              f"at most {MAX_CONDITIONAL_COMPONENTS}")
    source_comps = [_component_of(region, comps, p) for p in sources if not is_ghost(p)]

    z = _spin_table(n).astype(float)
    energy = np.zeros(2 ** n)
    for a, b, j in edges:
        energy += j * z[:, a] * z[:, b]
    for a, h in enumerate(fields):
        energy += h * z[:, a]
    top = energy.max()
    boltzmann = np.exp(energy - top)
    sign = np.ones(2 ** n)
    for a in source_comps:
        sign = sign * z[:, a]
    denominator = boltzmann.sum()
    spin_corr = float(np.dot(sign, boltzmann) / denominator)
    spin_log_z = float(top + math.log(denominator))

    states = np.arange(2 ** n)
    prob = np.zeros(2 ** n)
    prob[0] = 1.0
    for a, b, j in edges:
        q = -0.5 * math.expm1(-2.0 * j)
        prob = (1 - q) * prob + q * prob[states ^ ((1 << a) | (1 << b))]
    for a, h in enumerate(fields):
        q = -0.5 * math.expm1(-2.0 * h)
        prob = (1 - q) * prob + q * prob[states ^ (1 << a)]
    target = 0
    for a in source_comps:
        target ^= 1 << a
    parity_corr = float(prob[target] / prob[0])
    parity_log_z = (math.fsum(j for _, _, j in edges) + math.fsum(fields)
                    + n * math.log(2.0) + math.log(prob[0]))

    if abs(spin_corr - parity_corr) > ROUTE_TOLERANCE * max(1.0, abs(spin_corr)) or \
            abs(spin_log_z - parity_log_z) > ROUTE_TOLERANCE * max(1.0, abs(spin_log_z)):
        raise InvariantViolation(f"spin and parity routes disagree: {spin_corr} vs {parity_corr}, "
                                 f"log Z {spin_log_z} vs {parity_log_z}")
    return ConditionalIsingResult(spin_corr, parity_corr, spin_log_z, n)


def conditional_partition_average(region: Region, params: Params, n_samples: int,
                                  rng: np.random.Generator) -> float:
    """Monte Carlo E_D[Z_D] over deaths D ~ Poisson(delta) on K, an estimate of Z'_K."""
    values = np.empty(n_samples)
    for i in range(n_samples):
        deaths = sample_events(region, params.delta, 'vertices', rng)
        values[i] = conditional_ising(region, deaths, (), params).log_partition
    top = values.max()
    return float(math.exp(top) * np.mean(np.exp(values - top)))
