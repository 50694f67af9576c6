"""
Continuous-time cluster Monte Carlo for the space-time Ising measure.

A world holds one piecewise-constant +-1 trajectory per vertex. A sweep
adds silent deaths (rate delta) to the current change points, cuts every
line into segments at those deaths, bonds agreeing neighbour segments
(rate 2 lambda on their overlap) and pins + segments to the ghost-site
(rate 2 gamma). Unpinned clusters then take a fresh fair spin.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from tqdm import tqdm

from domain import CIRCLE, FORMAT_VERSION, PERIODIC, Lattice, Params, TimeDomain
from estimates import (Estimate, block_bootstrap, blocked_error, blocking_error,
                       integrated_autocorrelation_time, weighted_mean)
from exceptions import CheckpointError, InsufficientDataError, InvariantViolation, ParameterError
from logger import get_logger

DEFAULT_BURN_IN_FRACTION = 0.2
DEFAULT_BOOTSTRAP = 200
BLOCKING_MISMATCH = 2.0


@dataclass
class SpinWorld:
    """
    Spin trajectories on L x [0, beta).

    Vertex v has spin initial[v] on [0, changes[v][0]) and flips at every
    change point. On the time circle every trajectory has an even number
    of change points.
    """
    lattice: Lattice
    beta: float
    params: Params
    changes: List[np.ndarray]
    initial: np.ndarray
    topology: str = CIRCLE
    sweep: int = 0

    @classmethod
    def uniform(cls, lattice: Lattice, beta: float, params: Params, topology: str = CIRCLE,
                spin: int = 1) -> "SpinWorld":
        TimeDomain(beta, topology)
        n = lattice.n_vertices
        return cls(lattice, float(beta), params, [np.empty(0) for _ in range(n)],
                   np.full(n, int(spin), dtype=int), topology)

    @property
    def cyclic(self) -> bool:
        return self.topology == CIRCLE

    @property
    def volume(self) -> float:
        return self.lattice.n_vertices * self.beta

    def spin_at(self, vertex: int, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        flips = np.searchsorted(self.changes[vertex], t, side='right')
        return self.initial[vertex] * np.where(flips % 2 == 0, 1, -1)

    def vertex_integral(self, vertex: int) -> float:
        """Integral of sigma_v over [0, beta)."""
        bounds = np.concatenate([[0.0], self.changes[vertex], [self.beta]])
        signs = self.initial[vertex] * np.where(np.arange(bounds.size - 1) % 2 == 0, 1, -1)
        return float(np.dot(np.diff(bounds), signs))

    def pair_integral(self, u: int, v: int) -> float:
        """Integral of sigma_u sigma_v over [0, beta)."""
        if u == v:
            return self.beta
        cuts = np.union1d(self.changes[u], self.changes[v])
        bounds = np.concatenate([[0.0], cuts, [self.beta]])
        mids = 0.5 * (bounds[:-1] + bounds[1:])
        return float(np.dot(np.diff(bounds), self.spin_at(u, mids) * self.spin_at(v, mids)))

    def check_invariants(self):
        for v, c in enumerate(self.changes):
            if self.initial[v] not in (-1, 1):
                raise InvariantViolation(f"vertex {v} carries spin {self.initial[v]}")
            if c.size and (c[0] < 0 or c[-1] >= self.beta or np.any(np.diff(c) < 0)):
                raise InvariantViolation(f"change points of vertex {v} are not sorted in [0, beta)")
            if self.cyclic and c.size % 2:
                raise InvariantViolation(
                    f"vertex {v} has {c.size} change points on the time circle after sweep {self.sweep}")

    def to_dict(self) -> Dict:
        return {
            'lattice': self.lattice.to_dict(),
            'beta': self.beta,
            'params': self.params.to_dict(),
            'topology': self.topology,
            'sweep': self.sweep,
            'initial': [int(s) for s in self.initial],
            'changes': [c.tolist() for c in self.changes],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "SpinWorld":
        lat = data['lattice']
        lattice = Lattice(lat['dimension'], lat['half_width'], lat['boundary'], lat.get('length'))
        p = data['params']
        world = cls(lattice, float(data['beta']), Params(p['lambda'], p['delta'], p['gamma']),
                    [np.asarray(c, dtype=float) for c in data['changes']],
                    np.asarray(data['initial'], dtype=int), data['topology'], int(data['sweep']))
        world.check_invariants()
        return world


# ---------------------------------------------------------------------------
# Cluster update
# ---------------------------------------------------------------------------

def _pieces(deaths: np.ndarray, cyclic: bool) -> Tuple[np.ndarray, np.ndarray, int]:
    """Piece starts, the segment id of each piece and the segment count."""
    k = deaths.size
    starts = np.concatenate([[0.0], deaths])
    if cyclic:
        if k == 0:
            return starts, np.zeros(1, dtype=int), 1
        return starts, np.concatenate([[k - 1], np.arange(k)]), k
    return starts, np.arange(k + 1), k + 1


def cluster_sweep(world: SpinWorld, rng: np.random.Generator,
                  params: Optional[Params] = None) -> SpinWorld:
    """One Swendsen-Wang update of every trajectory; the world is updated in place."""
    params = params or world.params
    beta = world.beta
    n = world.lattice.n_vertices

    starts, ids, offsets, seg_spin_parts, seg_len_parts = [], [], [], [], []
    total = 0
    for v in range(n):
        extra = rng.uniform(0.0, beta, rng.poisson(params.delta * beta))
        deaths = np.sort(np.concatenate([world.changes[v], extra]))
        s, seg, count = _pieces(deaths, world.cyclic)
        ends = np.concatenate([s[1:], [beta]])
        spins = np.zeros(count, dtype=int)
        spins[seg] = world.spin_at(v, 0.5 * (s + ends))
        starts.append(s)
        ids.append(seg)
        offsets.append(total)
        seg_spin_parts.append(spins)
        seg_len_parts.append(np.bincount(seg, weights=ends - s, minlength=count))
        total += count
    seg_spin = np.concatenate(seg_spin_parts)
    seg_len = np.concatenate(seg_len_parts)
    ghost = total

    rows, cols = [], []
    if params.lam > 0:
        for u, v in world.lattice.edges:
            cuts = np.union1d(starts[u], starts[v])
            ends = np.concatenate([cuts[1:], [beta]])
            mids = 0.5 * (cuts + ends)
            gu = ids[u][np.searchsorted(starts[u], mids, side='right') - 1] + offsets[u]
            gv = ids[v][np.searchsorted(starts[v], mids, side='right') - 1] + offsets[v]
            p = -np.expm1(-2.0 * params.lam * (ends - cuts))
            bonded = (seg_spin[gu] == seg_spin[gv]) & (rng.random(cuts.size) < p)
            rows.append(gu[bonded])
            cols.append(gv[bonded])
    if params.gamma > 0:
        p = -np.expm1(-2.0 * params.gamma * seg_len)
        pinned = np.flatnonzero((seg_spin == 1) & (rng.random(total) < p))
        rows.append(pinned)
        cols.append(np.full(pinned.size, ghost))

    r = np.concatenate(rows) if rows else np.empty(0, dtype=int)
    c = np.concatenate(cols) if cols else np.empty(0, dtype=int)
    graph = coo_matrix((np.ones(r.size), (r, c)), shape=(total + 1, total + 1))
    n_comp, labels = connected_components(graph, directed=False)
    new_spin = rng.choice(np.array([-1, 1]), size=n_comp)
    new_spin[labels[ghost]] = 1
    seg_new = new_spin[labels[:total]]

    for v in range(n):
        piece_spin = seg_new[ids[v] + offsets[v]]
        flips = piece_spin[1:] != piece_spin[:-1]
        world.changes[v] = starts[v][1:][flips]
        world.initial[v] = int(piece_spin[0])
    world.sweep += 1
    world.check_invariants()
    return world


# ---------------------------------------------------------------------------
# Measurements
# ---------------------------------------------------------------------------

def _shifted(lattice: Lattice, vertex: int, distance: int) -> Optional[int]:
    return lattice.translate(vertex, (distance,) + (0,) * (lattice.dimension - 1))


def measure_observables(world: SpinWorld, displacements: Sequence[int] = ()) -> Dict[str, float]:
    """Space-time averaged magnetization, its powers and equal-time correlations along axis 0."""
    n = world.lattice.n_vertices
    m = math.fsum(world.vertex_integral(v) for v in range(n)) / world.volume
    record = {'m': m, 'abs_m': abs(m), 'm2': m * m, 'm4': m ** 4}
    for r in displacements:
        pairs = [(v, w) for v in range(n) for w in [_shifted(world.lattice, v, int(r))] if w is not None]
        if not pairs:
            raise ParameterError(f"no vertex pair at displacement {r}")
        record[f'corr_{int(r)}'] = math.fsum(world.pair_integral(v, w) for v, w in pairs) \
            / (len(pairs) * world.beta)
    return record


def run_chain(world: SpinWorld, sweeps: int, rng: np.random.Generator, burn_in: Optional[int] = None,
              displacements: Sequence[int] = (), desc: Optional[str] = None,
              checkpoint_path: Optional[Path] = None, checkpoint_every: int = 0,
              series_path: Optional[Path] = None) -> pd.DataFrame:
    """Burn in, then sweep and measure once per sweep; returns the time series."""
    if sweeps <= 0:
        raise ParameterError(f"sweeps must be positive, got {sweeps}")
    if burn_in is None:
        burn_in = int(DEFAULT_BURN_IN_FRACTION * sweeps)
    logger = get_logger()
    for _ in range(burn_in):
        cluster_sweep(world, rng)

    records = []
    for i in tqdm(range(sweeps), desc=desc, disable=desc is None):
        cluster_sweep(world, rng)
        row = measure_observables(world, displacements)
        row['sweep'] = world.sweep
        records.append(row)
        if checkpoint_path and checkpoint_every and (i + 1) % checkpoint_every == 0:
            save_checkpoint(checkpoint_path, world, rng)
    series = pd.DataFrame.from_records(records)
    if series_path is not None:
        series.to_csv(series_path, index=False)
    logger.debug(f"chain finished: {sweeps} sweeps after {burn_in} burn-in sweeps")
    return series


def series_estimate(series) -> Tuple[Estimate, float]:
    """
    Mean of a chain observable and its integrated autocorrelation time.

    The error is the larger of the tau-blocked error and automatic blocking;
    a disagreement beyond BLOCKING_MISMATCH is logged.
    """
    x = np.asarray(series, dtype=float)
    tau = integrated_autocorrelation_time(x)
    se, _ = blocked_error(x, tau=tau)
    auto = blocking_error(x)
    low, high = sorted((se, auto))
    if high > BLOCKING_MISMATCH * low:
        get_logger().warning(f"blocked error {se:.3g} and automatic blocking {auto:.3g} disagree; "
                             f"keeping the larger")
    return Estimate(float(x.mean()), high, int(x.size)), tau


def binder_statistic(data: np.ndarray) -> float:
    """U = 1 - <m^4> / (3 <m^2>^2) from rows of (m^2, m^4)."""
    m2 = data[:, 0].mean()
    if m2 <= 0:
        return 0.0
    return float(1.0 - data[:, 1].mean() / (3.0 * m2 * m2))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: Path, world: SpinWorld, rng: np.random.Generator, extra: Optional[Dict] = None):
    payload = {
        'format': FORMAT_VERSION,
        'world': world.to_dict(),
        'rng': rng.bit_generator.state,
        'extra': extra or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(payload, f)
    get_logger().log_checkpoint(path, world.sweep)


def load_checkpoint(path: Path) -> Tuple[SpinWorld, np.random.Generator, Dict]:
    try:
        with open(path) as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if payload.get('format') != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint {path} has format {payload.get('format')}, "
                              f"expected {FORMAT_VERSION}")
    try:
        world = SpinWorld.from_dict(payload['world'])
        state = payload['rng']
        rng = np.random.Generator(getattr(np.random, state['bit_generator'])())
        rng.bit_generator.state = state
    except (KeyError, TypeError, AttributeError, InvariantViolation) as e:
        raise CheckpointError(f"checkpoint {path} is corrupted: {e}") from e
    return world, rng, payload.get('extra', {})


# ---------------------------------------------------------------------------
# Critical scan
# ---------------------------------------------------------------------------

@dataclass
class ScanResult:
    """Binder ratios on a (size, rho) grid and the crossing estimate of rho_c."""
    table: pd.DataFrame
    crossings: List[Dict] = field(default_factory=list)
    rho_c: Optional[Estimate] = None
    diagnostic: str = ''

    def to_dict(self) -> Dict:
        return {
            'table': self.table.to_dict(orient='records'),
            'crossings': self.crossings,
            'rho_c': self.rho_c.to_dict() if self.rho_c else None,
            'diagnostic': self.diagnostic,
        }


def scan_point(size: int, rho: float, beta: float, delta: float, sweeps: int, burn_in: int,
               topology: str, n_boot: int, rng: np.random.Generator) -> Dict:
    """Equilibrate one d = 1 chain and summarize its moments and Binder ratio."""
    lattice = Lattice(1, size, PERIODIC)
    world = SpinWorld.uniform(lattice, beta, Params.from_ratio(rho, delta), topology)
    series = run_chain(world, sweeps, rng, burn_in=burn_in)
    moments = series[['m2', 'm4']].to_numpy()
    binder, replicates = block_bootstrap(moments, binder_statistic, rng, n_boot=n_boot)
    try:
        tau = integrated_autocorrelation_time(series['m2'])
    except InsufficientDataError:
        tau = float('nan')
    return {
        'size': size, 'rho': rho, 'beta': beta,
        'abs_m': float(series['abs_m'].mean()),
        'm2': float(series['m2'].mean()),
        'm4': float(series['m4'].mean()),
        'binder': binder,
        'binder_se': float(replicates.std(ddof=1)),
        'tau_m2': tau,
        'n_measure': int(len(series)),
        'replicates': replicates,
    }


def find_crossing(rhos: Sequence[float], small: Sequence[float], large: Sequence[float]) -> Optional[float]:
    """First rho where the larger size's Binder curve rises above the smaller one's."""
    diff = np.asarray(large, dtype=float) - np.asarray(small, dtype=float)
    for i in range(diff.size - 1):
        if diff[i] <= 0 < diff[i + 1]:
            r0, r1 = rhos[i], rhos[i + 1]
            return float(r0 + (r1 - r0) * (-diff[i]) / (diff[i + 1] - diff[i]))
    return None


def estimate_crossings(records: List[Dict], sizes: Sequence[int],
                       rhos: Sequence[float]) -> Tuple[List[Dict], Optional[Estimate]]:
    """Pairwise crossings of consecutive sizes with bootstrap errors, and their weighted mean."""
    by_point = {(r['size'], r['rho']): r for r in records}
    crossings = []
    for small, large in zip(sizes[:-1], sizes[1:]):
        u_small = [by_point[(small, rho)]['binder'] for rho in rhos]
        u_large = [by_point[(large, rho)]['binder'] for rho in rhos]
        value = find_crossing(rhos, u_small, u_large)
        if value is None:
            continue
        reps_small = np.array([by_point[(small, rho)]['replicates'] for rho in rhos])
        reps_large = np.array([by_point[(large, rho)]['replicates'] for rho in rhos])
        boot = [find_crossing(rhos, reps_small[:, b], reps_large[:, b])
                for b in range(reps_small.shape[1])]
        boot = np.array([b for b in boot if b is not None])
        se = float(boot.std(ddof=1)) if boot.size > 1 else 0.0
        crossings.append({'sizes': [small, large], 'rho': value, 'se': se,
                          'bootstrap_found': int(boot.size)})
    if not crossings:
        return crossings, None
    return crossings, weighted_mean([c['rho'] for c in crossings], [c['se'] for c in crossings])


def scan_critical(sizes: Sequence[int], rho_grid: Sequence[float], sweeps: int,
                  rng: np.random.Generator, aspect: float = 1.0, dimension: int = 1,
                  burn_in: Optional[int] = None, delta: float = 1.0, topology: str = CIRCLE,
                  n_boot: int = DEFAULT_BOOTSTRAP, workers: int = 1) -> ScanResult:
    """
    Binder-crossing estimate of the critical ratio of the d = 1 chain at zero field,
    running every (size, rho) point as an independent chain with beta = aspect * size.
    """
    if dimension != 1:
        raise ParameterError("the critical scan is implemented for d = 1 only")
    sizes = sorted(int(s) for s in sizes)
    rhos = [float(r) for r in rho_grid]
    if any(s < 1 for s in sizes):
        raise ParameterError("scan sizes must be at least 1")
    burn_in = int(DEFAULT_BURN_IN_FRACTION * sweeps) if burn_in is None else burn_in
    logger = get_logger()

    tasks = [(size, rho, aspect * size) for size in sizes for rho in rhos]
    streams = rng.spawn(len(tasks))
    records = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(scan_point, size, rho, beta, delta, sweeps, burn_in,
                                       topology, n_boot, stream)
                       for (size, rho, beta), stream in zip(tasks, streams)]
            for future in tqdm(futures, total=len(futures), desc="Scanning"):
                records.append(future.result())
    else:
        for (size, rho, beta), stream in tqdm(list(zip(tasks, streams)), desc="Scanning"):
            records.append(scan_point(size, rho, beta, delta, sweeps, burn_in, topology, n_boot, stream))
    for r in records:
        logger.log_scan_point(r['size'], r['rho'], {k: v for k, v in r.items() if k != 'replicates'})

    table = pd.DataFrame([{k: v for k, v in r.items() if k != 'replicates'} for r in records])
    if len(sizes) < 2:
        return ScanResult(table, diagnostic="a crossing needs at least two sizes")
    if any(b <= a for a, b in zip(rhos[:-1], rhos[1:])):
        return ScanResult(table, diagnostic="rho grid is not strictly increasing; no crossing estimate")
    crossings, rho_c = estimate_crossings(records, sizes, rhos)
    if rho_c is None:
        logger.warning("no Binder crossing found on the rho grid")
        return ScanResult(table, crossings, None, "no Binder crossing on the grid")
    logger.log_estimate('rho_c', rho_c, {'sizes': sizes, 'aspect': aspect})
    return ScanResult(table, crossings, rho_c, '')


def decay_profile(dimension: int, n: int, beta: float, rho: float, displacements: Sequence[int],
                  sweeps: int, rng: np.random.Generator, burn_in: Optional[int] = None,
                  delta: float = 1.0, topology: str = CIRCLE,
                  series_path: Optional[Path] = None, checkpoint_path: Optional[Path] = None,
                  checkpoint_every: int = 0,
                  world: Optional[SpinWorld] = None) -> List[Tuple[int, Estimate]]:
    """
    Equal-time <sigma_0 sigma_x> against distance along axis 0, for the mass fit.

    A `world` restored from a checkpoint continues its chain instead of a
    fresh all-plus start.
    """
    if dimension not in (1, 2):
        raise ParameterError("decay profiles are available for d = 1 and d = 2")
    lattice = Lattice(dimension, n, PERIODIC)
    if world is None:
        world = SpinWorld.uniform(lattice, beta, Params.from_ratio(rho, delta), topology)
    elif world.lattice != lattice or world.beta != beta:
        raise CheckpointError("checkpointed world does not match the requested lattice and beta")
    displacements = sorted(set(int(r) for r in displacements))
    series = run_chain(world, sweeps, rng, burn_in=burn_in, displacements=displacements,
                       desc='decay', series_path=series_path, checkpoint_path=checkpoint_path,
                       checkpoint_every=checkpoint_every)
    profile = []
    for r in displacements:
        estimate, tau = series_estimate(series[f'corr_{r}'])
        profile.append((r, estimate))
        get_logger().debug(f"distance {r}: {estimate} (tau {tau:.2f})")
    return profile


# ---------------------------------------------------------------------------
# Magnetization in a field
# ---------------------------------------------------------------------------

def field_point(lattice: Lattice, beta: float, params: Params, sweeps: int, burn_in: Optional[int],
                topology: str, rng: np.random.Generator) -> Estimate:
    """Chain estimate of the space-time averaged magnetization at one field strength."""
    world = SpinWorld.uniform(lattice, beta, params, topology)
    series = run_chain(world, sweeps, rng, burn_in=burn_in)
    estimate, _ = series_estimate(series['m'])
    return estimate


def magnetization_curve(size: int, rho: float, gammas: Sequence[float], sweeps: int,
                        rng: np.random.Generator, beta: Optional[float] = None, delta: float = 1.0,
                        burn_in: Optional[int] = None, topology: str = CIRCLE,
                        workers: int = 1) -> List[Estimate]:
    """
    M(gamma) at fixed rho on the d = 1 ring of half-width `size`.

    Beta defaults to the number of vertices. Every field strength runs its
    own chain on its own stream.
    """
    if any(g <= 0 for g in gammas):
        raise ParameterError("the magnetization curve needs positive fields")
    lattice = Lattice(1, size, PERIODIC)
    beta = float(lattice.n_vertices) if beta is None else float(beta)
    base = Params.from_ratio(rho, delta)
    tasks = [(lattice, beta, base.replace(gamma=float(g)), sweeps, burn_in, topology, stream)
             for g, stream in zip(gammas, rng.spawn(len(gammas)))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(field_point, *task) for task in tasks]
            curve = [future.result() for future in tqdm(futures, total=len(futures), desc="Field curve")]
    else:
        curve = [field_point(*task) for task in tqdm(tasks, desc="Field curve")]
    for g, m in zip(gammas, curve):
        get_logger().log_estimate('magnetization', m, {'rho': rho, 'gamma': float(g), 'size': size})
    return curve
