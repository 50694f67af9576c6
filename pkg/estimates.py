"""
Error analysis for Monte Carlo estimates.

Every sampling operation in the engine returns an Estimate. Ratio
estimators use a block jackknife; Markov-chain time series use automatic
blocking or windowed autocorrelation times; scan crossings use a block
bootstrap.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from exceptions import InsufficientDataError, ParameterError

DEFAULT_JACKKNIFE_BLOCKS = 50

# Sokal window constant for the integrated autocorrelation time
SOKAL_WINDOW = 5.0


@dataclass(frozen=True)
class Estimate:
    """Value, standard error and sample count of a (possibly exact) quantity."""
    value: float
    std_error: float
    n_samples: int
    flags: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise InsufficientDataError(f"estimate is not finite: {self.value}")
        if self.std_error < 0 or not math.isfinite(self.std_error):
            raise InsufficientDataError(f"standard error is invalid: {self.std_error}")

    @classmethod
    def exact(cls, value: float, n_samples: int = 0, flags: Tuple[str, ...] = ()) -> "Estimate":
        return cls(float(value), 0.0, n_samples, tuple(flags))

    @property
    def is_exact(self) -> bool:
        return self.std_error == 0.0

    def with_flags(self, *flags: str) -> "Estimate":
        return Estimate(self.value, self.std_error, self.n_samples, self.flags + tuple(flags))

    def to_dict(self) -> dict:
        return {
            'value': self.value,
            'std_error': self.std_error,
            'n_samples': self.n_samples,
            'flags': list(self.flags),
        }

    def __str__(self):
        return f"{self.value:.6g} +/- {self.std_error:.2g}"


def _block_sums(samples: np.ndarray, n_blocks: int) -> Tuple[np.ndarray, int]:
    n = samples.shape[0]
    n_blocks = min(n_blocks, n)
    if n_blocks < 2:
        raise InsufficientDataError(f"need at least 2 samples for a jackknife, got {n}")
    usable = (n // n_blocks) * n_blocks
    blocks = samples[:usable].reshape(n_blocks, usable // n_blocks, -1)
    return blocks.sum(axis=1), usable


def jackknife(samples, statistic: Callable[[np.ndarray], float],
              n_blocks: int = DEFAULT_JACKKNIFE_BLOCKS) -> Estimate:
    """
    Block jackknife for a smooth function of column means.

    Args:
        samples: (n, k) array, one row per sample
        statistic: maps the vector of k column means to a float
        n_blocks: number of jackknife blocks (capped at n)

    Returns:
        Estimate with the full-sample statistic as value
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    n = data.shape[0]
    value = float(statistic(data.mean(axis=0)))

    sums, usable = _block_sums(data, n_blocks)
    total = sums.sum(axis=0)
    nb = sums.shape[0]
    block_size = usable // nb
    leave_out = (total[None, :] - sums) / (usable - block_size)
    thetas = np.array([statistic(row) for row in leave_out], dtype=float)
    if not np.all(np.isfinite(thetas)):
        raise InsufficientDataError("jackknife replicate is not finite (zero denominator?)")
    variance = np.sum((thetas - thetas.mean()) ** 2) * ((nb - 1) / nb)
    return Estimate(value, float(math.sqrt(variance)), n)


def ratio_estimate(numerator, denominator, n_blocks: int = DEFAULT_JACKKNIFE_BLOCKS) -> Estimate:
    """mean(numerator) / mean(denominator) with a common-sample jackknife error."""
    data = np.column_stack([np.asarray(numerator, float), np.asarray(denominator, float)])
    if data[:, 1].sum() <= 0:
        raise InsufficientDataError("denominator has zero mean; every sample failed")
    return jackknife(data, lambda m: m[0] / m[1], n_blocks)


def mean_estimate(samples) -> Estimate:
    data = np.asarray(samples, dtype=float)
    n = data.size
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {n}")
    return Estimate(float(data.mean()), float(data.std(ddof=1) / math.sqrt(n)), n)


def blocking_error(series, confidence: float = 0.99) -> float:
    """
    Standard error of the mean of a correlated series by automatic blocking.

    Repeatedly halves the series and stops at the first level where the
    remaining autocovariance is not significant under a chi-square test.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 4:
        raise InsufficientDataError(f"blocking needs at least 4 points, got {x.size}")
    d = int(math.floor(math.log2(x.size)))
    x = x[:2 ** d]
    mu = x.mean()
    gamma = np.zeros(d)
    s = np.zeros(d)
    for i in range(d):
        n = x.size
        gamma[i] = np.sum((x[:-1] - mu) * (x[1:] - mu)) / n
        s[i] = np.var(x)
        x = 0.5 * (x[0::2] + x[1::2])

    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(s > 0, (gamma / s) ** 2, 0.0)
    m = np.cumsum((ratio * 2.0 ** np.arange(1, d + 1)[::-1])[::-1])[::-1]
    thresholds = stats.chi2.ppf(confidence, df=np.arange(1, d + 1))

    k = d - 1
    for level in range(d):
        if m[level] < thresholds[level]:
            k = level
            break
    return float(math.sqrt(s[k] / 2 ** (d - k)))


def autocorrelation(series) -> np.ndarray:
    """Normalized autocorrelation function via FFT."""
    x = np.asarray(series, dtype=float)
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(x, size)
    acf = np.fft.irfft(spectrum * np.conjugate(spectrum), size)[:n]
    if acf[0] <= 0:
        return np.zeros(n)
    return acf / acf[0]


def integrated_autocorrelation_time(series, window: float = SOKAL_WINDOW) -> float:
    """
    Integrated autocorrelation time with Sokal's automatic window.

    tau = 1/2 + sum_{t=1}^{W} rho(t), with the smallest W >= window * tau(W).
    A constant series returns 0.5.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 2:
        raise InsufficientDataError("autocorrelation needs at least 2 points")
    rho = autocorrelation(x)
    if not np.any(rho):
        return 0.5
    taus = 0.5 + np.cumsum(rho[1:])
    for w, tau in enumerate(taus, start=1):
        if w >= window * tau:
            return float(max(tau, 0.5))
    return float(max(taus[-1], 0.5))


def blocked_error(series, tau: Optional[float] = None, factor: float = 10.0) -> Tuple[float, int]:
    """
    Standard error of the mean using blocks at least `factor` times tau long.

    Returns:
        (standard error, block length)
    """
    x = np.asarray(series, dtype=float)
    if tau is None:
        tau = integrated_autocorrelation_time(x)
    length = max(1, int(math.ceil(factor * tau)))
    n_blocks = x.size // length
    if n_blocks < 2:
        raise InsufficientDataError(
            f"series of {x.size} points is too short for blocks of {length} "
            f"(tau={tau:.1f}); run more sweeps")
    means = x[:n_blocks * length].reshape(n_blocks, length).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_blocks)), length


def block_bootstrap(series, statistic: Callable[[np.ndarray], float], rng: np.random.Generator,
                    n_boot: int = 200, n_blocks: int = 50) -> Tuple[float, np.ndarray]:
    """
    Bootstrap over contiguous blocks of a (n, k) series.

    Returns:
        (statistic of the full series, array of bootstrap replicates)
    """
    data = np.asarray(series, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    n_blocks = min(n_blocks, data.shape[0])
    if n_blocks < 2:
        raise InsufficientDataError("bootstrap needs at least 2 blocks")
    length = data.shape[0] // n_blocks
    blocks = data[:n_blocks * length].reshape(n_blocks, length, -1)
    value = float(statistic(data))
    replicates = np.empty(n_boot)
    for b in range(n_boot):
        pick = rng.choice(n_blocks, n_blocks)
        replicates[b] = statistic(blocks[pick].reshape(-1, data.shape[1]))
    return value, replicates


def propagate(function: Callable[..., float], estimates: Sequence[Estimate],
              rel_step: float = 1e-6) -> Estimate:
    """
    First-order (delta method) propagation through independent estimates.
    """
    values = [e.value for e in estimates]
    centre = float(function(*values))
    variance = 0.0
    for i, est in enumerate(estimates):
        if est.std_error == 0:
            continue
        h = rel_step * max(abs(est.value), 1.0)
        up = list(values)
        down = list(values)
        up[i] += h
        down[i] -= h
        grad = (function(*up) - function(*down)) / (2 * h)
        variance += (grad * est.std_error) ** 2
    n = min((e.n_samples for e in estimates if e.n_samples), default=0)
    return Estimate(centre, math.sqrt(variance), n)


def combine_quadrature(*errors: float) -> float:
    return math.sqrt(math.fsum(e * e for e in errors))


def z_score(a: Estimate, b: Estimate) -> float:
    """(a - b) / combined independent error; 0 when both are exact and equal."""
    se = combine_quadrature(a.std_error, b.std_error)
    diff = a.value - b.value
    if se == 0:
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return diff / se


def one_sided_holds(lhs: float, rhs: float, sigma: float, buffer: float = 3.0) -> bool:
    """lhs <= rhs within `buffer` combined standard errors."""
    return lhs <= rhs + buffer * sigma


def binomial_pass_rate(passes: int, trials: int, target: float = 0.99,
                       alpha: float = 0.01) -> Tuple[bool, float]:
    """
    Test a pass count against a target rate.

    Passes unless the observed rate is significantly below target.
    """
    if trials <= 0:
        raise ParameterError("trials must be positive")
    result = stats.binomtest(passes, trials, target, alternative='less')
    return bool(result.pvalue >= alpha), float(result.pvalue)


def weighted_mean(values, errors) -> Estimate:
    v = np.asarray(values, dtype=float)
    e = np.asarray(errors, dtype=float)
    if v.size == 0:
        raise InsufficientDataError("no values to average")
    if np.any(e <= 0):
        return Estimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0,
                        int(v.size))
    w = 1.0 / e ** 2
    return Estimate(float(np.sum(w * v) / np.sum(w)), float(math.sqrt(1.0 / np.sum(w))), int(v.size))
