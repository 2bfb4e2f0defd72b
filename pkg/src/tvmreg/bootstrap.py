"""Self-convolved multiplier bootstrap for cumulative-path inference.

Building block: second differences of the bias-corrected coefficient
curve, ``beta(t_i + c) + beta(t_i - c) - 2 beta(t_i)`` at bandwidth c.
Convolving their contrasted, scaled rows with fresh i.i.d. standard
normal multipliers and accumulating yields paths whose conditional law
mimics the limiting Gaussian process of the estimated cumulative path;
maxima of the paths over the trimmed range calibrate every test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import ConfigError, InsufficientLocalData
from .kernels import EPANECHNIKOV, Kernel
from .crf import contrast_matrix
from .local_fit import estimate_curve
from .losses import LossSpec


def ceil_index(x: float) -> int:
    """Ceiling with a tiny guard against float fuzz on exact integers."""
    return int(math.ceil(x - 1e-9))


def derive_seed(base: int, *key: int) -> int:
    """Deterministic 64-bit child seed for a (domain, index, ...) key."""
    ss = np.random.SeedSequence(entropy=int(base), spawn_key=tuple(int(k) for k in key))
    lo, hi = ss.generate_state(2, dtype=np.uint64)[:2]
    return int(lo ^ (hi << 1)) & ((1 << 63) - 1)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for an index-based key under a base seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class SecondDifferences:
    """Rows ``beta_c(t_i + c) + beta_c(t_i - c) - 2 beta_c(t_i)``.

    Rows are stored for i = 1..n (array position i-1) and are guaranteed
    finite on the valid range lo..hi with lo = ceil(2nc), hi = n - lo.
    """

    values: np.ndarray  # (n, p)
    boot_bandwidth: float
    lo: int  # first valid 1-based index
    hi: int  # last valid 1-based index

    @property
    def valid(self) -> np.ndarray:
        return self.values[self.lo - 1 : self.hi]


def second_differences(
    data: Dataset,
    loss: LossSpec,
    boot_bandwidth: float,
    kernel: Kernel = EPANECHNIKOV,
) -> SecondDifferences:
    """Three shifted curve estimates at the bootstrap bandwidth combined
    row by row."""
    c = float(boot_bandwidth)
    if not 0.0 < c < 0.25:
        raise ConfigError(f"bootstrap bandwidth must be in (0, 0.25), got {c}")
    n = data.n
    lo = ceil_index(2.0 * n * c)
    hi = n - lo
    if lo >= hi:
        raise ConfigError(f"no valid indices for bootstrap bandwidth {c} at n={n}")
    plus = estimate_curve(data, loss, c, shift=+c, kernel=kernel)
    minus = estimate_curve(data, loss, c, shift=-c, kernel=kernel)
    center = estimate_curve(data, loss, c, shift=0.0, kernel=kernel)
    values = plus.values + minus.values - 2.0 * center.values
    if not np.all(np.isfinite(values[lo - 1 : hi])):
        raise InsufficientLocalData(
            "second differences undefined inside the valid range; "
            "bootstrap bandwidth too small for this sample size"
        )
    return SecondDifferences(values=values, boot_bandwidth=c, lo=lo, hi=hi)


@dataclass(frozen=True, eq=False)
class BootstrapPath:
    """One convolved partial-sum path over the valid index range."""

    values: np.ndarray  # (hi - lo + 1, s); entry j-lo is the sum through j
    lo: int
    hi: int
    draw: int = 0


def bootstrap_increments(diffs: SecondDifferences, contrast, mass: float) -> np.ndarray:
    """Per-index contrasted increments ``sqrt(c/mass) * C @ D_i`` on the
    valid range; one multiplier scales each row in a bootstrap draw."""
    c = contrast_matrix(contrast)
    scale = math.sqrt(diffs.boot_bandwidth / mass)
    return scale * (diffs.valid @ c.T)


def _multipliers(seed: int, n_draws: int, m: int) -> np.ndarray:
    out = np.empty((n_draws, m))
    for r in range(n_draws):
        out[r] = substream(seed, r).standard_normal(m)
    return out


def draw_bootstrap_path(
    diffs: SecondDifferences,
    contrast,
    mass: float,
    rng: np.random.Generator,
    draw: int = 0,
) -> BootstrapPath:
    """Single path: cumulative sums of increments times fresh standard
    normal multipliers from ``rng``."""
    inc = bootstrap_increments(diffs, contrast, mass)
    r = rng.standard_normal(inc.shape[0])
    values = np.cumsum(inc * r[:, None], axis=0)
    return BootstrapPath(values=values, lo=diffs.lo, hi=diffs.hi, draw=draw)


def draw_bootstrap_paths(
    diffs: SecondDifferences,
    contrast,
    mass: float,
    n_draws: int,
    seed: int,
) -> np.ndarray:
    """All paths at once, (n_draws, hi-lo+1, s); draw r uses the
    index-based substream (seed, r), so results do not depend on
    scheduling or chunking."""
    inc = bootstrap_increments(diffs, contrast, mass)
    mult = _multipliers(seed, n_draws, inc.shape[0])
    return np.cumsum(mult[:, :, None] * inc[None, :, :], axis=1)


@dataclass(frozen=True, eq=False)
class MaxDistribution:
    """Sorted bootstrap maxima used for critical values and p-values."""

    values: np.ndarray  # (n_draws,) ascending
    n_draws: int
    trim_lo: int
    trim_hi: int


def path_max(paths: np.ndarray, path_lo: int, trim_lo: int, trim_hi: int) -> np.ndarray:
    """Per-draw max of the sup-norm over trim indices trim_lo..trim_hi."""
    if trim_lo < path_lo or trim_hi - path_lo >= paths.shape[1]:
        raise ConfigError("trim range extends beyond the bootstrap path range")
    window = paths[:, trim_lo - path_lo : trim_hi - path_lo + 1, :]
    return np.abs(window).max(axis=(1, 2))


def max_distribution(
    diffs: SecondDifferences,
    contrast,
    mass: float,
    n_draws: int,
    trim_lo: int,
    trim_hi: int,
    seed: int,
) -> MaxDistribution:
    if n_draws < 100:
        raise ConfigError(f"need at least 100 bootstrap draws, got {n_draws}")
    paths = draw_bootstrap_paths(diffs, contrast, mass, n_draws, seed)
    maxima = path_max(paths, diffs.lo, trim_lo, trim_hi)
    return MaxDistribution(
        values=np.sort(maxima), n_draws=n_draws, trim_lo=trim_lo, trim_hi=trim_hi
    )


def critical_value(dist: MaxDistribution, alpha: float) -> float:
    """Order statistic at rank ceil((1-alpha) * n_draws), 1-based."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0,1), got {alpha}")
    if dist.n_draws == 0:
        raise ConfigError("empty bootstrap distribution")
    rank = ceil_index((1.0 - alpha) * dist.n_draws)
    rank = min(max(rank, 1), dist.n_draws)
    return float(dist.values[rank - 1])


def bootstrap_p_value(maxima: np.ndarray, statistic: float) -> float:
    """Add-one Monte Carlo p-value (1 + #{M_r >= stat}) / (B + 1)."""
    b = maxima.shape[0]
    return float((1 + int(np.sum(maxima >= statistic))) / (b + 1))
