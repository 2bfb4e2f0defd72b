"""Cumulative regression function: aggregation, interpolation, references.

The cumulative regression function at t is the integral of the
coefficient path from 0 to t. Its estimate aggregates bias-corrected
local estimates, ``(1/n) * sum_{i<=j} beta(t_i)``, anchored at zero, and
is linearly interpolated between grid points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import ConfigError, DimensionError, InsufficientLocalData, OutOfRange
from .local_fit import BetaCurve


def contrast_matrix(rows) -> np.ndarray:
    """Validate an (s, p) full-row-rank contrast matrix."""
    c = np.atleast_2d(np.asarray(rows, dtype=float))
    s, p = c.shape
    if s > p:
        raise DimensionError(f"contrast has {s} rows for {p} coefficients")
    sv = np.linalg.svd(c, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise ConfigError("contrast matrix is not of full row rank")
    return c


@dataclass(frozen=True, eq=False)
class CrfPath:
    """Cumulative path on the grid t_0 = 0, t_1, ..., t_n = 1.

    Row j holds the cumulative value at t_j; row 0 is identically zero.
    """

    times: np.ndarray   # (n+1,)
    values: np.ndarray  # (n+1, s)

    @property
    def n(self) -> int:
        return self.times.shape[0] - 1


def aggregate_crf(curve: BetaCurve, contrast) -> CrfPath:
    """Aggregate a shift-zero coefficient curve into the cumulative path
    for the given contrast: ``C @ sum_{i<=j} beta(t_i) / n``."""
    if curve.shift != 0.0:
        raise ConfigError("cumulative aggregation requires a shift-zero curve")
    c = contrast_matrix(contrast)
    if not np.all(np.isfinite(curve.values)):
        raise InsufficientLocalData(
            "coefficient curve has undefined rows; bandwidth too small for the grid"
        )
    n = curve.values.shape[0]
    contrasted = curve.values @ c.T
    values = np.zeros((n + 1, c.shape[0]))
    np.cumsum(contrasted, axis=0, out=values[1:])
    values[1:] /= n
    times = np.concatenate([[0.0], curve.grid])
    return CrfPath(times=times, values=values)


def interpolate_crf(path: CrfPath, t: float) -> np.ndarray:
    """Piecewise-linear value of the path at t in [0, 1]; exact at nodes."""
    if not -1e-12 <= t <= 1.0 + 1e-12:
        raise OutOfRange(f"interpolation time {t} outside [0, 1]")
    t = min(max(float(t), 0.0), 1.0)
    out = np.empty(path.values.shape[1])
    for col in range(path.values.shape[1]):
        out[col] = np.interp(t, path.times, path.values[:, col])
    return out


def integrate_reference(
    fn: Callable[[np.ndarray], np.ndarray],
    times: np.ndarray,
    antiderivative: Callable[[np.ndarray], np.ndarray] | None = None,
    panels_per_step: int = 10,
) -> CrfPath:
    """Cumulative integral of a reference function at each grid time.

    ``fn`` maps a vector of k times to a (k, s) array. Without an
    antiderivative the integral uses composite Simpson on a refinement of
    ``panels_per_step`` sub-intervals per grid step (absolute error at most
    about 1e-9 for twice continuously differentiable integrands on the
    default grid sizes).
    """
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0:
        times = np.concatenate([[0.0], times])
    if antiderivative is not None:
        vals = np.atleast_2d(np.asarray(antiderivative(times), dtype=float))
        if vals.shape[0] != times.shape[0]:
            vals = vals.T
        values = vals - vals[0]
        return CrfPath(times=times, values=values)

    if panels_per_step % 2 or panels_per_step < 2:
        raise ConfigError("panels_per_step must be a positive even number")
    steps = np.diff(times)
    m = panels_per_step
    # Refined nodes: m+1 per step, shared endpoints.
    offsets = np.arange(m + 1) / m
    fine = (times[:-1, None] + steps[:, None] * offsets[None, :]).ravel()
    fvals = np.atleast_2d(np.asarray(fn(fine), dtype=float))
    if fvals.shape[0] != fine.shape[0]:
        fvals = fvals.reshape(fine.shape[0], -1)
    fvals = fvals.reshape(len(steps), m + 1, -1)
    simpson_w = np.ones(m + 1)
    simpson_w[1:-1:2] = 4.0
    simpson_w[2:-1:2] = 2.0
    per_step = (steps / (3.0 * m))[:, None] * np.einsum("k,skj->sj", simpson_w, fvals)
    values = np.zeros((len(times), per_step.shape[1]))
    np.cumsum(per_step, axis=0, out=values[1:])
    return CrfPath(times=times, values=values)
