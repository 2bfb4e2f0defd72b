"""Regression dataset container.

Observations live on the rescaled time grid t_i = i/n, i = 1..n. The
design matrix carries the intercept as an explicit first column when one
is wanted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError


@dataclass(frozen=True, eq=False)
class Dataset:
    x: np.ndarray  # (n, p) design, finite
    y: np.ndarray  # (n,) responses
    times: np.ndarray = field(default=None)  # (n,) equal to (1..n)/n

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        n, p = x.shape
        if y.shape[0] != n:
            raise ConfigError(f"{n} design rows but {y.shape[0]} responses")
        if n < 2 * p + 2:
            raise ConfigError(f"need n >= 2p+2 = {2 * p + 2} observations, got {n}")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise ConfigError("design and responses must be finite")
        times = self.times
        if times is None:
            times = np.arange(1, n + 1, dtype=float) / n
        else:
            times = np.asarray(times, dtype=float).ravel()
            if times.shape[0] != n or not np.allclose(
                times, np.arange(1, n + 1) / n, rtol=0.0, atol=1e-12
            ):
                raise ConfigError("times must equal i/n for i = 1..n")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "times", times)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]
