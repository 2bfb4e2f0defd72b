"""Kernel functions for local regression.

The base kernel must be a symmetric C^1 density supported on [-1, 1].
Bias correction of local linear fits is equivalent to smoothing with the
second-order kernel ``2*sqrt(2)*K(sqrt(2)x) - K(x)``; the bootstrap needs
the integral of the squared second difference of that kernel, computed
here once by quadrature so that alternative base kernels work unchanged.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

SQRT2 = math.sqrt(2.0)


def _epanechnikov(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 1.0, 0.75 * (1.0 - x * x), 0.0)


@dataclass(frozen=True)
class Kernel:
    """A symmetric C^1 density on [-1, 1], vectorized over its argument."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.fn(x)


EPANECHNIKOV = Kernel("epanechnikov", _epanechnikov)


def eval_kernel(x, kernel: Kernel = EPANECHNIKOV):
    """Base kernel weight at ``x``; exactly zero outside (-1, 1)."""
    return kernel.fn(x)


def eval_jackknife_kernel(x, kernel: Kernel = EPANECHNIKOV):
    """Second-order (bias-corrected) kernel ``2*sqrt(2)*K(sqrt(2)x) - K(x)``.

    May be negative; supported on [-1, 1] like the base kernel.
    """
    x = np.asarray(x, dtype=float)
    return 2.0 * SQRT2 * kernel.fn(SQRT2 * x) - kernel.fn(x)


def _second_difference_integrand(kstar: Callable[[np.ndarray], np.ndarray]):
    def integrand(t):
        d = kstar(t - 1.0) + kstar(t + 1.0) - 2.0 * kstar(t)
        return d * d

    return integrand


def _mass_from_kstar(kstar: Callable[[np.ndarray], np.ndarray]) -> float:
    integrand = _second_difference_integrand(kstar)
    # Knots of the piecewise-smooth integrand for kernels supported on
    # [-1, 1]; harmless for kernels without kinks at these points.
    inner = np.array([0.0, 1.0, 1.0 / SQRT2])
    knots = np.concatenate([inner, -inner, inner + 1, inner - 1, 1 - inner, -1 - inner])
    knots = np.unique(np.clip(knots, -2.0, 2.0))
    value, err = quad(
        integrand, -2.0, 2.0, points=list(knots), limit=400, epsabs=1e-12, epsrel=1e-12
    )
    if not (err <= 1e-10):
        raise ArithmeticError(f"quadrature error estimate {err:.2e} exceeds 1e-10")
    return float(value)


@functools.lru_cache(maxsize=8)
def second_difference_mass(kernel: Kernel = EPANECHNIKOV) -> float:
    """Integral over [-2, 2] of the squared second difference of the
    second-order kernel, ``int [K*(t-1) + K*(t+1) - 2 K*(t)]^2 dt``.

    Normalizes the variance of the bootstrap increments. Strictly positive
    for any nontrivial base kernel; computed by adaptive quadrature with
    absolute error below 1e-10.
    """
    value = _mass_from_kstar(lambda x: eval_jackknife_kernel(x, kernel))
    if value <= 0.0:
        raise ArithmeticError("second-difference mass must be positive")
    return value
