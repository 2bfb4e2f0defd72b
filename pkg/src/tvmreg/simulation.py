"""Synthetic data generators and the Monte Carlo harness.

Three designs:

* Case I  — smoothly time-varying MA(inf) covariates and errors,
  independent of each other.
* Case II — same covariates, error multiplied by
  sqrt(1 + x1^2 + x2^2)/sqrt(3) so covariates and errors are dependent;
  under a quantile loss the error is first recentered at its
  time-varying quantile so the conditional quantile of the noise term is
  zero given the covariates.
* Case III — stationary AR(1) covariates with i.i.d. standard normal
  errors and coefficient paths scaled by delta (delta = 0 gives constant
  coefficients).

Coefficient paths for Cases I and II are (sin(2*pi*t), 0.5, 2*log(1+2t));
``delta`` perturbs the second path according to ``alternative``.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.stats import norm

from .bootstrap import derive_seed, substream
from .data import Dataset
from .exceptions import ConfigError
from .losses import LossSpec, QuantileLoss

# Moving-average truncation: geometric coefficients never exceed 3/4 in
# magnitude, so lag 200 puts the tail far below 1e-12.
MA_LAG = max(200, int(np.ceil(np.log(1e-12) / np.log(0.75))))

ALTERNATIVES = ("shift", "linear-drift", "quadratic-drift", "bump")


@dataclass(frozen=True)
class ScenarioSpec:
    case: str
    n: int
    loss: LossSpec
    delta: float = 0.0
    alternative: str = "shift"
    seed: int = 0

    def __post_init__(self):
        if self.case not in ("I", "II", "III"):
            raise ConfigError(f"unknown simulation case {self.case!r}")
        if self.alternative not in ALTERNATIVES:
            raise ConfigError(f"unknown alternative {self.alternative!r}")
        if self.delta < 0.0:
            raise ConfigError("delta must be nonnegative")


def ma_filter(coefs: np.ndarray, innovations: np.ndarray, lag: int = MA_LAG) -> np.ndarray:
    """Time-varying geometric moving average: output i is
    ``sum_{j=0..lag} coefs[i]**j * innovations[lag + i - j]``.

    ``innovations`` must hold ``lag`` burn-in draws followed by one draw
    per output index.
    """
    coefs = np.asarray(coefs, dtype=float)
    innovations = np.asarray(innovations, dtype=float)
    n = coefs.shape[0]
    if innovations.shape[0] != n + lag:
        raise ConfigError(f"need {n + lag} innovations, got {innovations.shape[0]}")
    out = np.zeros(n)
    power = np.ones(n)
    for j in range(lag + 1):
        out += power * innovations[lag - j : lag - j + n]
        power *= coefs
    return out


def _ar1(phi: float, innovations: np.ndarray, lag: int) -> np.ndarray:
    x = 0.0
    out = np.empty(innovations.shape[0] - lag)
    for i, eps in enumerate(innovations):
        x = phi * x + eps
        if i >= lag:
            out[i - lag] = x
    return out


def error_sd_case12(times: np.ndarray) -> np.ndarray:
    """Marginal standard deviation of the Case I/II error at each time:
    geometric-series variance of the MA filter divided by 4."""
    a = 0.5 - (times - 0.5) ** 2
    return 0.25 / np.sqrt(1.0 - a * a)


def coefficient_paths(spec: ScenarioSpec, times: np.ndarray) -> np.ndarray:
    """True (n, 3) coefficient paths, including the delta perturbation."""
    t = np.asarray(times, dtype=float)
    if spec.case == "III":
        return np.column_stack(
            [
                spec.delta * np.sin(2.0 * np.pi * t),
                np.full_like(t, 0.5),
                spec.delta * 2.0 * np.log1p(2.0 * t),
            ]
        )
    base = np.full_like(t, 0.5)
    if spec.delta != 0.0:
        if spec.alternative == "shift":
            base = base + spec.delta
        elif spec.alternative == "linear-drift":
            base = base + spec.delta * t
        elif spec.alternative == "quadratic-drift":
            base = base + spec.delta * t * t
        elif spec.alternative == "bump":
            base = base - spec.delta * 10.0 * np.exp(-((t - 0.5) ** 2))
    return np.column_stack([np.sin(2.0 * np.pi * t), base, 2.0 * np.log1p(2.0 * t)])


def gen_dataset(spec: ScenarioSpec) -> Dataset:
    """Generate one dataset; bit-identical for identical specs."""
    n = spec.n
    rng = substream(spec.seed, 0)
    times = np.arange(1, n + 1, dtype=float) / n
    beta = coefficient_paths(spec, times)

    if spec.case == "III":
        innov = rng.standard_normal((3, n + MA_LAG))
        x1 = _ar1(0.5, innov[0], MA_LAG)
        x2 = _ar1(0.5, innov[1], MA_LAG)
        err = innov[2, MA_LAG:]
        x = np.column_stack([np.ones(n), x1, x2])
        y = np.sum(x * beta, axis=1) + err
        return Dataset(x=x, y=y)

    innov = rng.standard_normal((3, n + MA_LAG))
    a = 0.5 - (times - 0.5) ** 2
    b = 0.5 - times / 2.0
    c = 0.25 + times / 2.0
    e = ma_filter(a, innov[0]) / 4.0
    x1 = ma_filter(b, innov[1])
    x2 = ma_filter(c, innov[2])
    x = np.column_stack([np.ones(n), x1, x2])
    signal = np.sum(x * beta, axis=1)
    if spec.case == "I":
        y = signal + e
    else:
        if isinstance(spec.loss, QuantileLoss):
            e = e - norm.ppf(spec.loss.tau) * error_sd_case12(times)
        y = signal + np.sqrt(1.0 + x1**2 + x2**2) * e / np.sqrt(3.0)
    return Dataset(x=x, y=y)


@dataclass(frozen=True)
class MCResult:
    rate: float
    n_reps: int
    std_error: float
    detail: dict


def _mc_worker(args):
    test_fn, spec, rep, base_seed = args
    rep_seed = derive_seed(base_seed, 100, rep)
    data = gen_dataset(replace(spec, seed=rep_seed))
    return bool(test_fn(data, derive_seed(base_seed, 101, rep)))


def default_workers() -> int:
    env = os.environ.get("TVMREG_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def mc_rejection_rate(
    spec: ScenarioSpec,
    test_fn: Callable[[Dataset, int], bool],
    n_reps: int,
    base_seed: int,
    workers: int | None = None,
) -> MCResult:
    """Rejection frequency of ``test_fn(dataset, test_seed) -> bool`` over
    independently seeded replications. Deterministic given the base seed;
    replication seeds are index based, so worker scheduling is irrelevant.
    """
    if n_reps < 1:
        raise ConfigError("need at least one replication")
    tasks = [(test_fn, spec, rep, base_seed) for rep in range(n_reps)]
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1:
        flags = [_mc_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            flags = list(pool.map(_mc_worker, tasks, chunksize=max(1, n_reps // (8 * workers))))
    rate = float(np.mean(flags))
    se = float(np.sqrt(rate * (1.0 - rate) / n_reps))
    return MCResult(
        rate=rate,
        n_reps=n_reps,
        std_error=se,
        detail={"case": spec.case, "n": spec.n, "loss": spec.loss.label, "delta": spec.delta},
    )


def power_curve(
    spec: ScenarioSpec,
    test_fn: Callable[[Dataset, int], bool],
    deltas,
    n_reps: int,
    base_seed: int,
    workers: int | None = None,
) -> list[dict]:
    """Rejection rate per delta; rows are CSV-ready dictionaries."""
    deltas = list(deltas)
    if any(d2 < d1 for d1, d2 in zip(deltas, deltas[1:])):
        raise ConfigError("deltas must be ascending")
    rows = []
    for k, delta in enumerate(deltas):
        res = mc_rejection_rate(
            replace(spec, delta=float(delta)),
            test_fn,
            n_reps,
            derive_seed(base_seed, 102, k),
            workers,
        )
        rows.append(
            {
                "delta": float(delta),
                "rate": res.rate,
                "std_error": res.std_error,
                "n_reps": res.n_reps,
            }
        )
    return rows
