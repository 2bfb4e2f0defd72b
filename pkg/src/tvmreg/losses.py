"""Convex loss families and the weighted M-regression solver.

Every local fit in the package reduces to minimizing
``sum_i w_i * rho(y_i - z_i @ theta)`` for a convex loss ``rho`` with left
derivative ``psi``. Squared loss is solved by weighted normal equations;
the other losses by iteratively reweighted least squares on a smoothed
objective whose smoothing parameter shrinks geometrically, with a
backtracking safeguard so the objective never increases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, NonConvergence, SingularDesign


@dataclass(frozen=True)
class SquaredLoss:
    """rho(x) = x^2."""

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return r * r

    def psi(self, r):
        return 2.0 * np.asarray(r, dtype=float)

    def irls_weight(self, r, floor):
        return np.full_like(np.asarray(r, dtype=float), 2.0)

    @property
    def label(self) -> str:
        return "squared"


@dataclass(frozen=True)
class QuantileLoss:
    """rho(x) = tau*max(x,0) + (1-tau)*max(-x,0) (check loss)."""

    tau: float

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"quantile level must be in (0,1), got {self.tau}")

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r > 0.0, self.tau * r, (self.tau - 1.0) * r)

    def psi(self, r):
        # Left derivative: tau - 1 on r <= 0, tau on r > 0.
        r = np.asarray(r, dtype=float)
        return np.where(r <= 0.0, self.tau - 1.0, self.tau)

    def irls_weight(self, r, floor):
        r = np.asarray(r, dtype=float)
        scale = np.where(r <= 0.0, 1.0 - self.tau, self.tau)
        return scale / np.maximum(np.abs(r), floor)

    @property
    def label(self) -> str:
        return f"quantile(tau={self.tau:g})"


@dataclass(frozen=True)
class HuberLoss:
    """rho(x) = x^2/2 inside [-threshold, threshold], linear outside."""

    threshold: float

    def __post_init__(self):
        if not self.threshold > 0.0:
            raise ConfigError(f"huber threshold must be positive, got {self.threshold}")

    def value(self, r):
        r = np.asarray(r, dtype=float)
        a = np.abs(r)
        c = self.threshold
        return np.where(a <= c, 0.5 * r * r, c * a - 0.5 * c * c)

    def psi(self, r):
        r = np.asarray(r, dtype=float)
        return np.clip(r, -self.threshold, self.threshold)

    def irls_weight(self, r, floor):
        r = np.asarray(r, dtype=float)
        a = np.abs(r)
        return np.where(a <= self.threshold, 1.0, self.threshold / np.maximum(a, floor))

    @property
    def label(self) -> str:
        return f"huber(threshold={self.threshold:g})"


@dataclass(frozen=True)
class ExpectileLoss:
    """rho(x) = |I(x <= 0) - level| * x^2 (asymmetric least squares)."""

    level: float

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ConfigError(f"expectile level must be in (0,1), got {self.level}")

    def _scale(self, r):
        return np.where(np.asarray(r, dtype=float) <= 0.0, 1.0 - self.level, self.level)

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return self._scale(r) * r * r

    def psi(self, r):
        r = np.asarray(r, dtype=float)
        return 2.0 * self._scale(r) * r

    def irls_weight(self, r, floor):
        return 2.0 * self._scale(r)

    @property
    def label(self) -> str:
        return f"expectile(level={self.level:g})"


@dataclass(frozen=True)
class PowerLoss:
    """rho(x) = |x|^exponent. Supported for exponent in (1, 4].

    Exponents at or below 1 are rejected: the IRLS solver needs a strictly
    convex, differentiable objective. Exponents in (1, 2] additionally keep
    psi within the robustness envelope |psi(x)-psi(y)| <= M1 + M2|x-y|.
    """

    exponent: float

    def __post_init__(self):
        if not 1.0 < self.exponent <= 4.0:
            raise ConfigError(
                f"power-loss exponent must be in (1, 4], got {self.exponent}"
            )

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return np.abs(r) ** self.exponent

    def psi(self, r):
        r = np.asarray(r, dtype=float)
        q = self.exponent
        return q * np.abs(r) ** (q - 1.0) * np.sign(r)

    def irls_weight(self, r, floor):
        r = np.asarray(r, dtype=float)
        q = self.exponent
        return q * np.maximum(np.abs(r), floor) ** (q - 2.0)

    @property
    def label(self) -> str:
        return f"power(exponent={self.exponent:g})"


LossSpec = SquaredLoss | QuantileLoss | HuberLoss | ExpectileLoss | PowerLoss


def loss_value(loss: LossSpec, r):
    """rho(r); nonnegative with rho(0) = 0."""
    return loss.value(r)


def loss_psi(loss: LossSpec, r):
    """Left derivative of rho at r."""
    return loss.psi(r)


def loss_from_name(text: str) -> LossSpec:
    """Parse a loss description like ``l2``, ``quantile:0.5``, ``huber:1.345``,
    ``expectile:0.8`` or ``power:1.5``."""
    name, _, arg = text.strip().lower().partition(":")
    try:
        if name in ("l2", "squared", "ls"):
            return SquaredLoss()
        if name == "quantile":
            return QuantileLoss(float(arg))
        if name == "huber":
            return HuberLoss(float(arg))
        if name == "expectile":
            return ExpectileLoss(float(arg))
        if name in ("power", "lq"):
            return PowerLoss(float(arg))
    except ValueError as exc:
        raise ConfigError(f"bad loss parameter in {text!r}: {exc}") from exc
    raise ConfigError(f"unknown loss {text!r}")


def quantile_vertex_polish_batch(design, targets, weights, tau, theta, tol=1e-9):
    """Vectorized vertex walk over a stack of quantile fit problems.

    ``design`` is (rows, nobs, ncoef); each row is finished like
    quantile_vertex_polish but the walks advance in lockstep so the small
    linear solves batch across rows. Returns (coefficients, certified)
    where rows failing to certify keep their input coefficients and a
    False flag (callers fall back to plain IRLS for those).
    """
    design = np.asarray(design, dtype=float)
    nrow, nobs, ncoef = design.shape
    out = np.asarray(theta, dtype=float).copy()
    ok = np.zeros(nrow, dtype=bool)
    active = weights > 0.0
    enough = active.sum(axis=1) >= ncoef
    resid = targets - np.einsum("rwm,rm->rw", design, theta)
    key = np.where(active, np.abs(resid), np.inf)
    basis = np.argsort(key, axis=1, kind="stable")[:, :ncoef]
    in_basis = np.zeros((nrow, nobs), dtype=bool)
    np.put_along_axis(in_basis, basis, True, axis=1)
    alive = np.where(enough)[0]

    for _ in range(3 * ncoef + 60):
        if alive.size == 0:
            break
        d = design[alive]
        y = targets[alive]
        w = weights[alive]
        act = active[alive]
        b = basis[alive]
        ib = in_basis[alive]
        za = np.take_along_axis(d, b[:, :, None], axis=1)
        try:
            inv = np.linalg.inv(za)
        except np.linalg.LinAlgError:
            keep = []
            inv = np.empty_like(za)
            for j in range(alive.size):
                try:
                    inv[j] = np.linalg.inv(za[j])
                    keep.append(j)
                except np.linalg.LinAlgError:
                    pass
            keep = np.asarray(keep, dtype=int)
            alive = alive[keep]
            if alive.size == 0:
                break
            d, y, w, act, b, ib, inv = (
                d[keep], y[keep], w[keep], act[keep], b[keep], ib[keep], inv[keep],
            )
        yb = np.take_along_axis(y, b, axis=1)
        cand = np.einsum("rmn,rn->rm", inv, yb)
        bad = ~np.all(np.isfinite(cand), axis=1)
        if np.any(bad):
            keep = ~bad
            alive = alive[keep]
            if alive.size == 0:
                break
            d, y, w, act, b, ib, inv, cand = (
                d[keep], y[keep], w[keep], act[keep], b[keep], ib[keep], inv[keep], cand[keep],
            )
        rc = y - np.einsum("rwm,rm->rw", d, cand)
        np.put_along_axis(rc, b, 0.0, axis=1)
        psi = np.where(rc <= 0.0, tau - 1.0, tau)
        off_w = np.where(act & ~ib, w, 0.0)
        v = np.einsum("rw,rwm->rm", off_w * psi, d)
        wb = np.take_along_axis(w, b, axis=1)
        mult = -np.einsum("rnm,rn->rm", inv, v) / wb
        low = mult - (tau - 1.0)
        high = tau - mult
        viol = np.minimum(low, high)
        worst = viol.min(axis=1)
        certified = worst >= -tol
        if np.any(certified):
            out[alive[certified]] = cand[certified]
            ok[alive[certified]] = True
            keep = ~certified
            alive = alive[keep]
            if alive.size == 0:
                break
            d, y, w, act, b, ib, inv, cand, rc, low, high, viol = (
                d[keep], y[keep], w[keep], act[keep], b[keep], ib[keep], inv[keep],
                cand[keep], rc[keep], low[keep], high[keep], viol[keep],
            )
        k = np.argmin(viol, axis=1)
        rows = np.arange(alive.size)
        edge = np.take_along_axis(inv, k[rows, None, None], axis=2)[:, :, 0]
        flip = high[rows, k] < low[rows, k]
        edge[flip] = -edge[flip]
        slope = np.einsum("rwm,rm->rw", d, edge)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = rc / slope
        eligible = act & ~ib & (np.abs(slope) > 1e-12) & (ratio >= -1e-12)
        ratio = np.where(eligible, np.maximum(ratio, 0.0), np.inf)
        entering = np.argmin(ratio, axis=1)
        stuck = ~np.isfinite(ratio[rows, entering])
        if np.any(stuck):
            keep = ~stuck
            alive = alive[keep]
            if alive.size == 0:
                break
            b, ib, k, entering, rows = (
                b[keep], ib[keep], k[keep], entering[keep], np.arange(int(keep.sum())),
            )
        leaving = b[rows, k]
        in_basis[alive, leaving] = False
        in_basis[alive, entering] = True
        basis[alive, k] = entering
    return out, ok


def mreg_objective(design, targets, weights, loss: LossSpec, coef) -> float:
    """Weighted objective sum_i w_i * rho(y_i - z_i @ coef)."""
    design = np.asarray(design, dtype=float)
    r = np.asarray(targets, dtype=float) - design @ np.asarray(coef, dtype=float)
    return float(np.asarray(weights, dtype=float) @ loss.value(r))


def _weighted_normal_solve(design, targets, weights):
    """Solve the weighted normal equations with a ridge-jitter rescue."""
    wz = design * weights[:, None]
    a = wz.T @ design
    b = wz.T @ targets
    m = a.shape[0]
    try:
        coef = np.linalg.solve(a, b)
        if np.all(np.isfinite(coef)):
            return coef
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * np.trace(a) / m
    if not jitter > 0.0:
        raise SingularDesign("weighted design has zero scale")
    try:
        coef = np.linalg.solve(a + jitter * np.eye(m), b)
    except np.linalg.LinAlgError as exc:
        raise SingularDesign("weighted design is rank deficient") from exc
    if not np.all(np.isfinite(coef)):
        raise SingularDesign("weighted design is rank deficient")
    return coef


# Smoothing schedule for the IRLS solver: the residual floor shrinks
# geometrically from IRLS_FLOOR_START to IRLS_FLOOR_END, after which the
# iteration continues until the coefficient or gradient tolerance is met.
IRLS_FLOOR_START = 1e-2
IRLS_FLOOR_END = 1e-8
IRLS_FLOOR_FACTOR = 0.25
IRLS_MAX_ITER = 200
IRLS_COEF_TOL = 1e-9
IRLS_GRAD_TOL = 1e-8
# Attempt the quantile vertex jump once the IRLS step is this small.
QUANTILE_POLISH_TRIGGER = 1e-3


def quantile_vertex_polish(design, targets, weights, tau, theta, tol=1e-9):
    """Finish a quantile fit exactly from a nearby IRLS iterate.

    The weighted check-loss objective is piecewise linear, so some
    minimizer interpolates as many observations as there are
    coefficients. Starting from the interpolation set suggested by the
    current residuals, this walks between adjacent vertices: the
    subgradient certificate (multipliers in [tau-1, tau] on interpolated
    rows balancing the fixed left derivatives elsewhere) either accepts
    the vertex or names the row to release, and the minimum-ratio rule
    names the row entering in its place. Returns the optimal vertex or
    None when a basis turns singular or the walk fails to certify.
    """
    ncoef = design.shape[1]
    active = weights > 0.0
    if int(active.sum()) < ncoef:
        return None
    r = targets - design @ theta
    key = np.where(active, np.abs(r), np.inf)
    basis = np.argsort(key, kind="stable")[:ncoef].tolist()
    in_basis = np.zeros(design.shape[0], dtype=bool)
    in_basis[basis] = True

    for _ in range(3 * ncoef + 30):
        za = design[basis]
        try:
            cand = np.linalg.solve(za, targets[basis])
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(cand)):
            return None
        rc = targets - design @ cand
        rc[basis] = 0.0
        psi = np.where(rc <= 0.0, tau - 1.0, tau)
        off = active & ~in_basis
        v = design[off].T @ (weights[off] * psi[off])
        try:
            mult = np.linalg.solve(za.T * weights[basis][None, :], -v)
        except np.linalg.LinAlgError:
            return None
        low = mult - (tau - 1.0)
        high = tau - mult
        if np.all(low >= -tol) and np.all(high >= -tol):
            return cand
        # Release the most violating basis row and walk its edge.
        viol = np.minimum(low, high)
        k = int(np.argmin(viol))
        try:
            edge = np.linalg.solve(za, np.eye(ncoef)[:, k])
        except np.linalg.LinAlgError:
            return None
        if high[k] < low[k]:
            edge = -edge  # multiplier above tau: push this residual positive
        slope = design @ edge
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = rc / slope
        eligible = off & (np.abs(slope) > 1e-12) & (ratio >= -1e-12)
        if not np.any(eligible):
            return None
        ratio = np.where(eligible, np.maximum(ratio, 0.0), np.inf)
        entering = int(np.argmin(ratio))
        in_basis[basis[k]] = False
        in_basis[entering] = True
        basis[k] = entering
    return None


def solve_weighted_mreg(
    design,
    targets,
    weights,
    loss: LossSpec,
    *,
    init=None,
    max_iter: int = IRLS_MAX_ITER,
    coef_tol: float = IRLS_COEF_TOL,
    grad_tol: float = IRLS_GRAD_TOL,
) -> np.ndarray:
    """Minimize ``sum_i w_i * rho(y_i - z_i @ theta)`` over theta.

    Rows with zero weight are dropped before any arithmetic, so the result
    depends only on the positively weighted observations. Raises
    SingularDesign when fewer weighted rows than columns remain (or the
    design is rank deficient beyond jitter rescue) and NonConvergence when
    the IRLS cap is hit without meeting tolerance.
    """
    design = np.atleast_2d(np.asarray(design, dtype=float))
    targets = np.asarray(targets, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if not np.all(np.isfinite(weights)) or np.any(weights < 0.0):
        raise ConfigError("weights must be finite and nonnegative")
    active = weights > 0.0
    ncol = design.shape[1]
    if int(active.sum()) < ncol:
        raise SingularDesign(
            f"{int(active.sum())} weighted rows for {ncol} coefficients"
        )
    z = design[active]
    y = targets[active]
    w = weights[active]

    if isinstance(loss, SquaredLoss):
        return _weighted_normal_solve(z, y, w)

    theta = (
        np.asarray(init, dtype=float)
        if init is not None
        else _weighted_normal_solve(z, y, w)
    )
    obj = float(w @ loss.value(y - z @ theta))
    floor = IRLS_FLOOR_START
    for _ in range(max_iter):
        r = y - z @ theta
        lam = loss.irls_weight(r, floor)
        candidate = _weighted_normal_solve(z, y, w * lam)
        # Backtracking keeps descent for losses where the reweighted
        # quadratic is not a majorizer (power loss with exponent > 2).
        step = candidate - theta
        new_obj = float(w @ loss.value(y - z @ (theta + step)))
        shrink = 0
        while new_obj > obj + 1e-12 * (1.0 + abs(obj)) and shrink < 40:
            step *= 0.5
            new_obj = float(w @ loss.value(y - z @ (theta + step)))
            shrink += 1
        new_theta = theta + step
        delta = float(np.max(np.abs(new_theta - theta)))
        scale = 1.0 + float(np.max(np.abs(theta)))
        theta, obj = new_theta, new_obj
        if floor <= IRLS_FLOOR_END * (1.0 + 1e-12):
            if delta < coef_tol * scale:
                return theta
            g = z.T @ (w * loss.psi(y - z @ theta))
            if float(np.max(np.abs(g))) < grad_tol:
                return theta
            if isinstance(loss, QuantileLoss) and delta < QUANTILE_POLISH_TRIGGER * scale:
                polished = quantile_vertex_polish(z, y, w, loss.tau, theta)
                if polished is not None:
                    return polished
        floor = max(floor * IRLS_FLOOR_FACTOR, IRLS_FLOOR_END)
    raise NonConvergence(f"IRLS did not converge in {max_iter} iterations")
