"""Line integrals of matrix fields along paths, and a small IVP solver.

``line_integrate`` evaluates ``int_0^1 F(r(t)) r'(t) dt``. Because the
integrand depends on ``t`` only, a Runge-Kutta step reduces to a weighted
sum of field evaluations at fixed nodes, and those nodes (times and
weights) are recorded so the parameter gradient of the discretized integral
can be replayed exactly afterwards (discretize-then-differentiate).

Two schemes:

``rk4_fixed``
    classic RK4 with ``steps`` uniform steps. With a t-only right-hand side
    the two midpoint stages coincide, giving composite Simpson weights.
``rk45_adaptive``
    Dormand-Prince 5(4) with local extrapolation, error control
    ``|err_i| <= atol + rtol * max(|y_i|, |y_new_i|)``, safety 0.9 and step
    factors clamped to [0.2, 5] (to [0.2, 1] right after a rejection).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .field import JacobianField, batch_param_grad
from .linalg import DimensionError, Vector, as_vector

SCHEMES = ("rk4_fixed", "rk45_adaptive")

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
INITIAL_STEP = 0.25
MIN_STEP = 1e-14

# Dormand-Prince 5(4) tableau
DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
DP_E = DP_B5 - DP_B4

# Quadrature reduction: stage 2 carries zero weight in both solutions and
# stage 7 sits at the same time as stage 6, so 5 distinct nodes remain.
QUAD_C = np.array([0.0, 3 / 10, 4 / 5, 8 / 9, 1.0])
QUAD_B5 = np.array([DP_B5[0], DP_B5[2], DP_B5[3], DP_B5[4], DP_B5[5]])
QUAD_E = np.array([DP_E[0], DP_E[2], DP_E[3], DP_E[4], DP_E[5] + DP_E[6]])


class IntegrationError(RuntimeError):
    """Adaptive integration gave up before reaching t = 1."""

    def __init__(self, message: str, value: Vector, t: float, error_estimate: float):
        super().__init__(message)
        self.value = value
        self.t = t
        self.error_estimate = error_estimate


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "rk45_adaptive"
    steps: int = 64
    rtol: float = 1e-6
    atol: float = 1e-6
    max_steps: int = 10_000

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.steps < 1 or self.max_steps < 1:
            raise ValueError("steps and max_steps must be >= 1")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")

    def with_tolerance(self, tol: float) -> "IntegratorConfig":
        """The config at a single tolerance knob.

        Adaptive: ``rtol = atol = tol``. Fixed: ``steps = ceil(tol**-1/4)``
        from the O(h^4) error model.
        """
        if self.scheme == "rk45_adaptive":
            return replace(self, rtol=tol, atol=tol)
        # the 1e-9 keeps exact powers (tol=1e-8 -> 100) from rounding up
        return replace(self, steps=max(1, math.ceil(tol ** -0.25 - 1e-9)))

    def tolerance(self, scale: float = 1.0) -> float:
        """Error budget for a result of magnitude ``scale``; ``steps**-4`` relative for rk4_fixed."""
        if self.scheme == "rk45_adaptive":
            return self.atol + self.rtol * scale
        return self.steps ** -4.0 * max(1.0, scale)


@dataclass(frozen=True)
class LinearPath:
    a: Vector
    b: Vector

    def __post_init__(self):
        if self.a.shape != self.b.shape or self.a.ndim != 1:
            raise DimensionError("path endpoints must be vectors of equal dimension")

    @property
    def velocity(self) -> Vector:
        return self.b - self.a

    def points(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=np.float64)[:, None]
        return (1.0 - ts) * self.a + ts * self.b


def linear_path(a, b) -> LinearPath:
    return LinearPath(as_vector(a), as_vector(b))


def staircase_path(a, b) -> list[LinearPath]:
    """Axis-aligned path a -> b changing one coordinate at a time, ascending order."""
    a, b = as_vector(a), as_vector(b, np.size(a))
    corners = [a]
    for i in range(a.size):
        c = corners[-1].copy()
        c[i] = b[i]
        corners.append(c)
    return [LinearPath(p, q) for p, q in zip(corners, corners[1:])]


def path_eval(p: LinearPath, t: float) -> tuple[Vector, Vector]:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"path parameter t={t} outside [0, 1]")
    return p.points(np.array([t]))[0], p.velocity


@dataclass
class IntegrationResult:
    value: Vector
    times: np.ndarray
    weights: np.ndarray
    evals: int
    error_estimate: float = 0.0


def _integrand(field_fn, path: LinearPath, ts: np.ndarray) -> np.ndarray:
    pts = path.points(ts)
    batch = getattr(field_fn, "batch", None)
    if batch is not None:
        mats = batch(pts)
    else:
        mats = np.stack([np.asarray(field_fn(x), dtype=np.float64) for x in pts])
    if mats.ndim != 3 or mats.shape[2] != path.a.size:
        raise DimensionError(f"field returned shape {mats.shape[1:]}, expected (d_out, {path.a.size})")
    return mats @ path.velocity


def rk4_nodes(steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Node times and weights of ``steps`` RK4 steps on a t-only integrand."""
    h = 1.0 / steps
    times = np.arange(2 * steps + 1) / (2 * steps)
    weights = np.empty(2 * steps + 1)
    weights[0::2] = h / 3.0
    weights[1::2] = 2.0 * h / 3.0
    weights[0] = weights[-1] = h / 6.0
    return times, weights


def _step_factor(err_norm: float, rejected: bool) -> float:
    grow = MAX_FACTOR if not rejected else 1.0
    if err_norm == 0.0:
        return grow
    return min(grow, max(MIN_FACTOR, SAFETY * err_norm ** -0.2))


def line_integrate(field_fn: Callable, p: LinearPath, cfg: IntegratorConfig) -> IntegrationResult:
    """Approximate ``int_0^1 field_fn(r(t)) @ r'(t) dt`` along ``p``.

    ``field_fn`` maps a point to a ``d_out x d_in`` matrix. Objects exposing
    ``batch(points) -> (N, d_out, d_in)`` (such as ``JacobianField``) are
    evaluated one batch at a time.
    """
    if cfg.scheme == "rk4_fixed":
        times, weights = rk4_nodes(cfg.steps)
        k = _integrand(field_fn, p, times)
        return IntegrationResult(weights @ k, times, weights, evals=times.size)

    t, h = 0.0, INITIAL_STEP
    k_left = _integrand(field_fn, p, np.zeros(1))[0]
    y = np.zeros_like(k_left)
    evals, attempts, err_norm = 1, 0, 0.0
    times, weights = [], []
    while t < 1.0:
        if attempts >= cfg.max_steps:
            raise IntegrationError(
                f"rk45 did not reach t=1 within {cfg.max_steps} steps (t={t:.6g})", y, t, err_norm)
        if h < MIN_STEP:
            raise IntegrationError(f"rk45 step size underflow at t={t:.6g}", y, t, err_norm)
        attempts += 1
        last = h >= 1.0 - t
        if last:
            h = 1.0 - t
        t_new = 1.0 if last else t + h
        stage_t = t + QUAD_C[1:] * h
        stage_t[-1] = t_new
        ks = np.vstack([k_left[None], _integrand(field_fn, p, stage_t)])
        evals += stage_t.size
        inc = h * (QUAD_B5 @ ks)
        err = h * (QUAD_E @ ks)
        y_new = y + inc
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err) / scale)) if err.size else 0.0
        if err_norm <= 1.0:
            times.extend([t, *stage_t])
            weights.extend(h * QUAD_B5)
            y, t, k_left = y_new, t_new, ks[-1]
            h *= _step_factor(err_norm, rejected=False)
        else:
            h *= _step_factor(err_norm, rejected=True)
    return IntegrationResult(y, np.array(times), np.array(weights), evals, err_norm)


def grad_from_nodes(field: JacobianField, p: LinearPath, result: IntegrationResult, upstream: Vector) -> Vector:
    """Parameter gradient of ``<upstream, result.value>`` with the nodes held fixed."""
    upstream = as_vector(upstream, field.d_out)
    if result.times.size == 0:
        return np.zeros(field.n_params)
    pts = p.points(result.times)
    per_node = np.outer(upstream, p.velocity)
    return batch_param_grad(field, pts, result.weights[:, None, None] * per_node)


def line_integrate_grad(field: JacobianField, p: LinearPath, cfg: IntegratorConfig, upstream: Vector) -> Vector:
    result = line_integrate(field, p, cfg)
    return grad_from_nodes(field, p, result, upstream)


def solve_ivp(rhs: Callable[[float, Vector], Vector], state0: Vector, cfg: IntegratorConfig) -> Vector:
    """State at t=1 of ``y' = rhs(t, y)``, ``y(0) = state0``."""
    y = as_vector(state0).copy()

    def f(t, s):
        return np.asarray(rhs(t, s), dtype=np.float64)

    if cfg.scheme == "rk4_fixed":
        h = 1.0 / cfg.steps
        for i in range(cfg.steps):
            t = i * h
            k1 = f(t, y)
            k2 = f(t + h / 2, y + h / 2 * k1)
            k3 = f(t + h / 2, y + h / 2 * k2)
            k4 = f(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return y

    t, h = 0.0, INITIAL_STEP
    k_first = f(0.0, y)
    attempts, err_norm = 0, 0.0
    while t < 1.0:
        if attempts >= cfg.max_steps:
            raise IntegrationError(
                f"rk45 did not reach t=1 within {cfg.max_steps} steps (t={t:.6g})", y, t, err_norm)
        if h < MIN_STEP:
            raise IntegrationError(f"rk45 step size underflow at t={t:.6g}", y, t, err_norm)
        attempts += 1
        last = h >= 1.0 - t
        if last:
            h = 1.0 - t
        t_new = 1.0 if last else t + h
        ks = [k_first]
        for i in range(1, 7):
            yi = y + h * sum(a * k for a, k in zip(DP_A[i], ks))
            ks.append(f(t_new if DP_C[i] == 1.0 else t + DP_C[i] * h, yi))
        ks = np.vstack(ks)
        y_new = y + h * (DP_B5 @ ks)
        err = h * (DP_E @ ks)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.max(np.abs(err) / scale))
        if not np.all(np.isfinite(y_new)):
            err_norm = np.inf
        if err_norm <= 1.0:
            y, t, k_first = y_new, t_new, ks[6]
            h *= _step_factor(err_norm, rejected=False)
        else:
            h *= _step_factor(err_norm, rejected=True)
    return y
