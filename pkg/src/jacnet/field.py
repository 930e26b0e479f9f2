"""Learned Jacobian field: a one-hidden-layer tanh MLP with a structured output activation.

The network maps a point ``x`` (``d_in``) to a ``d_out x d_in`` matrix. The
output activation decides which structural guarantee the matrix carries:

* ``identity``       -- none
* ``spd``            -- ``R R^T + eps I``: symmetric, eigenvalues >= eps
* ``scaled_tanh``    -- ``k tanh(R)`` elementwise: every entry in (-k, k)
* ``cauchy_riemann`` -- ``[[a, -b], [b, a]]`` from ``a = R[0,0], b = R[1,0]``

Parameter gradients are computed by hand (reverse mode through the
activation and the MLP). Everything is vectorized over a leading batch of
points so a whole set of quadrature nodes costs one pass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .linalg import DimensionError, Matrix, Vector, as_vector

ACTIVATIONS = ("identity", "spd", "scaled_tanh", "cauchy_riemann")


@dataclass(frozen=True)
class ActivationSpec:
    kind: str = "identity"
    epsilon: float = 1e-4
    k: float = 1.0

    def __post_init__(self):
        if self.kind not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.kind!r}; expected one of {ACTIVATIONS}")
        if self.kind == "spd" and not self.epsilon > 0:
            raise ValueError("spd activation needs epsilon > 0")
        if self.kind == "scaled_tanh" and not self.k > 0:
            raise ValueError("scaled_tanh activation needs k > 0")

    def check_shape(self, d_out: int, d_in: int) -> None:
        if self.kind == "spd" and d_out != d_in:
            raise DimensionError(f"spd activation needs a square Jacobian, got {d_out}x{d_in}")
        if self.kind == "cauchy_riemann" and (d_out, d_in) != (2, 2):
            raise DimensionError(f"cauchy_riemann activation needs a 2x2 Jacobian, got {d_out}x{d_in}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "spd":
            d["epsilon"] = self.epsilon
        if self.kind == "scaled_tanh":
            d["k"] = self.k
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ActivationSpec":
        extra = set(d) - {"kind", "epsilon", "k"}
        if extra:
            raise ValueError(f"unknown activation keys {sorted(extra)}")
        return cls(kind=d["kind"], epsilon=float(d.get("epsilon", 1e-4)), k=float(d.get("k", 1.0)))


@dataclass(frozen=True)
class MlpParams:
    w1: Matrix  # hidden x d_in
    b1: Vector  # hidden
    w2: Matrix  # (d_out*d_in) x hidden
    b2: Vector  # d_out*d_in

    def __post_init__(self):
        hidden, _ = self.w1.shape
        if self.b1.shape != (hidden,) or self.w2.ndim != 2 or self.w2.shape[1] != hidden:
            raise DimensionError("inconsistent MLP parameter shapes")
        if self.b2.shape != (self.w2.shape[0],):
            raise DimensionError("inconsistent MLP parameter shapes")
        for a in (self.w1, self.b1, self.w2, self.b2):
            if not np.all(np.isfinite(a)):
                raise ValueError("MLP parameters must be finite")

    @property
    def size(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def flatten(self) -> Vector:
        # layout: w1 row-major, b1, w2 row-major, b2
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    def unflatten(self, flat: Vector) -> "MlpParams":
        """New params with this instance's shapes and values taken from ``flat``."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.size,):
            raise DimensionError(f"expected {self.size} parameters, got {flat.shape}")
        out, i = [], 0
        for a in (self.w1, self.b1, self.w2, self.b2):
            out.append(flat[i:i + a.size].reshape(a.shape).copy())
            i += a.size
        return MlpParams(*out)


@dataclass(frozen=True)
class JacobianField:
    params: MlpParams
    activation: ActivationSpec
    d_in: int
    d_out: int

    def __post_init__(self):
        if self.params.w1.shape[1] != self.d_in or self.params.b2.size != self.d_out * self.d_in:
            raise DimensionError("parameter shapes do not match d_in/d_out")
        self.activation.check_shape(self.d_out, self.d_in)

    @property
    def hidden(self) -> int:
        return self.params.w1.shape[0]

    @property
    def n_params(self) -> int:
        return self.params.size

    def flat_params(self) -> Vector:
        return self.params.flatten()

    def with_flat_params(self, flat: Vector) -> "JacobianField":
        return JacobianField(self.params.unflatten(flat), self.activation, self.d_in, self.d_out)

    def __call__(self, x: Vector) -> Matrix:
        return eval_field(self, x)

    def batch(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at ``points`` of shape (N, d_in); returns (N, d_out, d_in)."""
        raw, _ = _forward(self, points)
        return _activate(raw, self.activation)

    def to_dict(self) -> dict:
        p = self.params
        return {
            "d_in": self.d_in,
            "d_out": self.d_out,
            "hidden": self.hidden,
            "activation": self.activation.to_dict(),
            "w1": p.w1.tolist(),
            "b1": p.b1.tolist(),
            "w2": p.w2.tolist(),
            "b2": p.b2.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JacobianField":
        expected = {"d_in", "d_out", "hidden", "activation", "w1", "b1", "w2", "b2"}
        if set(d) != expected:
            raise ValueError(f"params must have exactly the keys {sorted(expected)}")
        d_in, d_out, hidden = int(d["d_in"]), int(d["d_out"]), int(d["hidden"])
        params = MlpParams(
            w1=np.array(d["w1"], dtype=np.float64).reshape(hidden, d_in),
            b1=np.array(d["b1"], dtype=np.float64).reshape(hidden),
            w2=np.array(d["w2"], dtype=np.float64).reshape(d_out * d_in, hidden),
            b2=np.array(d["b2"], dtype=np.float64).reshape(d_out * d_in),
        )
        return cls(params, ActivationSpec.from_dict(d["activation"]), d_in, d_out)


@dataclass(frozen=True)
class FixedField:
    """A given, non-learned Jacobian function ``x -> d_out x d_in`` (oracles, diagnostics)."""

    fn: Callable[[Vector], Matrix]
    d_in: int
    d_out: int

    def __call__(self, x: Vector) -> Matrix:
        return np.asarray(self.fn(x), dtype=np.float64).reshape(self.d_out, self.d_in)


def init_field(d_in: int, d_out: int, hidden: int, activation: ActivationSpec, seed: int) -> JacobianField:
    """Glorot-uniform weights, zero biases, from a seeded PRNG."""
    rng = np.random.default_rng(seed)
    n_out = d_out * d_in
    lim1 = math.sqrt(6.0 / (d_in + hidden))
    lim2 = math.sqrt(6.0 / (hidden + n_out))
    params = MlpParams(
        w1=rng.uniform(-lim1, lim1, size=(hidden, d_in)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-lim2, lim2, size=(n_out, hidden)),
        b2=np.zeros(n_out),
    )
    return JacobianField(params, activation, d_in, d_out)


def save_field(field: JacobianField, path) -> None:
    Path(path).write_text(json.dumps(field.to_dict(), indent=1) + "\n")


def load_field(path) -> JacobianField:
    return JacobianField.from_dict(json.loads(Path(path).read_text()))


# -- forward -----------------------------------------------------------------


def _forward(field: JacobianField, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = field.params
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != field.d_in:
        raise DimensionError(f"expected points of shape (N, {field.d_in}), got {pts.shape}")
    h = np.tanh(pts @ p.w1.T + p.b1)
    raw = (h @ p.w2.T + p.b2).reshape(-1, field.d_out, field.d_in)
    return raw, h


def _activate(raw: np.ndarray, act: ActivationSpec) -> np.ndarray:
    if act.kind == "identity":
        return raw.copy()
    if act.kind == "spd":
        n = raw.shape[-1]
        g = raw @ np.swapaxes(raw, -1, -2)
        # force exact symmetry, BLAS may not give it
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        return g + act.epsilon * np.eye(n)
    if act.kind == "scaled_tanh":
        return act.k * np.tanh(raw)
    a = raw[..., 0, 0]
    b = raw[..., 1, 0]
    out = np.empty_like(raw)
    out[..., 0, 0] = a
    out[..., 0, 1] = -b
    out[..., 1, 0] = b
    out[..., 1, 1] = a
    return out


def _activate_backward(raw: np.ndarray, upstream: np.ndarray, act: ActivationSpec) -> np.ndarray:
    """Pull ``upstream`` (gradient w.r.t. the activated matrix) back to ``raw``."""
    if act.kind == "identity":
        return upstream
    if act.kind == "spd":
        return (upstream + np.swapaxes(upstream, -1, -2)) @ raw
    if act.kind == "scaled_tanh":
        t = np.tanh(raw)
        return upstream * act.k * (1.0 - t * t)
    g = np.zeros_like(raw)
    g[..., 0, 0] = upstream[..., 0, 0] + upstream[..., 1, 1]
    g[..., 1, 0] = upstream[..., 1, 0] - upstream[..., 0, 1]
    return g


def mlp_raw(field: JacobianField, x: Vector) -> Matrix:
    x = as_vector(x, field.d_in)
    raw, _ = _forward(field, x[None, :])
    return raw[0]


def apply_activation(raw: Matrix, act: ActivationSpec) -> Matrix:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {raw.shape}")
    act.check_shape(*raw.shape)
    return _activate(raw, act)


def eval_field(field: JacobianField, x: Vector) -> Matrix:
    x = as_vector(x, field.d_in)
    return field.batch(x[None, :])[0]


def batch_param_grad(field: JacobianField, points: np.ndarray, upstream: np.ndarray) -> Vector:
    """Sum over points of d<upstream_i, field(points_i)>/d(theta), flat layout.

    ``points`` is (N, d_in) and ``upstream`` is (N, d_out, d_in).
    """
    p = field.params
    upstream = np.asarray(upstream, dtype=np.float64)
    raw, h = _forward(field, points)
    if upstream.shape != raw.shape:
        raise DimensionError(f"upstream shape {upstream.shape} does not match {raw.shape}")
    g_raw = _activate_backward(raw, upstream, field.activation).reshape(raw.shape[0], -1)
    g_b2 = g_raw.sum(axis=0)
    g_w2 = g_raw.T @ h
    g_pre = (g_raw @ p.w2) * (1.0 - h * h)
    g_w1 = g_pre.T @ np.asarray(points, dtype=np.float64)
    g_b1 = g_pre.sum(axis=0)
    return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])


def field_param_grad(field: JacobianField, x: Vector, upstream: Matrix) -> Vector:
    x = as_vector(x, field.d_in)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (field.d_out, field.d_in):
        raise DimensionError(f"upstream must be {field.d_out}x{field.d_in}, got {upstream.shape}")
    return batch_param_grad(field, x[None, :], upstream[None])
