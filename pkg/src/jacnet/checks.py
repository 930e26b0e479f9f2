"""Finite-difference gradient checks and the path-dependence examples.

The finite-difference routines only ever call forward evaluations, so they
stay independent of the hand-written reverse pass they are used to check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import ACTIVATIONS, ActivationSpec, FixedField, JacobianField, MlpParams
from .integrate import IntegratorConfig, LinearPath, line_integrate, line_integrate_grad
from .model import conservativity_diagnostic

FD_STEP = 1e-5

# (d_in, d_out) used for each activation in the random suites
CHECK_DIMS = {"identity": (2, 3), "spd": (2, 2), "scaled_tanh": (2, 2), "cauchy_riemann": (2, 2)}


def central_difference(fn, theta: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Gradient of the scalar ``fn`` at ``theta`` by central differences."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (fn(up) - fn(down)) / (2.0 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """``|a - b|_inf / max(|a|_inf, |b|_inf)``; 0 when both vanish."""
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - b))) / scale


def random_field(kind: str, rng: np.random.Generator, hidden: int = 6) -> JacobianField:
    d_in, d_out = CHECK_DIMS[kind]
    n_out = d_in * d_out
    params = MlpParams(
        w1=rng.normal(0.0, 0.8, (hidden, d_in)),
        b1=rng.normal(0.0, 0.5, hidden),
        w2=rng.normal(0.0, 0.8, (n_out, hidden)),
        b2=rng.normal(0.0, 0.5, n_out),
    )
    k = float(rng.uniform(0.5, 2.0))
    act = ActivationSpec(kind, k=k) if kind == "scaled_tanh" else ActivationSpec(kind)
    return JacobianField(params, act, d_in, d_out)


@dataclass
class GradCheckReport:
    kind: str
    instances: int
    max_rel_err: float


def check_line_integral_grads(kind: str, instances: int = 50, seed: int = 0,
                              cfg: IntegratorConfig | None = None) -> GradCheckReport:
    """Compare line_integrate_grad against central differences on random instances."""
    cfg = cfg or IntegratorConfig(scheme="rk4_fixed", steps=32)
    rng = np.random.default_rng([seed, ACTIVATIONS.index(kind)])
    worst = 0.0
    for _ in range(instances):
        field = random_field(kind, rng)
        path = LinearPath(rng.normal(size=field.d_in), rng.normal(size=field.d_in))
        upstream = rng.normal(size=field.d_out)
        analytic = line_integrate_grad(field, path, cfg, upstream)

        def objective(theta):
            return float(upstream @ line_integrate(field.with_flat_params(theta), path, cfg).value)

        numeric = central_difference(objective, field.flat_params())
        worst = max(worst, relative_error(analytic, numeric))
    return GradCheckReport(kind, instances, worst)


def gradient_field() -> FixedField:
    """Gradient of |x|^2 on R^2, as a 1x2 Jacobian."""
    return FixedField(lambda x: 2.0 * np.asarray(x)[None, :], d_in=2, d_out=1)


def rotational_field() -> FixedField:
    """Rows (-y, x): circulation 1 around the unit square's lower-right half."""
    return FixedField(lambda x: np.array([[-x[1], x[0]]]), d_in=2, d_out=1)


def diagnostic_examples(cfg: IntegratorConfig | None = None) -> dict[str, float]:
    cfg = cfg or IntegratorConfig(scheme="rk4_fixed", steps=16)
    a, b = np.zeros(2), np.ones(2)
    return {
        "gradient": conservativity_diagnostic(gradient_field(), a, b, cfg),
        "rotational": conservativity_diagnostic(rotational_field(), a, b, cfg),
    }
