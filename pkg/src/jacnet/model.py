"""Prediction by integrating the learned Jacobian, its inverse, and path diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .field import FixedField, JacobianField
from .integrate import (
    IntegrationResult,
    IntegratorConfig,
    grad_from_nodes,
    line_integrate,
    linear_path,
    solve_ivp,
    staircase_path,
)
from .linalg import DimensionError, Vector, as_vector, lu_inverse, matvec


@dataclass(frozen=True)
class JacNetModel:
    """A Jacobian field anchored at the initial condition ``(x0, y0)``."""

    field: JacobianField | FixedField
    x0: Vector
    y0: Vector
    integrator: IntegratorConfig = dc_field(default_factory=IntegratorConfig)

    def __post_init__(self):
        if self.x0.shape != (self.field.d_in,) or self.y0.shape != (self.field.d_out,):
            raise DimensionError("anchor dimensions do not match the field")

    def with_field(self, field: JacobianField | FixedField) -> "JacNetModel":
        return replace(self, field=field)

    def with_integrator(self, integrator: IntegratorConfig) -> "JacNetModel":
        return replace(self, integrator=integrator)


def make_model(field: JacobianField | FixedField, x0, y0, integrator: IntegratorConfig | None = None) -> JacNetModel:
    return JacNetModel(field, as_vector(x0, field.d_in), as_vector(y0, field.d_out),
                       integrator or IntegratorConfig())


def predict_with_nodes(m: JacNetModel, x: Vector) -> tuple[Vector, IntegrationResult]:
    x = as_vector(x, m.field.d_in)
    result = line_integrate(m.field, linear_path(m.x0, x), m.integrator)
    return m.y0 + result.value, result


def predict(m: JacNetModel, x: Vector) -> Vector:
    return predict_with_nodes(m, x)[0]


def predict_grad(m: JacNetModel, x: Vector, upstream: Vector) -> Vector:
    """Gradient of ``<upstream, predict(m, x)>`` w.r.t. the flat field parameters."""
    x = as_vector(x, m.field.d_in)
    path = linear_path(m.x0, x)
    result = line_integrate(m.field, path, m.integrator)
    return grad_from_nodes(m.field, path, result, upstream)


def invert(m: JacNetModel, y: Vector) -> Vector:
    """Preimage of ``y``: integrate ``x' = J(x)^-1 (y - y0)`` from ``x0`` over t in [0, 1].

    The Jacobian is evaluated at the running preimage ``x(t)``, so along the
    trajectory ``predict(x(t))`` follows the straight segment y0 -> y.
    """
    f = m.field
    if f.d_in != f.d_out:
        raise DimensionError("invert needs a square Jacobian (d_in == d_out)")
    y = as_vector(y, f.d_out)
    velocity = y - m.y0

    def rhs(t, x):
        return matvec(lu_inverse(f(x)), velocity)

    return solve_ivp(rhs, m.x0, m.integrator)


def round_trip_error(m: JacNetModel, xs) -> float:
    """Max over ``xs`` of ``|invert(predict(x)) - x|_inf``."""
    worst = 0.0
    for x in xs:
        x = as_vector(x, m.field.d_in)
        worst = max(worst, float(np.max(np.abs(invert(m, predict(m, x)) - x))))
    return worst


def conservativity_diagnostic(field_fn, a, b, cfg: IntegratorConfig) -> float:
    """``|I_linear - I_staircase|_inf`` between the straight and axis-aligned paths a -> b.

    Zero (to quadrature accuracy) for a gradient field; a nonzero value means
    the learned field has circulation and predictions depend on the path.
    """
    a = as_vector(a)
    b = as_vector(b, a.size)
    if a.size < 2:
        raise DimensionError("conservativity diagnostic needs dim >= 2")
    straight = line_integrate(field_fn, linear_path(a, b), cfg).value
    stairs = sum(line_integrate(field_fn, seg, cfg).value for seg in staircase_path(a, b))
    return float(np.max(np.abs(straight - stairs)))
