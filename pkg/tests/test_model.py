import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jacnet.checks import central_difference, gradient_field, random_field, relative_error, rotational_field
from jacnet.field import ActivationSpec, FixedField, JacobianField, init_field
from jacnet.integrate import IntegratorConfig
from jacnet.linalg import DimensionError, SingularMatrixError
from jacnet.model import (
    conservativity_diagnostic,
    invert,
    make_model,
    predict,
    predict_grad,
    round_trip_error,
)
from test_field import bias_field, zero_field

TIGHT = IntegratorConfig(rtol=1e-10, atol=1e-10)
EVAL = IntegratorConfig(rtol=1e-8, atol=1e-8)
EXP_FIELD = FixedField(lambda x: np.exp(x).reshape(1, 1), 1, 1)


def scaled_field(kind, seed, scale, hidden=16):
    """1-D field with Glorot weights blown up by ``scale`` and random biases."""
    f = init_field(1, 1, hidden, ActivationSpec(kind), seed)
    rng = np.random.default_rng(seed)
    flat = f.flat_params() * scale
    flat[hidden:2 * hidden] = rng.normal(0, scale, hidden)
    flat[-1] = rng.normal(0, scale)
    return f.with_flat_params(flat)


def test_predict_at_anchor_is_exact():
    m = make_model(random_field("identity", np.random.default_rng(0)), [0.3, -0.1], [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(predict(m, [0.3, -0.1]), [1.0, 2.0, 3.0])


def test_predict_constant_field_is_linear():
    m = make_model(bias_field([3.0]), [0.0], [1.0], TIGHT)
    assert predict(m, [2.0])[0] == pytest.approx(7.0, abs=1e-12)


def test_predict_exp_oracle_field():
    m = make_model(EXP_FIELD, [0.0], [1.0], TIGHT)
    assert predict(m, [1.0])[0] == pytest.approx(math.e, abs=1e-8)


def test_predict_dimension_error():
    m = make_model(bias_field([3.0]), [0.0], [1.0])
    with pytest.raises(DimensionError):
        predict(m, [1.0, 2.0])


def test_predict_grad_zero_cases():
    f = random_field("spd", np.random.default_rng(1))
    m = make_model(f, [0.5, 0.5], [0.0, 0.0], TIGHT)
    assert not predict_grad(m, [0.5, 0.5], np.array([1.0, -1.0])).any()
    assert not predict_grad(m, [1.5, -0.5], np.zeros(2)).any()


@pytest.mark.parametrize("kind", ["identity", "spd", "scaled_tanh", "cauchy_riemann"])
def test_predict_grad_matches_finite_differences(kind):
    rng = np.random.default_rng(20)
    cfg = IntegratorConfig(scheme="rk4_fixed", steps=32)
    for _ in range(5):
        f = random_field(kind, rng)
        m = make_model(f, rng.normal(size=f.d_in), rng.normal(size=f.d_out), cfg)
        x, u = rng.normal(size=f.d_in), rng.normal(size=f.d_out)
        numeric = central_difference(lambda th: float(u @ predict(m.with_field(f.with_flat_params(th)), x)),
                                     f.flat_params())
        assert relative_error(predict_grad(m, x, u), numeric) < 1e-5


def test_invert_at_anchor_is_exact():
    m = make_model(random_field("spd", np.random.default_rng(2)), [0.1, 0.2], [3.0, 4.0], EVAL)
    np.testing.assert_array_equal(invert(m, [3.0, 4.0]), [0.1, 0.2])


def test_invert_constant_field():
    m = make_model(bias_field([math.sqrt(2.0)], act=ActivationSpec("spd", epsilon=1e-300)), [0.0], [0.0], EVAL)
    # raw sqrt(2) -> Jacobian 2 (+ negligible epsilon)
    assert invert(m, [4.0])[0] == pytest.approx(2.0, abs=1e-12)
    m = make_model(bias_field([2.0]), [0.0], [0.0], EVAL)
    assert invert(m, [4.0])[0] == pytest.approx(2.0, abs=1e-12)


def _fine_rk4_inverse_oracle(y, steps=10_000):
    # x' = (y - 1) / exp(x), x(0) = 0, integrated by a plain RK4 loop
    x, h, v = 0.0, 1.0 / steps, y - 1.0
    f = lambda s: v / math.exp(s)  # noqa: E731
    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + h / 2 * k1)
        k3 = f(x + h / 2 * k2)
        k4 = f(x + h * k3)
        x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def test_invert_exp_oracle_field():
    m = make_model(EXP_FIELD, [0.0], [1.0], EVAL)
    assert _fine_rk4_inverse_oracle(math.e) == pytest.approx(1.0, abs=1e-12)
    assert invert(m, [math.e])[0] == pytest.approx(1.0, abs=1e-6)
    for y in (0.2, 0.5, 2.0, 5.0):
        assert invert(m, [y])[0] == pytest.approx(_fine_rk4_inverse_oracle(y), abs=1e-6)
        assert invert(m, [y])[0] == pytest.approx(math.log(y), abs=1e-6)


def test_invert_needs_square_jacobian():
    m = make_model(random_field("identity", np.random.default_rng(0)), [0.0, 0.0], [0.0, 0.0, 0.0])
    with pytest.raises(DimensionError):
        invert(m, [1.0, 1.0, 1.0])


def test_invert_singular_jacobian():
    m = make_model(zero_field(), [0.0], [0.0], EVAL)
    with pytest.raises(SingularMatrixError):
        invert(m, [1.0])


def test_invert_multidimensional_round_trip_conservative_field():
    # J = diag(exp(x)) is the Jacobian of exp applied componentwise
    f = FixedField(lambda x: np.diag(np.exp(x)), 2, 2)
    m = make_model(f, [0.0, 0.0], [1.0, 1.0], TIGHT)
    x = np.array([0.4, -0.3])
    np.testing.assert_allclose(predict(m, x), np.exp(x), atol=1e-9)
    np.testing.assert_allclose(invert(m, np.exp(x)), x, atol=1e-8)


def test_invert_non_conservative_field_lands_elsewhere():
    # an spd field on R^2 is generally not a gradient, so predict is not its antiderivative
    f = random_field("spd", np.random.default_rng(12))
    m = make_model(f, [0.0, 0.0], [0.0, 0.0], TIGHT)
    x = np.array([0.4, -0.3])
    assert conservativity_diagnostic(f, [0.0, 0.0], x, TIGHT) > 1e-3
    assert np.max(np.abs(invert(m, predict(m, x)) - x)) > 1e-3


def test_round_trip_examples():
    m = make_model(random_field("spd", np.random.default_rng(3)), [0.2, 0.1], [0.0, 1.0], EVAL)
    assert round_trip_error(m, [[0.2, 0.1]]) <= 1e-12
    m = make_model(bias_field([2.0]), [0.0], [0.0], EVAL)
    assert round_trip_error(m, [[-1.0], [0.0], [1.0]]) <= 1e-9


def test_conservativity_examples():
    cfg = IntegratorConfig(scheme="rk4_fixed", steps=16)
    a, b = [0.0, 0.0], [1.0, 1.0]
    assert conservativity_diagnostic(gradient_field(), a, b, cfg) <= 1e-8
    assert conservativity_diagnostic(rotational_field(), a, b, cfg) == pytest.approx(1.0, abs=1e-6)
    assert conservativity_diagnostic(FixedField(lambda x: np.zeros((1, 2)), 2, 1), a, b, cfg) == 0.0


def test_conservativity_rotational_adaptive():
    gap = conservativity_diagnostic(rotational_field(), [0.0, 0.0], [1.0, 1.0], TIGHT)
    assert gap == pytest.approx(1.0, abs=1e-6)


def test_conservativity_needs_two_dims():
    with pytest.raises(DimensionError):
        conservativity_diagnostic(EXP_FIELD, [0.0], [1.0], TIGHT)


def test_learned_field_is_generally_not_conservative():
    f = random_field("identity", np.random.default_rng(5))
    # a 3x2 field: each output row is a vector field on R^2
    assert conservativity_diagnostic(f, [0.0, 0.0], [1.0, 1.0], TIGHT) > 1e-4


seeds = st.integers(0, 2**32 - 1)
scales = st.sampled_from([0.5, 1.0, 3.0])


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from(["identity", "spd", "scaled_tanh", "cauchy_riemann"]),
       st.sampled_from([IntegratorConfig(scheme="rk4_fixed", steps=3), EVAL]))
def test_predict_at_anchor_any_configuration(seed, kind, cfg):
    rng = np.random.default_rng(seed)
    f = random_field(kind, rng)
    x0, y0 = rng.normal(size=f.d_in), rng.normal(size=f.d_out)
    np.testing.assert_array_equal(predict(make_model(f, x0, y0, cfg), x0), y0)


@settings(max_examples=30, deadline=None)
@given(seeds, scales, st.lists(st.floats(-3, 3), min_size=2, max_size=2, unique=True))
def test_spd_1d_is_monotone_with_slope_at_least_epsilon(seed, scale, pair):
    eps = 1e-4
    m = make_model(scaled_field("spd", seed, scale), [0.0], [0.5], EVAL)
    x1, x2 = sorted(pair)
    assert predict(m, [x1])[0] + eps * (x2 - x1) * (1 - 1e-6) <= predict(m, [x2])[0]


@settings(max_examples=30, deadline=None)
@given(seeds, scales, st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_scaled_tanh_is_k_lipschitz(seed, scale, pair):
    m = make_model(scaled_field("scaled_tanh", seed, scale), [0.0], [0.0], EVAL)
    x1, x2 = pair
    gap = abs(predict(m, [x1])[0] - predict(m, [x2])[0])
    assert gap <= 1.0 * abs(x1 - x2) + 2 * EVAL.tolerance(1.0)


@pytest.mark.parametrize("scale", [0.5, 1.0, 3.0])
@pytest.mark.parametrize("seed", range(20))
def test_spd_1d_inverse_consistent_for_any_parameters(seed, scale):
    m = make_model(scaled_field("spd", seed, scale), [0.0], [1.0], EVAL)
    combined = 2 * (EVAL.atol + EVAL.rtol)
    err = round_trip_error(m, np.linspace(-1, 1, 21)[:, None])
    assert err <= 10 * combined, f"round trip {err:.2e} > {10 * combined:.0e}"

