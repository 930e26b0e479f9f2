"""Full-batch L1 training with Adam and integrator-tolerance annealing."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, Optional

import numpy as np

from .integrate import IntegratorConfig, grad_from_nodes, linear_path
from .linalg import DimensionError, Vector, as_vector
from .model import JacNetModel, predict, predict_with_nodes

TARGETS: dict[str, Callable[[np.ndarray], np.ndarray]] = {"exp": np.exp, "abs": np.abs}
INVERSE_TARGETS: dict[str, Callable[[np.ndarray], np.ndarray]] = {"exp": np.log}

HISTORY_HEADER = ["iter", "loss", "tolerance", "field_evals"]


@dataclass(frozen=True)
class Dataset:
    xs: np.ndarray  # (n, d_in)
    ys: np.ndarray  # (n, d_out)
    target: str
    interval: tuple[float, float]
    seed: int

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def pairs(self) -> list[tuple[Vector, Vector]]:
        return list(zip(self.xs, self.ys))


def sample_dataset(target: str, n: int, interval, seed: int, fn: Callable | None = None, dim: int = 1) -> Dataset:
    """``n`` points drawn uniformly from ``interval`` (per coordinate), labelled by ``target``.

    ``target`` is ``"exp"``, ``"abs"`` or ``"custom"``; the latter needs ``fn``
    mapping an (n, dim) array to (n, d_out) or (n,).
    """
    lo, hi = map(float, interval)
    if n < 1:
        raise ValueError("need at least one sample")
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    if target == "custom":
        if fn is None:
            raise ValueError("custom target needs a function")
    elif target in TARGETS:
        fn = TARGETS[target]
    else:
        raise ValueError(f"unknown target {target!r}")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(lo, hi, size=(n, dim))
    ys = np.asarray(fn(xs), dtype=np.float64).reshape(n, -1)
    return Dataset(xs, ys, target, (lo, hi), seed)


def l1_loss(y: Vector, yhat: Vector) -> float:
    y, yhat = np.asarray(y, dtype=np.float64), np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise DimensionError(f"loss operands differ in shape: {y.shape} vs {yhat.shape}")
    return float(np.sum(np.abs(y - yhat)))


def risk_and_grad(model: JacNetModel, data: Dataset) -> tuple[float, Vector, int]:
    """Mean L1 loss, its parameter (sub)gradient, and the number of field evaluations."""
    if data.xs.shape[1] != model.field.d_in or data.ys.shape[1] != model.field.d_out:
        raise DimensionError("dataset dimensions do not match the model")
    n = data.n
    loss, evals = 0.0, 0
    grad = np.zeros(model.field.n_params)
    for x, y in data.pairs:
        yhat, result = predict_with_nodes(model, x)
        loss += l1_loss(y, yhat)
        evals += result.evals
        # d|y - yhat|/d yhat = -sign(y - yhat), with sign(0) = 0
        upstream = -np.sign(y - yhat) / n
        if np.any(upstream):
            grad += grad_from_nodes(model.field, linear_path(model.x0, x), result, upstream)
    return loss / n, grad, evals


def empirical_risk_and_grad(model: JacNetModel, data: Dataset) -> tuple[float, Vector]:
    loss, grad, _ = risk_and_grad(model, data)
    return loss, grad


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    iterations: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    tol_init: float = 1e-1
    tol_factor: float = 0.5
    tol_floor: float = 1e-8
    integrator: IntegratorConfig = dc_field(default_factory=IntegratorConfig)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0 < self.tol_factor < 1:
            raise ValueError("tol_factor must lie in (0, 1)")
        if not 0 < self.tol_floor <= self.tol_init:
            raise ValueError("need 0 < tol_floor <= tol_init")


@dataclass(frozen=True)
class HistoryRow:
    iter: int
    loss: float
    tolerance: float
    field_evals: int


@dataclass
class TrainState:
    params: Vector
    adam_m: Vector
    adam_v: Vector
    iter: int
    current_tol: float
    history: list[HistoryRow] = dc_field(default_factory=list)
    final_loss: Optional[float] = None
    anneal_count: int = 0

    @classmethod
    def fresh(cls, params: Vector, tol: float) -> "TrainState":
        params = np.array(params, dtype=np.float64)
        return cls(params, np.zeros_like(params), np.zeros_like(params), 0, tol)


def adam_step(state: TrainState, grad: Vector, cfg: TrainConfig) -> TrainState:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.params.shape:
        raise DimensionError("gradient and parameters differ in shape")
    t = state.iter + 1
    m = cfg.beta1 * state.adam_m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.adam_v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1 ** t)
    v_hat = v / (1.0 - cfg.beta2 ** t)
    params = state.params - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps_adam)
    return replace(state, params=params, adam_m=m, adam_v=v, iter=t)


def train(data: Dataset, model0: JacNetModel, cfg: TrainConfig,
          callback: Callable[[int, JacNetModel], None] | None = None) -> tuple[JacNetModel, TrainState]:
    """Run ``cfg.iterations`` full-batch Adam steps.

    Each iteration evaluates the loss with the integrator at the current
    tolerance; when that loss is below the tolerance the tolerance is
    multiplied by ``tol_factor`` (never below ``tol_floor``). ``callback``
    sees every model whose loss is logged, before its update.
    """
    state = TrainState.fresh(model0.field.flat_params(), cfg.tol_init)
    field = model0.field
    for _ in range(cfg.iterations):
        tol = state.current_tol
        model = model0.with_field(field).with_integrator(cfg.integrator.with_tolerance(tol))
        if callback is not None:
            callback(state.iter, model)
        loss, grad, evals = risk_and_grad(model, data)
        state.history.append(HistoryRow(state.iter, loss, tol, evals))
        state = adam_step(state, grad, cfg)
        if loss < tol and tol > cfg.tol_floor:
            state.current_tol = max(tol * cfg.tol_factor, cfg.tol_floor)
            state.anneal_count += 1
        field = field.with_flat_params(state.params)

    final = model0.with_field(field)
    if cfg.iterations:
        model = final.with_integrator(cfg.integrator.with_tolerance(state.current_tol))
        if callback is not None:
            callback(state.iter, model)
        state.final_loss, _, _ = risk_and_grad(model, data)
    return final, state


def mean_l1(model: JacNetModel, xs, ys) -> float:
    return float(np.mean([l1_loss(y, predict(model, as_vector(x))) for x, y in zip(xs, ys)]))


def write_history_csv(history: list[HistoryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for row in history:
            w.writerow([row.iter, f"{row.loss:.17g}", f"{row.tolerance:.17g}", row.field_evals])
