"""Command-line harness for the 1-D experiments.

    jacnet train CONFIG.json [--set key=value ...] [--out DIR]
    jacnet eval RUN_DIR/params.json [--n N --lo LO --hi HI]
    jacnet invert RUN_DIR/params.json [--n N --lo LO --hi HI]
    jacnet diagnose [--params PARAMS]
    jacnet gradcheck [--instances N --seed S]

Exit codes: 0 success, 1 validation failure, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checks import ACTIVATIONS, check_line_integral_grads, diagnostic_examples, FD_STEP
from .field import ActivationSpec, init_field, load_field, save_field
from .integrate import IntegrationError, IntegratorConfig, SCHEMES
from .linalg import SingularMatrixError
from .model import conservativity_diagnostic, invert, make_model, predict
from .train import INVERSE_TARGETS, TARGETS, TrainConfig, mean_l1, sample_dataset, train, write_history_csv

GRADCHECK_TOL = 1e-5
CONSERVATIVE_TOL = 1e-8
ROTATIONAL_GAP, ROTATIONAL_TOL = 1.0, 1e-6


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    target: str = "exp"
    activation: str = "spd"
    epsilon: float = 1e-4
    k: float = 1.0
    hidden: int = 64
    seed: int = 0
    n_train: int = 5
    train_interval: tuple = (-1.0, 1.0)
    n_test: int = 100
    test_interval: tuple = (-2.0, 2.0)
    x0: float = 0.0
    y0: float | None = None  # None: the target's value at x0
    lr: float = 0.01
    iterations: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    tol_init: float = 1e-1
    tol_factor: float = 0.5
    tol_floor: float = 1e-8
    scheme: str = "rk45_adaptive"
    max_steps: int = 10_000
    eval_tol: float = 1e-8
    output_dir: str = "run"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["train_interval"] = list(self.train_interval)
        d["test_interval"] = list(self.test_interval)
        return d

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.type == "int" and (isinstance(v, bool) or not isinstance(v, int)):
                raise ConfigError(f"{f.name} must be an integer, got {v!r}")
            if f.type == "float" and (isinstance(v, bool) or not isinstance(v, (int, float))):
                raise ConfigError(f"{f.name} must be a number, got {v!r}")
        if self.y0 is not None and (isinstance(self.y0, bool) or not isinstance(self.y0, (int, float))):
            raise ConfigError(f"y0 must be a number or null, got {self.y0!r}")
        if self.target not in TARGETS:
            raise ConfigError(f"target must be one of {sorted(TARGETS)}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        for name in ("train_interval", "test_interval"):
            iv = getattr(self, name)
            if (not isinstance(iv, (list, tuple)) or len(iv) != 2
                    or not all(isinstance(v, (int, float)) for v in iv) or not iv[0] <= iv[1]):
                raise ConfigError(f"{name} must be [lo, hi] with lo <= hi")
        for name in ("hidden", "n_train", "n_test", "max_steps"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if not self.eval_tol > 0:
            raise ConfigError("eval_tol must be positive")
        try:
            self.activation_spec()
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def anchor(self) -> tuple[float, float]:
        y0 = float(TARGETS[self.target](np.float64(self.x0))) if self.y0 is None else float(self.y0)
        return float(self.x0), y0

    def activation_spec(self) -> ActivationSpec:
        return ActivationSpec(self.activation, epsilon=self.epsilon, k=self.k)

    def integrator(self, tol: float) -> IntegratorConfig:
        return IntegratorConfig(scheme=self.scheme, max_steps=self.max_steps).with_tolerance(tol)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, iterations=self.iterations, beta1=self.beta1, beta2=self.beta2,
                           eps_adam=self.eps_adam, tol_init=self.tol_init, tol_factor=self.tol_factor,
                           tol_floor=self.tol_floor,
                           integrator=IntegratorConfig(scheme=self.scheme, max_steps=self.max_steps))


def _parse_override(item: str) -> tuple[str, object]:
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    for item in overrides:
        key, value = _parse_override(item)
        if isinstance(value, (dict, list)):
            raise ConfigError(f"--set only overrides scalar fields, got {key}={value!r}")
        data[key] = value
    try:
        return ExperimentConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _max_slope(xs: np.ndarray, ys: np.ndarray) -> float:
    dx = np.abs(xs[:, None] - xs[None, :])
    dy = np.abs(ys[:, None] - ys[None, :])
    mask = dx > 0
    return float(np.max(dy[mask] / dx[mask])) if mask.any() else 0.0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set or ())
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    x0, y0 = cfg.anchor()
    start = time.perf_counter()

    field0 = init_field(1, 1, cfg.hidden, cfg.activation_spec(), cfg.seed)
    model0 = make_model(field0, [x0], [y0], cfg.integrator(cfg.eval_tol))
    data = sample_dataset(cfg.target, cfg.n_train, cfg.train_interval, cfg.seed)
    test = sample_dataset(cfg.target, cfg.n_test, cfg.test_interval, cfg.seed + 1)

    model, state = train(data, model0, cfg.train_config())
    wall = time.perf_counter() - start

    save_field(field0, out / "params_init.json")
    save_field(model.field, out / "params.json")
    write_history_csv(state.history, out / "history.csv")

    grid = np.linspace(*cfg.test_interval, cfg.n_test)
    preds = np.array([predict(model, [x])[0] for x in grid])
    checks = {}
    if cfg.activation == "scaled_tanh":
        slope = _max_slope(grid, preds)
        checks = {"max_slope": slope, "lipschitz_ok": bool(slope <= cfg.k + 1e-6)}
    elif cfg.activation == "spd":
        checks = {"monotone_ok": bool(np.all(np.diff(preds) > 0))}

    meta = {
        "config": cfg.to_dict(),
        "x0": x0,
        "y0": y0,
        "initial_train_loss": mean_l1(model0, data.xs, data.ys),
        "final_train_loss": state.final_loss if state.final_loss is not None else mean_l1(model0, data.xs, data.ys),
        "test_loss": mean_l1(model, test.xs, test.ys),
        "anneal_count": state.anneal_count,
        "final_tolerance": state.current_tol,
        "field_evals": sum(r.field_evals for r in state.history),
        "checks": checks,
        "wall_time": wall,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    print(f"final_train_loss={meta['final_train_loss']:.6g} test_loss={meta['test_loss']:.6g} "
          f"anneals={state.anneal_count} -> {out}")
    return 0


def _load_run(params_path: str):
    path = Path(params_path)
    try:
        field = load_field(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot load params {path}: {exc}") from exc
    meta_path = path.parent / "meta.json"
    if meta_path.exists():
        try:
            cfg = ExperimentConfig.from_dict(json.loads(meta_path.read_text())["config"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot read {meta_path}: {exc}") from exc
    else:
        cfg = ExperimentConfig(activation=field.activation.kind)
    x0, y0 = cfg.anchor()
    return make_model(field, [x0], [y0], cfg.integrator(cfg.eval_tol)), cfg, path.parent


def cmd_eval(args) -> int:
    model, cfg, run_dir = _load_run(args.params)
    lo = cfg.test_interval[0] if args.lo is None else args.lo
    hi = cfg.test_interval[1] if args.hi is None else args.hi
    n = cfg.n_test if args.n is None else args.n
    grid = np.linspace(lo, hi, n) if n > 1 else np.array([lo])
    target = TARGETS[cfg.target]
    rows = [(x, float(target(np.float64(x))), predict(model, [x])[0]) for x in grid]
    out = Path(args.out) if args.out else run_dir / "eval.csv"
    _write_csv(out, ["x", "y_target", "y_pred"], rows)
    print(f"wrote {len(rows)} rows -> {out}")
    return 0


def cmd_invert(args) -> int:
    model, cfg, run_dir = _load_run(args.params)
    if model.field.activation.kind != "spd":
        raise ConfigError(f"invert needs an spd-activated model, got {model.field.activation.kind!r}")
    target = TARGETS[cfg.target]
    lo = float(target(np.float64(cfg.train_interval[0]))) if args.lo is None else args.lo
    hi = float(target(np.float64(cfg.train_interval[1]))) if args.hi is None else args.hi
    n = 21 if args.n is None else args.n
    grid = np.linspace(lo, hi, n) if n > 1 else np.array([lo])
    inverse = INVERSE_TARGETS.get(cfg.target)
    rows = []
    for y in grid:
        x_true = float(inverse(np.float64(y))) if inverse is not None and y > 0 else float("nan")
        rows.append((y, x_true, invert(model, [y])[0]))
    out = Path(args.out) if args.out else run_dir / "invert.csv"
    _write_csv(out, ["y", "x_true", "x_pred"], rows)
    print(f"wrote {len(rows)} rows -> {out}")
    return 0


def cmd_diagnose(args) -> int:
    results = diagnostic_examples()
    failures = []
    print(f"gradient field discrepancy   {results['gradient']:.3e} (limit {CONSERVATIVE_TOL:g})")
    if not results["gradient"] <= CONSERVATIVE_TOL:
        failures.append("gradient")
    print(f"rotational field discrepancy {results['rotational']:.12f} (expected {ROTATIONAL_GAP} +- {ROTATIONAL_TOL:g})")
    if not abs(results["rotational"] - ROTATIONAL_GAP) <= ROTATIONAL_TOL:
        failures.append("rotational")
    if args.params:
        model, cfg, _ = _load_run(args.params)
        if model.field.d_in < 2:
            print("params: 1-D field, every line integral is path independent")
        else:
            a = np.zeros(model.field.d_in)
            gap = conservativity_diagnostic(model.field, a, np.ones_like(a), model.integrator)
            print(f"params discrepancy           {gap:.3e}")
    if failures:
        print("FAILED: " + ", ".join(failures), file=sys.stderr)
        return 1
    return 0


def cmd_gradcheck(args) -> int:
    failures = []
    for kind in ACTIVATIONS:
        report = check_line_integral_grads(kind, instances=args.instances, seed=args.seed)
        print(f"{kind:15s} instances={report.instances} h={FD_STEP:g} max_rel_err={report.max_rel_err:.3e}")
        if not report.max_rel_err < GRADCHECK_TOL:
            failures.append(kind)
    if failures:
        print("FAILED: " + ", ".join(failures), file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jacnet", description="Learn functions through their Jacobian.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scalar config field")
    p.add_argument("--out", help="output directory (default: config output_dir)")
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("eval", cmd_eval, "tabulate predictions on a grid"),
                              ("invert", cmd_invert, "tabulate the learned inverse on a grid")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("params")
        p.add_argument("--n", type=int)
        p.add_argument("--lo", type=float)
        p.add_argument("--hi", type=float)
        p.add_argument("--out")
        p.set_defaults(func=func)

    p = sub.add_parser("diagnose", help="path-dependence checks")
    p.add_argument("--params")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("gradcheck", help="finite-difference checks of the integral gradients")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (IntegrationError, SingularMatrixError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
