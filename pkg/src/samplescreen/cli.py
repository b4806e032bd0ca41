"""Batch front-end: generate, solve, screen, compress, and path commands.

Every command reads its parameters from flags and/or a ``key = value``
config file (flags win), writes JSON/csv reports into ``--out``, and is
bit-reproducible for a fixed ``--seed`` apart from wall-time fields.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (Dataset, Mode, ModelVector, ProblemKind,
                   gen_interval_dataset, gen_synthetic_regression,
                   load_dataset, save_dataset, save_mask, save_model, subset)
from .ellipsoid import build_region, verify_containment
from .erm import ErmProblem, Penalty, solve, subset_problem
from .kernels import gaussian_gram, kernelize
from .losses import LossFamily, SafeLoss
from .screening import (certified_radius, compression_scores,
                        progress_radius, screen, verify_safety)

SCHEMA_VERSION = 1

# (type, default, help); None default means required unless the command
# provides a value another way
_SPECS = {
    "gen": {
        "kind": (str, "regression", "regression | classification | interval"),
        "n": (int, 100, "number of samples"),
        "p": (int, 10, "number of features"),
        "sparsity": (int, 3, "nonzeros in the ground truth"),
        "sigma": (float, 0.01, "label noise standard deviation"),
        "halfwidth": (float, 0.5, "interval half-width (interval kind)"),
        "seed": (int, 0, "rng seed"),
        "out": (str, "out", "output directory"),
    },
    "solve": {
        "data": (str, None, "dataset file"),
        "format": (str, "csv", "csv | libsvm"),
        "kind": (str, "regression", "problem kind"),
        "halfwidth": (float, 0.0, "interval half-width when kind=interval"),
        "loss": (str, "sreg", "loss family"),
        "mu": (float, 0.5, "loss threshold parameter"),
        "penalty": (str, "l2sq", "l1 | l2sq"),
        "lambda": (float, 0.1, "regularization strength"),
        "kernel": (str, "", "empty (linear) | gaussian"),
        "sigma": (float, 1.0, "gaussian kernel bandwidth"),
        "epochs": (int, 1000, "epoch budget"),
        "tol": (float, 1e-7, "duality-gap tolerance"),
        "seed": (int, 0, "rng seed"),
        "out": (str, "out", "output directory"),
    },
    "screen": {
        "data": (str, None, "dataset file"),
        "format": (str, "csv", "csv | libsvm"),
        "kind": (str, "regression", "problem kind"),
        "halfwidth": (float, 0.0, "interval half-width when kind=interval"),
        "loss": (str, "sreg", "loss family"),
        "mu": (float, 0.5, "loss threshold parameter"),
        "penalty": (str, "l2sq", "l1 | l2sq"),
        "lambda": (float, 0.1, "regularization strength"),
        "kernel": (str, "", "empty (linear) | gaussian"),
        "sigma": (float, 1.0, "gaussian kernel bandwidth"),
        "init-epochs": (int, 100, "solver epochs before building the region"),
        "steps": (int, 20, "ellipsoid cuts"),
        "radius": (float, 0.0, "initial ball radius (0 = automatic)"),
        "tol": (float, 1e-7, "verification solve tolerance"),
        "seed": (int, 0, "rng seed"),
        "out": (str, "out", "output directory"),
        "verify": (bool, False, "verify containment and safety a posteriori"),
    },
    "compress": {
        "data": (str, None, "dataset file"),
        "format": (str, "csv", "csv | libsvm"),
        "kind": (str, "regression", "problem kind"),
        "halfwidth": (float, 0.0, "interval half-width when kind=interval"),
        "loss": (str, "sreg", "loss family"),
        "mu": (float, 0.5, "loss threshold parameter"),
        "penalty": (str, "l1", "l1 | l2sq"),
        "lambda": (float, 0.01, "regularization strength"),
        "init-epochs": (int, 200, "solver epochs before scoring"),
        "steps": (int, 20, "ellipsoid cuts"),
        "radius": (float, 0.0, "initial ball radius (0 = automatic)"),
        "tol": (float, 1e-7, "refit tolerance"),
        "test-frac": (float, 0.25, "held-out fraction for the metric"),
        "repeats": (int, 3, "random-deletion repetitions"),
        "seed": (int, 0, "rng seed"),
        "out": (str, "out", "output directory"),
    },
    "path": {
        "data": (str, None, "dataset file"),
        "format": (str, "csv", "csv | libsvm"),
        "kind": (str, "classification", "problem kind"),
        "halfwidth": (float, 0.0, "interval half-width when kind=interval"),
        "loss": (str, "squared_hinge", "loss family"),
        "mu": (float, 0.5, "loss threshold parameter"),
        "penalty": (str, "l2sq", "l1 | l2sq"),
        "lambda-max": (float, 1e-1, "largest path lambda"),
        "lambda-min": (float, 1e-3, "smallest path lambda"),
        "path-points": (int, 10, "number of grid points"),
        "init-epochs": (int, 100, "epochs for the first path point"),
        "steps": (int, 15, "ellipsoid cuts per path point"),
        "epochs": (int, 20000, "epoch cap per fit"),
        "tol": (float, 1e-7, "per-fit duality-gap tolerance"),
        "seed": (int, 0, "rng seed"),
        "out": (str, "out", "output directory"),
    },
}

# sigma and halfwidth are validated where they are used: sigma = 0 is a
# legitimate noiseless generator, and halfwidth only applies to intervals
_POSITIVE = {"n", "p", "sparsity", "mu", "lambda", "epochs", "tol",
             "lambda-max", "lambda-min", "path-points", "test-frac",
             "repeats"}
_NONNEGATIVE = {"sigma", "halfwidth", "init-epochs", "steps", "radius",
                "seed"}


@dataclass(frozen=True)
class RunConfig:
    """Merged command parameters (defaults < config file < flags)."""

    command: str
    params: dict

    def __getitem__(self, key):
        return self.params[key]


def _parse_config_file(path, spec) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in spec:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            typ = spec[key][0]
            values[key] = (value.lower() in ("1", "true", "yes")) \
                if typ is bool else typ(value)
    return values


def make_config(command: str, cli_values: dict,
                config_path: str | None = None) -> RunConfig:
    spec = _SPECS[command]
    params = {k: v for k, (_, v, _) in spec.items()}
    if config_path:
        params.update(_parse_config_file(config_path, spec))
    params.update(cli_values)
    for key, value in params.items():
        if value is None:
            raise ValueError(f"missing required parameter --{key}")
        if key in _POSITIVE and isinstance(value, (int, float)) and value <= 0:
            raise ValueError(f"--{key} must be positive, got {value}")
        if key in _NONNEGATIVE and isinstance(value, (int, float)) and value < 0:
            raise ValueError(f"--{key} must be nonnegative, got {value}")
    return RunConfig(command, params)


def _write_json(payload: dict, path: Path) -> None:
    payload = {"schema": SCHEMA_VERSION, **payload}
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _load_problem(cfg: RunConfig) -> ErmProblem:
    kind = ProblemKind(cfg["kind"])
    halfwidth = cfg["halfwidth"] if kind == ProblemKind.INTERVAL else None
    data = load_dataset(cfg["data"], cfg["format"], kind,
                        interval_halfwidth=halfwidth)
    loss = SafeLoss(LossFamily(cfg["loss"]), cfg["mu"])
    problem = ErmProblem(data, loss, Penalty(cfg["penalty"]), cfg["lambda"])
    if cfg.params.get("kernel"):
        if cfg["kernel"] != "gaussian":
            raise ValueError(f"unknown kernel {cfg['kernel']!r}")
        problem = kernelize(problem, gaussian_gram(data, cfg["sigma"]))
    return problem


def _auto_radius(problem: ErmProblem, x0) -> float:
    if problem.mode == Mode.LINEAR and problem.penalty == Penalty.L2SQ:
        return certified_radius(problem, x0)
    return progress_radius(problem, x0)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen(cfg: RunConfig) -> dict:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    kind = ProblemKind(cfg["kind"])
    truth = None
    if kind == ProblemKind.INTERVAL:
        data = gen_interval_dataset(cfg["n"], cfg["p"], cfg["halfwidth"],
                                    cfg["seed"])
    else:
        data, truth = gen_synthetic_regression(
            cfg["n"], cfg["p"], cfg["sparsity"], cfg["sigma"], cfg["seed"])
        if kind == ProblemKind.CLASSIFICATION:
            labels = np.where(data.labels >= 0, 1.0, -1.0)
            data = Dataset(data.features, labels, kind)
    save_dataset(data, out / "data.csv")
    if truth is not None:
        save_model(truth, out / "model.txt")
    meta = {
        "command": "gen",
        "params": dict(cfg.params),
        "n": data.n,
        "p": data.p,
    }
    _write_json(meta, out / "meta.json")
    return meta


def cmd_solve(cfg: RunConfig) -> dict:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    problem = _load_problem(cfg)
    trace = solve(problem, max_epochs=cfg["epochs"], tol=cfg["tol"])
    save_model(trace.final, out / "model.txt")
    report = {
        "command": "solve",
        "params": dict(cfg.params),
        "converged": trace.converged,
        "epochs": trace.epochs,
        "primal": trace.iterates[-1][1],
        "gap": trace.iterates[-1][2],
        "trace": [[e, obj, gap] for e, obj, gap in trace.iterates],
    }
    _write_json(report, out / "solve.json")
    return report


def cmd_screen(cfg: RunConfig) -> dict:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    problem = _load_problem(cfg)
    start = time.perf_counter()
    init = solve(problem, max_epochs=cfg["init-epochs"], tol=0.0)
    x0 = init.final.coefficients
    radius = cfg["radius"] if cfg["radius"] > 0 else _auto_radius(problem, x0)
    region = build_region(problem, x0, radius, cfg["steps"])
    report = screen(problem, region)
    wall = time.perf_counter() - start
    save_mask(report.mask, out / "mask.txt")
    save_model(init.final, out / "center.txt")
    payload = {
        "command": "screen",
        "params": dict(cfg.params),
        "radius_used": radius,
        "report": report.to_json_dict(),
        "wall_time_s": wall,
    }
    if cfg["verify"]:
        ref = solve(problem, max_epochs=200_000, tol=cfg["tol"])
        contained = verify_containment(region, ref.final.coefficients, 1e-7)
        payload["containment"] = contained
        if contained:
            payload["safety"] = verify_safety(
                problem, report.mask, solver_tol=cfg["tol"],
                check_tol=1e-6, sol_tol=1e-4)
        else:
            payload["safety"] = "unverified"
    _write_json(payload, out / "screen.json")
    return payload


def _split(data: Dataset, test_frac: float, rng) -> tuple[Dataset, Dataset]:
    n = data.n
    n_test = max(1, int(round(test_frac * n)))
    perm = rng.permutation(n)
    test_idx = np.zeros(n, dtype=bool)
    test_idx[perm[:n_test]] = True
    return subset(data, ~test_idx), subset(data, test_idx)


def _test_metric(model: ModelVector, test: Dataset) -> float:
    """Mean squared residual (regression/interval) or 0/1 error."""
    preds = test.features @ model.coefficients
    if test.kind == ProblemKind.CLASSIFICATION:
        return float(np.mean(np.sign(preds) != test.labels))
    return float(np.mean((preds - test.labels) ** 2))


def cmd_compress(cfg: RunConfig) -> dict:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    kind = ProblemKind(cfg["kind"])
    halfwidth = cfg["halfwidth"] if kind == ProblemKind.INTERVAL else None
    data = load_dataset(cfg["data"], cfg["format"], kind,
                        interval_halfwidth=halfwidth)
    rng = np.random.default_rng(cfg["seed"])
    train, test = _split(data, cfg["test-frac"], rng)
    loss = SafeLoss(LossFamily(cfg["loss"]), cfg["mu"])
    problem = ErmProblem(train, loss, Penalty(cfg["penalty"]), cfg["lambda"])

    init = solve(problem, max_epochs=cfg["init-epochs"], tol=0.0)
    x0 = init.final.coefficients
    radius = cfg["radius"] if cfg["radius"] > 0 else _auto_radius(problem, x0)
    region = build_region(problem, x0, radius, cfg["steps"])
    scores = compression_scores(problem, region)
    order = np.argsort(-scores, kind="stable")  # easiest first

    def refit_metric(keep):
        # compression refits the standard estimator on the smaller dataset
        sub = subset_problem(problem, keep, rescale_lambda=False)
        fit = solve(sub, max_epochs=50_000, tol=cfg["tol"])
        return _test_metric(fit.final, test)

    fractions = [round(0.1 * i, 1) for i in range(10)]
    rows = []
    n = train.n
    for frac in fractions:
        n_drop = int(round(frac * n))
        keep = np.ones(n, dtype=bool)
        keep[order[:n_drop]] = False
        screened_err = refit_metric(keep)
        random_errs = []
        for rep in range(cfg["repeats"]):
            rep_rng = np.random.default_rng(cfg["seed"] + 1000 + rep)
            keep_r = np.ones(n, dtype=bool)
            keep_r[rep_rng.choice(n, size=n_drop, replace=False)] = False
            random_errs.append(refit_metric(keep_r))
        rows.append({
            "fraction": frac,
            "n_dropped": n_drop,
            "screened_error": screened_err,
            "random_errors": random_errs,
            "random_error_mean": float(np.mean(random_errs)),
        })
    payload = {
        "command": "compress",
        "params": dict(cfg.params),
        "radius_used": radius,
        "rows": rows,
    }
    _write_json(payload, out / "compress.json")
    with open(out / "compress.csv", "w", encoding="utf-8") as fh:
        fh.write("fraction,screened_error,random_error_mean\n")
        for row in rows:
            fh.write(f"{row['fraction']},{row['screened_error']!r},"
                     f"{row['random_error_mean']!r}\n")
    return payload


def cmd_path(cfg: RunConfig) -> dict:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    kind = ProblemKind(cfg["kind"])
    halfwidth = cfg["halfwidth"] if kind == ProblemKind.INTERVAL else None
    data = load_dataset(cfg["data"], cfg["format"], kind,
                        interval_halfwidth=halfwidth)
    loss = SafeLoss(LossFamily(cfg["loss"]), cfg["mu"])
    penalty = Penalty(cfg["penalty"])
    if cfg["lambda-min"] > cfg["lambda-max"]:
        raise ValueError("lambda-min must not exceed lambda-max")
    grid = np.geomspace(cfg["lambda-max"], cfg["lambda-min"],
                        cfg["path-points"])
    n = data.n
    steps = cfg["steps"]

    # plain warm-started path
    rows = []
    x_plain = None
    cost_plain_total = 0.0
    for lam in grid:
        problem = ErmProblem(data, loss, penalty, float(lam))
        fit = solve(problem, max_epochs=cfg["epochs"], tol=cfg["tol"],
                    x0=x_plain)
        x_plain = fit.final.coefficients
        cost_plain_total += fit.epochs
        rows.append({"lambda": float(lam), "epochs_plain": fit.epochs,
                     "primal_plain": fit.iterates[-1][1]})

    # screened path: the warm start centers the test region and the last
    # warm-start step length sets its radius (verified via the safety check)
    x_warm = None
    x_prev = None
    cost_screen_total = 0.0
    for i, lam in enumerate(grid):
        problem = ErmProblem(data, loss, penalty, float(lam))
        row = rows[i]
        if x_warm is None:
            fit = solve(problem, max_epochs=cfg["epochs"], tol=cfg["tol"])
            cost = float(fit.epochs)
            kept = n
            safe = True
            x_prev, x_warm = x_warm, fit.final.coefficients
        else:
            if x_prev is not None:
                radius = 2.0 * float(np.linalg.norm(x_warm - x_prev)) + 1e-8
            elif penalty == Penalty.L2SQ:
                radius = certified_radius(problem, x_warm)
            else:
                radius = progress_radius(problem, x_warm)
            region = build_region(problem, x_warm, radius, steps)
            report = screen(problem, region)
            keep = report.mask.keep
            kept = int(keep.sum())
            reduced = subset_problem(problem, keep)
            fit = solve(reduced, max_epochs=cfg["epochs"], tol=cfg["tol"],
                        x0=x_warm)
            cost = steps + fit.epochs * kept / n
            x_prev, x_warm = x_warm, fit.final.coefficients
            safe = verify_safety(problem, report.mask,
                                 solver_tol=min(cfg["tol"], 1e-11),
                                 check_tol=1e-6, sol_tol=1e-4)
        cost_screen_total += cost
        row.update({"kept": kept, "cost_screened": cost, "safe": bool(safe)})
    payload = {
        "command": "path",
        "params": dict(cfg.params),
        "cost_model": "screen build of k steps = k epochs; fit of T epochs "
                      "on s of n samples = T*s/n epochs; progress-radius "
                      "probes count as epochs",
        "rows": rows,
        "total_epochs_plain": cost_plain_total,
        "total_epochs_screened": cost_screen_total,
        "cost_ratio": cost_screen_total / max(cost_plain_total, 1e-12),
        "all_safe": all(r.get("safe", True) for r in rows),
    }
    _write_json(payload, out / "path.json")
    with open(out / "path.csv", "w", encoding="utf-8") as fh:
        fh.write("lambda,epochs_plain,cost_screened,kept,safe\n")
        for row in rows:
            fh.write(f"{row['lambda']!r},{row['epochs_plain']},"
                     f"{row.get('cost_screened', '')},{row.get('kept', '')},"
                     f"{row.get('safe', '')}\n")
    return payload


_COMMANDS = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "screen": cmd_screen,
    "compress": cmd_compress,
    "path": cmd_path,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="samplescreen",
        description="Safe sample screening for convex ERM",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, spec in _SPECS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None,
                       help="key = value config file; flags override it")
        for key, (typ, _default, help_text) in spec.items():
            if typ is bool:
                p.add_argument(f"--{key}", action="store_true",
                               default=argparse.SUPPRESS, help=help_text)
            else:
                p.add_argument(f"--{key}", type=typ,
                               default=argparse.SUPPRESS, help=help_text)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    command = args.command
    cli_values = {k.replace("_", "-"): v for k, v in vars(args).items()
                  if k not in ("command", "config")}
    try:
        cfg = make_config(command, cli_values, args.config)
        _COMMANDS[command](cfg)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
