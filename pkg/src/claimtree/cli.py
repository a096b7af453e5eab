"""Command-line entry point: simulate, train, tune, predict, evaluate,
compare and export-tree.

Options come from flags or a JSON config file (flags win). Every run
writes a manifest with the resolved configuration next to its outputs.
Exit codes: 0 success, 1 validation error, 2 runtime or data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError, Dataset, load_csv, load_schema, save_csv, save_schema
from .elastic_net import LAMBDA_MIN
from .evaluate import (
    comparison_svg,
    comparison_table,
    compute_metrics,
    constant_mean_learner,
    cv_table_csv,
    grid_search,
)
from .hybrid import (
    HybridHyperparams,
    ModelLoadError,
    export_tree_dot,
    fit,
    format_coefficient_table,
    load,
    predict_batch,
    save,
)
from .simulate import SimConfig, save_latents_csv, simulate


class CliValidationError(Exception):
    """Bad flags or config values; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliValidationError(message)


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file; explicit flags override it")
    sub.add_argument("--force", action="store_true", help="overwrite existing outputs")


def build_parser() -> _Parser:
    parser = _Parser(prog="claimtree", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    cmds = parser.add_subparsers(dest="command", required=True)

    sim = cmds.add_parser("simulate", help="generate a synthetic portfolio")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--n", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--p-continuous", type=int, dest="p_continuous")
    sim.add_argument("--p-categorical", type=int, dest="p_categorical")
    sim.add_argument("--rho", type=float)
    sim.add_argument("--power", type=float)
    sim.add_argument("--phi", type=float)
    sim.add_argument("--noise-sd", type=float, dest="noise_sd")
    sim.add_argument("--latents", action="store_true", help="also write latent rates")
    _add_common(sim)

    tr = cmds.add_parser("train", help="fit a hybrid model")
    tr.add_argument("--data", required=True)
    tr.add_argument("--schema", required=True)
    tr.add_argument("--out", required=True, help="output directory")
    tr.add_argument("--seed", type=int)
    _add_hyperparam_flags(tr)
    _add_common(tr)

    tu = cmds.add_parser("tune", help="grid search with k-fold cross-validation")
    tu.add_argument("--data", required=True)
    tu.add_argument("--schema", required=True)
    tu.add_argument("--grid", required=True, help="JSON file: hyperparameter -> value list")
    tu.add_argument("--folds", type=int)
    tu.add_argument("--out", required=True, help="output directory")
    tu.add_argument("--seed", type=int)
    _add_hyperparam_flags(tu)
    _add_common(tu)

    pr = cmds.add_parser("predict", help="score a dataset with a stored model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True, help="predictions CSV path")
    _add_common(pr)

    ev = cmds.add_parser("evaluate", help="validation measures for stored predictions")
    ev.add_argument("--predictions", required=True, help="CSV from the predict command")
    ev.add_argument("--actuals", required=True, help="CSV holding the observed response")
    ev.add_argument("--schema", required=True)
    ev.add_argument("--out", required=True, help="metrics JSON path")
    _add_common(ev)

    co = cmds.add_parser("compare", help="rescaled comparison table for several models")
    co.add_argument("--models", nargs="*", default=[], help="stored model JSON files")
    co.add_argument("--train", required=True)
    co.add_argument("--test", required=True)
    co.add_argument("--schema", required=True)
    co.add_argument("--out", required=True, help="output directory")
    co.add_argument("--seed", type=int)
    co.add_argument(
        "--no-baselines",
        action="store_true",
        help="skip the constant-mean and mean-leaf-tree baselines",
    )
    _add_hyperparam_flags(co)
    _add_common(co)

    ex = cmds.add_parser("export-tree", help="DOT text of a stored model's tree")
    ex.add_argument("--model", required=True)
    ex.add_argument("--out", required=True, help="DOT file path")
    _add_common(ex)
    return parser


def _add_hyperparam_flags(sub):
    sub.add_argument("--cp", type=float)
    sub.add_argument("--maxdepth", type=int)
    sub.add_argument("--zero-threshold", type=float, dest="zero_threshold")
    sub.add_argument("--glm-which", type=float, dest="glm_which")
    sub.add_argument("--glm-lambda", dest="glm_lambda", help='penalty size or "lambda.min"')
    sub.add_argument("--min-node-linear", type=int, dest="min_node_for_linear")
    sub.add_argument("--minsplit", type=int)
    sub.add_argument("--severity-learner", dest="severity_learner", choices=["ols", "elastic_net"])


def _load_config_file(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliValidationError(f"cannot read config file {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliValidationError("config file must hold a JSON object")
    return cfg


def _resolve(args, cfg: dict, name: str, default):
    flag_value = getattr(args, name, None)
    if flag_value is not None:
        return flag_value
    if name in cfg:
        return cfg[name]
    return default


def _parse_glm_lambda(value):
    if value is None or value == LAMBDA_MIN:
        return value
    try:
        return float(value)
    except (TypeError, ValueError):
        raise CliValidationError(
            f'glm-lambda must be a number or "{LAMBDA_MIN}", got {value!r}'
        ) from None


def _resolve_hyperparams(args, cfg) -> HybridHyperparams:
    defaults = HybridHyperparams()
    try:
        return HybridHyperparams(
            cp=_resolve(args, cfg, "cp", defaults.cp),
            maxdepth=_resolve(args, cfg, "maxdepth", defaults.maxdepth),
            zero_threshold=_resolve(args, cfg, "zero_threshold", defaults.zero_threshold),
            glm_which=_resolve(args, cfg, "glm_which", defaults.glm_which),
            glm_lambda=_parse_glm_lambda(_resolve(args, cfg, "glm_lambda", defaults.glm_lambda)),
            min_node_for_linear=_resolve(
                args, cfg, "min_node_for_linear", defaults.min_node_for_linear
            ),
            severity_learner=_resolve(args, cfg, "severity_learner", defaults.severity_learner),
            minsplit=_resolve(args, cfg, "minsplit", defaults.minsplit),
        )
    except ValueError as exc:
        raise CliValidationError(str(exc)) from exc


def _prepare_out_dir(path: str, force: bool, expected: list[str]) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not force:
        clashes = [name for name in expected if (out / name).exists()]
        if clashes:
            raise CliValidationError(
                f"refusing to overwrite {', '.join(clashes)} in {out} (use --force)"
            )
    return out


def _check_out_file(path: str, force: bool) -> Path:
    out = Path(path)
    if out.exists() and not force:
        raise CliValidationError(f"refusing to overwrite {out} (use --force)")
    if out.parent:
        out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out_dir: Path, command: str, resolved: dict, seed) -> None:
    manifest = {
        "command": command,
        "claimtree_version": __version__,
        "seed": seed,
        "resolved_config": resolved,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args) -> int:
    cfg = _load_config_file(args)
    defaults = SimConfig()
    try:
        sim_cfg = SimConfig(
            n=_resolve(args, cfg, "n", defaults.n),
            p_continuous=_resolve(args, cfg, "p_continuous", defaults.p_continuous),
            p_categorical=_resolve(args, cfg, "p_categorical", defaults.p_categorical),
            rho=_resolve(args, cfg, "rho", defaults.rho),
            beta_poisson=np.asarray(cfg["beta_poisson"], dtype=float)
            if "beta_poisson" in cfg
            else defaults.beta_poisson,
            beta_gamma=np.asarray(cfg["beta_gamma"], dtype=float)
            if "beta_gamma" in cfg
            else defaults.beta_gamma,
            power=_resolve(args, cfg, "power", defaults.power),
            phi=_resolve(args, cfg, "phi", defaults.phi),
            noise_sd=_resolve(args, cfg, "noise_sd", defaults.noise_sd),
            seed=_resolve(args, cfg, "seed", defaults.seed),
        )
    except ValueError as exc:
        raise CliValidationError(str(exc)) from exc
    expected = ["portfolio.csv", "schema.json", "manifest.json"]
    if args.latents:
        expected.append("latents.csv")
    out = _prepare_out_dir(args.out, args.force, expected)
    portfolio = simulate(sim_cfg)
    save_csv(portfolio.dataset, out / "portfolio.csv")
    save_schema(portfolio.dataset.columns, out / "schema.json")
    if args.latents:
        save_latents_csv(portfolio, out / "latents.csv")
    _write_manifest(out, "simulate", sim_cfg.to_dict(), sim_cfg.seed)
    zero_share = float((portfolio.dataset.response == 0).mean())
    print(f"wrote {out / 'portfolio.csv'} (n={sim_cfg.n}, zero share {zero_share:.2%})")
    return 0


def _load_dataset(data_path: str, schema_path: str) -> Dataset:
    return load_csv(data_path, load_schema(schema_path))


def cmd_train(args) -> int:
    cfg = _load_config_file(args)
    hp = _resolve_hyperparams(args, cfg)
    seed = _resolve(args, cfg, "seed", 0)
    ds = _load_dataset(args.data, args.schema)
    out = _prepare_out_dir(
        args.out, args.force, ["model.json", "fit_report.json", "coefficients.csv", "manifest.json"]
    )
    model = fit(ds, hp, seed=seed)
    save(model, out / "model.json")
    report = {
        "n": ds.n,
        "n_terminals": len(model.tree.terminal_ids()),
        "terminals": [
            {
                "node_id": s.node_id,
                "n": s.n,
                "n_positive": s.n_positive,
                "zero_fraction": s.zero_fraction,
                "beta_f": s.beta_f,
                "model_kind": s.model_kind,
            }
            for s in model.terminal_summaries
        ],
    }
    with open(out / "fit_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "coefficients.csv", "w", encoding="utf-8") as fh:
        fh.write(format_coefficient_table(model))
    _write_manifest(out, "train", {"hyperparams": hp.to_dict(), "data": args.data}, seed)
    print(f"wrote {out / 'model.json'} ({report['n_terminals']} terminals)")
    return 0


def _hybrid_learner(hp: HybridHyperparams, seed: int):
    def learner(ds_train: Dataset):
        model = fit(ds_train, hp, seed=seed)
        return lambda ds: predict_batch(model, ds)[2]

    return learner


def cmd_tune(args) -> int:
    cfg = _load_config_file(args)
    base = _resolve_hyperparams(args, cfg)
    seed = _resolve(args, cfg, "seed", 0)
    folds = _resolve(args, cfg, "folds", 10)
    try:
        with open(args.grid, "r", encoding="utf-8") as fh:
            grid = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliValidationError(f"cannot read grid file {args.grid}: {exc}") from exc
    if not isinstance(grid, dict) or not grid:
        raise CliValidationError("grid file must map hyperparameter names to value lists")
    known = set(HybridHyperparams().to_dict())
    unknown = set(grid) - known
    if unknown:
        raise CliValidationError(f"unknown grid hyperparameters: {sorted(unknown)}")
    ds = _load_dataset(args.data, args.schema)
    out = _prepare_out_dir(args.out, args.force, ["winner.json", "cv_table.csv", "manifest.json"])

    def factory(params: dict):
        merged = {**base.to_dict(), **params}
        return _hybrid_learner(HybridHyperparams(**merged), seed)

    result = grid_search(ds, grid, k=folds, seed=seed, learner_factory=factory)
    winner_hp = {**base.to_dict(), **result.winner.params}
    with open(out / "winner.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "hyperparams": winner_hp,
                "mean_rmse": result.winner.mean_rmse,
                "sd_rmse": result.winner.sd_rmse,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    with open(out / "cv_table.csv", "w", encoding="utf-8") as fh:
        fh.write(cv_table_csv(result))
    _write_manifest(
        out,
        "tune",
        {"base_hyperparams": base.to_dict(), "grid": grid, "folds": folds, "data": args.data},
        seed,
    )
    print(f"winner: {result.winner.params} (mean fold RMSE {result.winner.mean_rmse:.6g})")
    return 0


def cmd_predict(args) -> int:
    model = load(args.model)
    ds = load_csv(args.data, model.schema)
    out = _check_out_file(args.out, args.force)
    terminal_of, raw, clipped = predict_batch(model, ds)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "terminal_id", "raw", "clipped"])
        for i in range(ds.n):
            writer.writerow([i, int(terminal_of[i]), repr(float(raw[i])), repr(float(clipped[i]))])
    print(f"wrote {out} ({ds.n} predictions)")
    return 0


def cmd_evaluate(args) -> int:
    predictions = _read_prediction_column(args.predictions)
    ds = _load_dataset(args.actuals, args.schema)
    if predictions.shape[0] != ds.n:
        raise DataError(
            f"prediction count {predictions.shape[0]} does not match actuals ({ds.n} rows)"
        )
    out = _check_out_file(args.out, args.force)
    report = compute_metrics(ds.response, predictions)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out} (R^2 {report.r2:.4f}, RMSE {report.rmse:.6g})")
    return 0


def _read_prediction_column(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty predictions file") from None
        col = header.index("clipped") if "clipped" in header else len(header) - 1
        values = []
        for r, record in enumerate(reader, start=1):
            try:
                values.append(float(record[col]))
            except (IndexError, ValueError):
                raise DataError(f"{path}: row {r}: bad prediction value") from None
    return np.asarray(values)


def cmd_compare(args) -> int:
    cfg = _load_config_file(args)
    seed = _resolve(args, cfg, "seed", 0)
    schema = load_schema(args.schema)
    ds_train = load_csv(args.train, schema)
    ds_test = load_csv(args.test, schema)
    out = _prepare_out_dir(
        args.out, args.force, ["comparison.csv", "comparison.svg", "manifest.json"]
    )
    models = []
    for path in args.models:
        stored = load(path)
        name = Path(path).stem
        models.append((name, lambda ds, m=stored: predict_batch(m, ds)[2]))
    if not args.no_baselines:
        models.append(("constant_mean", constant_mean_learner(ds_train)))
        base = _resolve_hyperparams(args, cfg)
        mean_leaf_hp = HybridHyperparams(
            cp=base.cp,
            maxdepth=base.maxdepth,
            zero_threshold=1.0,
            glm_which=base.glm_which,
            glm_lambda=base.glm_lambda,
            min_node_for_linear=10**9,
            severity_learner=base.severity_learner,
            minsplit=base.minsplit,
        )
        tree_model = fit(ds_train, mean_leaf_hp, seed=seed)
        models.append(("mean_leaf_tree", lambda ds, m=tree_model: predict_batch(m, ds)[2]))
    if len(models) < 2:
        raise CliValidationError("need at least 2 models; pass --models or drop --no-baselines")
    table = comparison_table(models, ds_train, ds_test)
    with open(out / "comparison.csv", "w", encoding="utf-8") as fh:
        fh.write(table.to_csv())
    with open(out / "comparison.svg", "w", encoding="utf-8") as fh:
        fh.write(comparison_svg(table))
    _write_manifest(
        out,
        "compare",
        {"models": list(args.models), "train": args.train, "test": args.test},
        seed,
    )
    print(f"wrote {out / 'comparison.csv'} ({len(models)} models)")
    return 0


def cmd_export_tree(args) -> int:
    model = load(args.model)
    out = _check_out_file(args.out, args.force)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(export_tree_dot(model))
    print(f"wrote {out}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "tune": cmd_tune,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "export-tree": cmd_export_tree,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except CliValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ModelLoadError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
