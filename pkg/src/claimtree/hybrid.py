"""Hybrid tree model: occurrence tree with per-terminal severity models.

Fitting grows and prunes the classification tree, routes the training rows
and attaches one severity model to every terminal: Zero when the node's
zero-claim share exceeds the threshold (or the node majority is no-claim),
the node mean when the node is too small for a regression, and otherwise
an OLS or elastic net fit on the node's rows. Prediction routes a row to
its terminal and evaluates that node's model, clipping negatives to 0.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cart import Tree, TreeHyperparams, cp_to_alpha, grow, prune, to_dot, tree_from_dict, tree_to_dict
from .data import Column, Dataset, Standardization, feature_matrix, validate_schema
from .elastic_net import (
    LAMBDA_MIN,
    LinearFit,
    PenaltySpec,
    RankDeficiencyError,
    fit_elastic_net,
    fit_ols,
)

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


class ModelLoadError(Exception):
    """Raised when a stored model cannot be read back."""


@dataclass(frozen=True)
class HybridHyperparams:
    """Settings for the two-stage fit.

    ``glm_lambda`` is a float or "lambda.min"; ``glm_which`` is the elastic
    net mixing weight. Nodes whose zero-claim share exceeds
    ``zero_threshold`` predict 0 outright; nodes smaller than
    ``min_node_for_linear`` fall back to their mean.
    """

    cp: float = 0.0001
    maxdepth: int = 8
    zero_threshold: float = 0.25
    glm_which: float = 1.0
    glm_lambda: float | str = LAMBDA_MIN
    min_node_for_linear: int = 40
    severity_learner: str = "elastic_net"
    minsplit: int = 8

    def __post_init__(self):
        if self.cp < 0:
            raise ValueError("cp must be >= 0")
        if not 0.0 <= self.zero_threshold <= 1.0:
            raise ValueError("zero_threshold must lie in [0, 1]")
        if self.min_node_for_linear < 2:
            raise ValueError("min_node_for_linear must be >= 2")
        if self.severity_learner not in ("ols", "elastic_net"):
            raise ValueError("severity_learner must be 'ols' or 'elastic_net'")
        PenaltySpec(self.glm_which, self.glm_lambda)  # validates the pair

    def to_dict(self) -> dict:
        return {
            "cp": self.cp,
            "maxdepth": self.maxdepth,
            "zero_threshold": self.zero_threshold,
            "glm_which": self.glm_which,
            "glm_lambda": self.glm_lambda,
            "min_node_for_linear": self.min_node_for_linear,
            "severity_learner": self.severity_learner,
            "minsplit": self.minsplit,
        }


@dataclass
class NodeModel:
    """Severity predictor at one terminal: zero, mean or linear."""

    kind: str  # "zero" | "mean" | "linear"
    value: float = 0.0
    fit: LinearFit | None = None
    feature_idx: np.ndarray | None = None  # columns of the encoded matrix used by fit

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "zero":
            return np.zeros(X.shape[0])
        if self.kind == "mean":
            return np.full(X.shape[0], self.value)
        return self.fit.predict(X[:, self.feature_idx])


@dataclass
class TerminalSummary:
    node_id: int
    n: int
    n_positive: int
    zero_fraction: float
    beta_f: int
    model_kind: str


@dataclass
class HybridModel:
    tree: Tree
    node_models: dict[int, NodeModel]
    hyperparams: HybridHyperparams
    schema: tuple[Column, ...]
    encoded_features: list[str]
    fit_metadata: dict = field(default_factory=dict)
    terminal_summaries: list[TerminalSummary] = field(default_factory=list)


def fit(ds: Dataset, hp: HybridHyperparams, seed: int = 0) -> HybridModel:
    """Two-stage fit: grow + prune the occurrence tree, then attach
    severity models to the terminals.

    Severity fits use every row routed to the terminal, zeros included.
    An OLS terminal whose design is rank deficient falls back to the node
    mean with a logged warning. ``seed`` feeds the per-node penalty
    cross-validation when glm_lambda is "lambda.min".
    """
    if ds.n == 0:
        raise ValueError("cannot fit on an empty dataset")
    tree_hp = TreeHyperparams(cp=hp.cp, maxdepth=hp.maxdepth, minsplit=hp.minsplit)
    full = grow(ds, tree_hp)
    tree = prune(full, cp_to_alpha(full, hp.cp))

    X, names = feature_matrix(ds)
    y = ds.response
    terminal_of = tree.classify_batch(X)

    node_models: dict[int, NodeModel] = {}
    summaries: list[TerminalSummary] = []
    for tid in tree.terminal_ids():
        rows = np.nonzero(terminal_of == tid)[0]
        node = tree.nodes[tid]
        y_node = y[rows]
        zero_fraction = float((y_node == 0.0).mean()) if rows.size else 1.0
        model = _fit_node_model(X[rows], y_node, names, node.beta_f, zero_fraction, hp, seed, tid)
        node_models[tid] = model
        summaries.append(
            TerminalSummary(
                node_id=tid,
                n=node.n_node,
                n_positive=node.n_positive,
                zero_fraction=zero_fraction,
                beta_f=node.beta_f,
                model_kind=model.kind,
            )
        )
    return HybridModel(
        tree=tree,
        node_models=node_models,
        hyperparams=hp,
        schema=ds.columns,
        encoded_features=names,
        fit_metadata={"seed": seed, "software_version": __version__},
        terminal_summaries=summaries,
    )


def _fit_node_model(X_node, y_node, names, beta_f, zero_fraction, hp, seed, tid) -> NodeModel:
    # Precedence: majority-no-claim gate, then the zero rule, then size.
    if beta_f == 0:
        return NodeModel(kind="zero")
    if zero_fraction > hp.zero_threshold:
        return NodeModel(kind="zero")
    if y_node.size < hp.min_node_for_linear:
        return NodeModel(kind="mean", value=float(y_node.mean()))
    active = np.nonzero([len(np.unique(X_node[:, j])) > 1 for j in range(X_node.shape[1])])[0]
    if active.size == 0:
        return NodeModel(kind="mean", value=float(y_node.mean()))
    X_fit = X_node[:, active]
    active_names = [names[j] for j in active]
    if hp.severity_learner == "ols":
        try:
            lf = fit_ols(X_fit, y_node, feature_names=active_names)
        except RankDeficiencyError:
            log.warning("terminal %d: rank-deficient OLS design, falling back to node mean", tid)
            return NodeModel(kind="mean", value=float(y_node.mean()))
    else:
        lf = fit_elastic_net(
            X_fit,
            y_node,
            PenaltySpec(hp.glm_which, hp.glm_lambda),
            feature_names=active_names,
            cv_folds=min(10, y_node.size),
            cv_seed=seed + tid,
        )
    return NodeModel(kind="linear", fit=lf, feature_idx=active)


def predict_batch(model: HybridModel, ds: Dataset):
    """Vectorized prediction; returns (terminal ids, raw, clipped) arrays.

    Raw keeps the unclipped affine value of linear terminals for
    diagnostics; the claim prediction is the raw value floored at 0.
    """
    X, names = feature_matrix(ds)
    if names != model.encoded_features:
        raise ValueError(
            "dataset features do not match the model "
            f"(expected {model.encoded_features}, got {names})"
        )
    terminal_of = model.tree.classify_batch(X)
    raw = np.zeros(ds.n)
    for tid in model.tree.terminal_ids():
        rows = np.nonzero(terminal_of == tid)[0]
        if rows.size == 0:
            continue
        node = model.tree.nodes[tid]
        if node.beta_f == 0:
            continue
        raw[rows] = model.node_models[tid].predict(X[rows])
    return terminal_of, raw, np.maximum(raw, 0.0)


def predict(model: HybridModel, x: np.ndarray) -> float:
    """Predict one encoded feature row; negative values clip to 0."""
    x = np.asarray(x, dtype=float)
    tid, beta_f = model.tree.classify(x)
    if beta_f == 0:
        return 0.0
    value = float(model.node_models[tid].predict(x[None, :])[0])
    return max(value, 0.0)


def coefficient_report(model: HybridModel) -> dict[int, dict[str, float]]:
    """Terminal-by-feature coefficient table for the non-zero terminals.

    Mean terminals report only their intercept. Features with exactly zero
    coefficients (shrunk away or constant in the node) are omitted, which
    renders as blanks in the formatted table.
    """
    report: dict[int, dict[str, float]] = {}
    for tid in model.tree.terminal_ids():
        nm = model.node_models[tid]
        if nm.kind == "zero":
            continue
        if nm.kind == "mean":
            report[tid] = {"(Intercept)": nm.value}
            continue
        entry = {"(Intercept)": nm.fit.intercept}
        for name, coef in zip(nm.fit.feature_names, nm.fit.coefficients):
            if coef != 0.0:
                entry[name] = float(coef)
        report[tid] = entry
    return report


def format_coefficient_table(model: HybridModel) -> str:
    """CSV rendering of :func:`coefficient_report` (blank = not selected)."""
    report = coefficient_report(model)
    tids = sorted(report)
    rows = ["(Intercept)"] + model.encoded_features
    lines = ["term," + ",".join(f"node_{t}" for t in tids)]
    for feat in rows:
        if feat != "(Intercept)" and not any(feat in report[t] for t in tids):
            continue
        cells = [repr(report[t][feat]) if feat in report[t] else "" for t in tids]
        lines.append(",".join([feat] + cells))
    return "\n".join(lines) + "\n"


def export_tree_dot(model: HybridModel) -> str:
    return to_dot(model.tree)


def _node_model_to_dict(nm: NodeModel) -> dict:
    if nm.kind == "zero":
        return {"kind": "zero"}
    if nm.kind == "mean":
        return {"kind": "mean", "value": nm.value}
    lf = nm.fit
    return {
        "kind": "linear",
        "intercept": lf.intercept,
        "coefficients": [float(c) for c in lf.coefficients],
        "feature_names": list(lf.feature_names),
        "feature_idx": [int(i) for i in nm.feature_idx],
        "standardization": lf.standardization.to_dict() if lf.standardization else None,
        "penalty": None
        if lf.penalty is None
        else {"alpha": lf.penalty.alpha, "lambda": lf.penalty.lam},
        "converged": lf.converged,
        "iterations": lf.iterations,
    }


def _node_model_from_dict(d: dict) -> NodeModel:
    if d["kind"] == "zero":
        return NodeModel(kind="zero")
    if d["kind"] == "mean":
        return NodeModel(kind="mean", value=d["value"])
    st = d.get("standardization")
    penalty = d.get("penalty")
    lf = LinearFit(
        intercept=d["intercept"],
        coefficients=np.asarray(d["coefficients"], dtype=float),
        feature_names=list(d["feature_names"]),
        standardization=Standardization.from_dict(st) if st else None,
        penalty=PenaltySpec(penalty["alpha"], penalty["lambda"]) if penalty else None,
        converged=d["converged"],
        iterations=d["iterations"],
    )
    return NodeModel(kind="linear", fit=lf, feature_idx=np.asarray(d["feature_idx"], dtype=int))


def to_json(model: HybridModel) -> str:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "hyperparams": model.hyperparams.to_dict(),
        "schema": [
            {"name": c.name, "kind": c.kind, "categories": list(c.categories) if c.categories else None}
            for c in model.schema
        ],
        "encoded_features": list(model.encoded_features),
        "tree": tree_to_dict(model.tree),
        "node_models": {str(tid): _node_model_to_dict(nm) for tid, nm in model.node_models.items()},
        "fit_metadata": model.fit_metadata,
        "terminal_summaries": [
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
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def save(model: HybridModel, path) -> None:
    """Write the model as JSON; loading reproduces predictions exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_json(model))


def load(path) -> HybridModel:
    """Read back a model written by :func:`save`.

    Raises :class:`ModelLoadError` on malformed JSON or an unsupported
    format version.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelLoadError(f"cannot read model file {path}: {exc}") from exc
    try:
        version = payload["format_version"]
        if version != MODEL_FORMAT_VERSION:
            raise ModelLoadError(
                f"unsupported model format version {version} (supported: {MODEL_FORMAT_VERSION})"
            )
        hp = HybridHyperparams(**payload["hyperparams"])
        schema = validate_schema(
            [
                Column(c["name"], c["kind"], tuple(c["categories"]) if c.get("categories") else None)
                for c in payload["schema"]
            ]
        )
        tree = tree_from_dict(payload["tree"])
        node_models = {
            int(tid): _node_model_from_dict(d) for tid, d in payload["node_models"].items()
        }
        summaries = [
            TerminalSummary(
                node_id=s["node_id"],
                n=s["n"],
                n_positive=s["n_positive"],
                zero_fraction=s["zero_fraction"],
                beta_f=s["beta_f"],
                model_kind=s["model_kind"],
            )
            for s in payload.get("terminal_summaries", [])
        ]
        return HybridModel(
            tree=tree,
            node_models=node_models,
            hyperparams=hp,
            schema=schema,
            encoded_features=list(payload["encoded_features"]),
            fit_metadata=payload.get("fit_metadata", {}),
            terminal_summaries=summaries,
        )
    except ModelLoadError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelLoadError(f"malformed model file {path}: {exc}") from exc
