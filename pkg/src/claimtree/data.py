"""Columnar dataset with schema, CSV ingestion, encoding and standardization.

Every learner in the package consumes the :class:`Dataset` produced here.
Columns are typed by a schema (continuous, categorical, response, count);
categorical cells are stored as category indices so the whole table lives
in one float64 matrix.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

VALID_KINDS = ("continuous", "categorical", "response", "count")


class DataError(Exception):
    """Raised for ingestion, schema and standardization problems."""


@dataclass(frozen=True)
class Column:
    """One schema entry: a named column with a kind and optional categories."""

    name: str
    kind: str
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.categories:
                raise DataError(f"column {self.name!r}: categorical column needs categories")
            if len(set(self.categories)) != len(self.categories):
                raise DataError(f"column {self.name!r}: duplicate category labels")
        elif self.categories:
            raise DataError(f"column {self.name!r}: only categorical columns take categories")


def validate_schema(columns: list[Column] | tuple[Column, ...]) -> tuple[Column, ...]:
    columns = tuple(columns)
    names = [c.name for c in columns]
    if len(set(names)) != len(names):
        raise DataError("duplicate column names in schema")
    n_resp = sum(1 for c in columns if c.kind == "response")
    if n_resp != 1:
        raise DataError(f"schema must have exactly one response column, found {n_resp}")
    if sum(1 for c in columns if c.kind == "count") > 1:
        raise DataError("schema may have at most one count column")
    return columns


@dataclass(frozen=True)
class Standardization:
    """Per-column affine transform: z = (x - center) / scale.

    After applying, each column has mean 0 and sum of squares 1 (not unit
    variance). ``invert`` reproduces the original values exactly.
    """

    names: tuple[str, ...]
    center: np.ndarray
    scale: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.center) / self.scale

    def invert(self, Z: np.ndarray) -> np.ndarray:
        return Z * self.scale + self.center

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "center": [float(v) for v in self.center],
            "scale": [float(v) for v in self.scale],
        }

    @staticmethod
    def from_dict(d: dict) -> "Standardization":
        return Standardization(
            names=tuple(d["names"]),
            center=np.asarray(d["center"], dtype=float),
            scale=np.asarray(d["scale"], dtype=float),
        )


def standardize_matrix(X: np.ndarray, names: list[str] | None = None):
    """Center each column and rescale so its sum of squares is 1.

    Returns ``(Z, Standardization)``. Raises :class:`DataError` naming the
    offending column if any column is constant (its scale would be 0).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError("standardize expects a 2-D matrix")
    if names is None:
        names = [f"col{j}" for j in range(X.shape[1])]
    center = X.mean(axis=0)
    centered = X - center
    scale = np.sqrt((centered**2).sum(axis=0))
    bad = np.nonzero(scale == 0.0)[0]
    if bad.size:
        raise DataError(f"standardize: column {names[bad[0]]!r} is constant")
    return centered / scale, Standardization(tuple(names), center, scale)


@dataclass(frozen=True)
class Dataset:
    """Immutable table of feature columns plus one response column.

    ``values`` has one column per schema entry, in schema order. Categorical
    cells hold the category index. ``p`` is the feature count after dummy
    encoding (k-level categoricals contribute k-1).
    """

    columns: tuple[Column, ...]
    values: np.ndarray

    def __post_init__(self):
        validate_schema(self.columns)
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.columns):
            raise DataError("values shape does not match schema")
        object.__setattr__(self, "values", values)
        if not np.isfinite(values).all():
            raise DataError("dataset contains non-finite values")
        if (self.response < 0).any():
            raise DataError("response column contains negative values")
        self.values.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return sum(self._encoded_width(c) for c in self.feature_columns)

    @property
    def feature_columns(self) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.kind in ("continuous", "categorical"))

    @property
    def response_column(self) -> Column:
        return next(c for c in self.columns if c.kind == "response")

    @property
    def count_column(self) -> Column | None:
        return next((c for c in self.columns if c.kind == "count"), None)

    def column_values(self, name: str) -> np.ndarray:
        idx = self._index(name)
        return self.values[:, idx]

    @property
    def response(self) -> np.ndarray:
        return self.values[:, self._index(self.response_column.name)]

    @property
    def occurrence(self) -> np.ndarray:
        """Binary claim-occurrence label: count > 0 when a count column
        exists, otherwise response > 0."""
        cc = self.count_column
        base = self.column_values(cc.name) if cc is not None else self.response
        return (base > 0).astype(np.int64)

    def _index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise DataError(f"no column named {name!r}")

    @staticmethod
    def _encoded_width(col: Column) -> int:
        if col.kind == "categorical":
            return len(col.categories) - 1
        return 1

    def subset(self, row_idx: np.ndarray) -> "Dataset":
        return Dataset(self.columns, self.values[row_idx])


def load_schema(path) -> tuple[Column, ...]:
    """Read the JSON schema sidecar: {"columns": [{name, kind, categories?}]}."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    cols = []
    for entry in raw["columns"]:
        cats = entry.get("categories")
        cols.append(Column(entry["name"], entry["kind"], tuple(cats) if cats else None))
    return validate_schema(cols)


def save_schema(columns, path) -> None:
    payload = {"columns": []}
    for c in columns:
        entry = {"name": c.name, "kind": c.kind}
        if c.categories:
            entry["categories"] = list(c.categories)
        payload["columns"].append(entry)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_csv(path, schema) -> Dataset:
    """Parse a header-row CSV into a Dataset according to ``schema``.

    Rejects missing columns, missing values, unparseable numbers and
    unknown category labels; error messages name the data row (1-based)
    and column.
    """
    schema = validate_schema(schema)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        pos = {}
        for col in schema:
            if col.name not in header:
                raise DataError(f"{path}: missing column {col.name!r}")
            pos[col.name] = header.index(col.name)
        rows = []
        for r, record in enumerate(reader, start=1):
            parsed = np.empty(len(schema))
            for j, col in enumerate(schema):
                if pos[col.name] >= len(record):
                    raise DataError(f"{path}: row {r}, column {col.name!r}: missing value")
                cell = record[pos[col.name]].strip()
                if cell == "":
                    raise DataError(f"{path}: row {r}, column {col.name!r}: missing value")
                if col.kind == "categorical":
                    if cell not in col.categories:
                        raise DataError(
                            f"{path}: row {r}, column {col.name!r}: unknown category {cell!r}"
                        )
                    parsed[j] = col.categories.index(cell)
                else:
                    try:
                        parsed[j] = float(cell)
                    except ValueError:
                        raise DataError(
                            f"{path}: row {r}, column {col.name!r}: cannot parse {cell!r}"
                        ) from None
            rows.append(parsed)
    values = np.array(rows, dtype=float) if rows else np.empty((0, len(schema)))
    return Dataset(schema, values)


def save_csv(ds: Dataset, path) -> None:
    """Write a Dataset back to CSV; categorical indices become labels."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in ds.columns])
        for i in range(ds.n):
            record = []
            for j, col in enumerate(ds.columns):
                v = ds.values[i, j]
                if col.kind == "categorical":
                    record.append(col.categories[int(v)])
                else:
                    record.append(repr(float(v)))
            writer.writerow(record)


def encode_categoricals(ds: Dataset) -> Dataset:
    """Dummy-encode categorical columns: k levels become k-1 indicators.

    The first category is the reference level. Two-level columns keep their
    name and 0/1 values; wider columns expand to ``name=label`` indicators.
    Row count and order are preserved.
    """
    new_cols: list[Column] = []
    new_vals: list[np.ndarray] = []
    for j, col in enumerate(ds.columns):
        vals = ds.values[:, j]
        if col.kind != "categorical":
            new_cols.append(col)
            new_vals.append(vals)
            continue
        k = len(col.categories)
        if k == 2:
            new_cols.append(Column(col.name, "continuous"))
            new_vals.append((vals == 1).astype(float))
            continue
        for level in range(1, k):
            new_cols.append(Column(f"{col.name}={col.categories[level]}", "continuous"))
            new_vals.append((vals == level).astype(float))
    return Dataset(tuple(new_cols), np.column_stack(new_vals))


def feature_matrix(ds: Dataset) -> tuple[np.ndarray, list[str]]:
    """Encoded feature matrix and its column names (response/count dropped)."""
    enc = encode_categoricals(ds)
    names = [c.name for c in enc.feature_columns]
    idx = [i for i, c in enumerate(enc.columns) if c.kind in ("continuous", "categorical")]
    return enc.values[:, idx], names


def standardize(ds: Dataset, columns: list[str]) -> tuple[Dataset, Standardization]:
    """Standardize the named columns in place (mean 0, sum of squares 1)."""
    idx = [ds._index(name) for name in columns]
    for i in idx:
        if ds.columns[i].kind != "continuous":
            raise DataError(
                f"standardize: column {ds.columns[i].name!r} is {ds.columns[i].kind}, "
                "only continuous columns can be standardized"
            )
    sub = ds.values[:, idx]
    Z, st = standardize_matrix(sub, names=list(columns))
    out = ds.values.copy()
    out[:, idx] = Z
    return Dataset(ds.columns, out), st
