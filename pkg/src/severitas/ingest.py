"""CSV ingestion, feature encoding and the stratified train/val/test split.

The encoded design matrix is standardized numerics plus one-hot categorical
blocks, in schema declaration order; its width is the input dimension both
model families train on.  Fitting statistics on the training rows only and
splitting before fitting is the caller's job (the pipeline does exactly
that); the functions here never mix rows across splits on their own.
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import IngestError, SchemaError, StratificationError

SEVERITY_CLASSES = ("KA", "BC", "O")
SPLIT_TAGS = ("train", "val", "test")

# Numeric cells matching these (after strip/casefold) count as missing.
# Categorical and label cells are user-declared data, so only an empty
# cell is missing there ("none" etc. may be legitimate categories).
MISSING_TOKENS = frozenset({"", "n/a", "na", "nan", "null"})

COLUMN_KINDS = ("categorical", "numerical", "label")


@dataclass
class SchemaConfig:
    """Declared column roles plus the strict/lenient ingestion mode."""

    columns: dict[str, str]  # name -> categorical | numerical | label
    mode: str = "strict"

    def __post_init__(self):
        if self.mode not in ("strict", "lenient"):
            raise SchemaError(f"mode must be 'strict' or 'lenient', got {self.mode!r}")
        labels = [c for c, kind in self.columns.items() if kind == "label"]
        if len(labels) != 1:
            raise SchemaError(f"schema config must declare exactly one label column, found {labels}")
        for name, kind in self.columns.items():
            if kind not in COLUMN_KINDS:
                raise SchemaError(f"column {name!r} has unknown kind {kind!r}")
        if len(self.columns) < 2:
            raise SchemaError("schema config declares no feature columns")

    @property
    def label_column(self) -> str:
        return next(c for c, kind in self.columns.items() if kind == "label")

    @property
    def feature_columns(self) -> list[str]:
        return [c for c, kind in self.columns.items() if kind != "label"]

    @staticmethod
    def from_json_file(path) -> "SchemaConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        return SchemaConfig(columns=dict(raw["columns"]), mode=raw.get("mode", "strict"))

    def to_json_dict(self) -> dict:
        return {"columns": self.columns, "mode": self.mode}


@dataclass
class RawTable:
    """Parsed CSV rows. Declared numeric cells are floats, the rest strings.

    Undeclared columns ride along untouched (e.g. a year column consumed
    only by the descriptive reports).
    """

    columns: list[str]
    rows: list[dict]
    dropped_rows: int = 0
    dropped_by_column: dict = field(default_factory=dict)
    line_numbers: list = field(default_factory=list)  # file line per kept row

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def line_of(self, row_index: int) -> int:
        return self.line_numbers[row_index] if self.line_numbers else row_index + 2

    def subset(self, indices) -> "RawTable":
        lines = [self.line_of(i) for i in indices]
        return RawTable(self.columns, [self.rows[i] for i in indices],
                        self.dropped_rows, dict(self.dropped_by_column), lines)


def _is_missing(cell: str, numeric: bool) -> bool:
    if numeric:
        return cell.strip().casefold() in MISSING_TOKENS
    return cell.strip() == ""


def load_csv(path, config: SchemaConfig) -> RawTable:
    """Load a UTF-8, comma-separated, headered CSV against the declared schema.

    Strict mode raises on the first missing/unparseable cell (with its file
    line number); lenient mode drops the row and counts it per column.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty, no header row") from None
        missing_cols = [c for c in config.columns if c not in header]
        if missing_cols:
            raise SchemaError(f"{path}: declared column(s) missing from header: {', '.join(missing_cols)}")
        col_index = {c: header.index(c) for c in header}
        numeric_cols = [c for c, kind in config.columns.items() if kind == "numerical"]
        declared = list(config.columns)

        rows: list[dict] = []
        lines: list[int] = []
        dropped = 0
        dropped_by_column: dict[str, int] = {}
        for record in reader:
            line = reader.line_num
            if len(record) != len(header):
                raise IngestError(f"{path}:{line}: expected {len(header)} fields, found {len(record)}")
            row = {c: record[col_index[c]] for c in header}
            bad_column = None
            reason = None
            for c in declared:
                if _is_missing(row[c], config.columns[c] == "numerical"):
                    bad_column, reason = c, "missing value"
                    break
            if bad_column is None:
                for c in numeric_cols:
                    try:
                        row[c] = float(row[c])
                    except ValueError:
                        bad_column, reason = c, f"unparseable numeric cell {row[c]!r}"
                        break
            if bad_column is not None:
                if config.mode == "strict":
                    raise IngestError(f"{path}:{line}: column {bad_column!r}: {reason}")
                dropped += 1
                dropped_by_column[bad_column] = dropped_by_column.get(bad_column, 0) + 1
                continue
            rows.append(row)
            lines.append(line)
    return RawTable(columns=header, rows=rows, dropped_rows=dropped,
                    dropped_by_column=dropped_by_column, line_numbers=lines)


@dataclass
class FieldSchema:
    """One fitted feature column: vocabulary for categoricals, moments for numerics."""

    name: str
    kind: str  # categorical | numerical
    vocabulary: Optional[list[str]] = None
    mean: Optional[float] = None
    std: Optional[float] = None

    @property
    def width(self) -> int:
        return len(self.vocabulary) if self.kind == "categorical" else 1


@dataclass
class FeatureSchema:
    """Fitted per-column encoders; defines the encoded input width."""

    fields: list[FieldSchema]
    label_column: str

    @property
    def encoded_width(self) -> int:
        return sum(f.width for f in self.fields)

    def blocks(self) -> list[tuple[int, int]]:
        """Half-open (start, stop) column ranges, one per field, in order."""
        out, start = [], 0
        for f in self.fields:
            out.append((start, start + f.width))
            start += f.width
        return out

    def block(self, field_name: str) -> tuple[int, int]:
        for f, span in zip(self.fields, self.blocks()):
            if f.name == field_name:
                return span
        raise KeyError(f"unknown field {field_name!r}")

    def encoded_column_names(self) -> list[str]:
        names = []
        for f in self.fields:
            if f.kind == "categorical":
                names.extend(f"{f.name}={v}" for v in f.vocabulary)
            else:
                names.append(f.name)
        return names

    def to_json_dict(self) -> dict:
        return {
            "label_column": self.label_column,
            "classes": list(SEVERITY_CLASSES),
            "fields": [
                {"name": f.name, "kind": f.kind, "vocabulary": f.vocabulary,
                 "mean": f.mean, "std": f.std}
                for f in self.fields
            ],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "FeatureSchema":
        fields = [FieldSchema(name=f["name"], kind=f["kind"], vocabulary=f["vocabulary"],
                              mean=f["mean"], std=f["std"]) for f in d["fields"]]
        return FeatureSchema(fields=fields, label_column=d["label_column"])

    def fingerprint(self) -> str:
        """Stable digest of the fitted schema; checkpoints are pinned to it."""
        canon = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def fit_schema(raw: RawTable, config: SchemaConfig) -> FeatureSchema:
    """Collect sorted vocabularies and population-convention moments.

    Constant numeric columns get std substituted by 1.0 (with a warning) so
    the transform stays total.
    """
    if len(raw) == 0:
        raise ValueError("cannot fit a schema on an empty table")
    fields = []
    for name in config.feature_columns:
        kind = config.columns[name]
        if kind == "categorical":
            vocab = sorted(set(raw.column(name)))
            fields.append(FieldSchema(name=name, kind="categorical", vocabulary=vocab))
        else:
            values = np.asarray(raw.column(name), dtype=np.float64)
            mean = float(values.mean())
            std = float(values.std())  # population convention: divide by n
            if std == 0.0:
                warnings.warn(f"numeric column {name!r} is constant on the fit rows; using std=1")
                std = 1.0
            fields.append(FieldSchema(name=name, kind="numerical", mean=mean, std=std))
    return FeatureSchema(fields=fields, label_column=config.label_column)


@dataclass
class Dataset:
    """Encoded design matrix, severity labels and (optionally) split tags."""

    X: np.ndarray  # (n, encoded_width) float64
    y: np.ndarray  # (n,) int64 indices into SEVERITY_CLASSES
    split: Optional[np.ndarray] = None  # (n,) '<U5' tags from SPLIT_TAGS

    def __post_init__(self):
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"row count {self.X.shape[0]} != label count {self.y.shape[0]}")

    def __len__(self):
        return self.X.shape[0]

    def subset(self, tag: str) -> "Dataset":
        if self.split is None:
            raise ValueError("dataset has no split tags")
        mask = self.split == tag
        return Dataset(self.X[mask].copy(), self.y[mask].copy())

    def class_counts(self) -> dict[str, int]:
        counts = np.bincount(self.y, minlength=len(SEVERITY_CLASSES))
        return {cls: int(counts[i]) for i, cls in enumerate(SEVERITY_CLASSES)}


def transform(raw: RawTable, schema: FeatureSchema, mode: str = "strict"):
    """Encode rows: standardized numerics, one-hot categoricals, label indices.

    Returns ``(dataset, unseen_counts)``; in lenient mode an unseen category
    becomes an all-zero block and bumps its column's counter.
    """
    n = len(raw)
    X = np.zeros((n, schema.encoded_width), dtype=np.float64)
    unseen: dict[str, int] = {}
    for f, (start, stop) in zip(schema.fields, schema.blocks()):
        if f.kind == "numerical":
            values = np.asarray(raw.column(f.name), dtype=np.float64)
            X[:, start] = (values - f.mean) / f.std
        else:
            index = {v: i for i, v in enumerate(f.vocabulary)}
            for r, cell in enumerate(raw.column(f.name)):
                slot = index.get(cell)
                if slot is None:
                    if mode == "strict":
                        raise SchemaError(f"unseen category {cell!r} in column {f.name!r}")
                    unseen[f.name] = unseen.get(f.name, 0) + 1
                else:
                    X[r, start + slot] = 1.0
    class_index = {c: i for i, c in enumerate(SEVERITY_CLASSES)}
    y = np.empty(n, dtype=np.int64)
    for r, cell in enumerate(raw.column(schema.label_column)):
        if cell not in class_index:
            raise SchemaError(f"label {cell!r} is not one of {'/'.join(SEVERITY_CLASSES)}")
        y[r] = class_index[cell]
    if not np.isfinite(X).all():
        raise ValueError("encoded matrix contains non-finite values")
    return Dataset(X=X, y=y), unseen


@dataclass
class SplitSpec:
    """Train/val/test fractions plus the seed governing the assignment."""

    train: float = 0.6
    val: float = 0.2
    test: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for name, frac in (("train", self.train), ("val", self.val), ("test", self.test)):
            if not 0.0 < frac < 1.0:
                raise ValueError(f"{name} fraction must lie in (0, 1), got {frac}")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {self.train + self.val + self.test}")

    @property
    def fractions(self):
        return (self.train, self.val, self.test)


def _largest_remainder(n: int, fractions) -> list[int]:
    """Apportion n into integer parts; ties go to the earlier split."""
    ideal = [f * n for f in fractions]
    base = [int(np.floor(x)) for x in ideal]
    leftover = n - sum(base)
    order = sorted(range(len(fractions)), key=lambda i: (-(ideal[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def stratified_assignment(y: np.ndarray, spec: SplitSpec) -> np.ndarray:
    """Per-class largest-remainder split; a pure function of (seed, row order)."""
    y = np.asarray(y)
    tags = np.empty(len(y), dtype="<U5")
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 0x5717]))
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < 3:
            raise StratificationError(
                f"class {SEVERITY_CLASSES[int(cls)] if int(cls) < 3 else cls} has only {len(idx)} rows; "
                "need at least 3 to stratify")
        counts = _largest_remainder(len(idx), spec.fractions)
        perm = rng.permutation(len(idx))
        shuffled = idx[perm]
        bounds = np.cumsum(counts)
        tags[shuffled[:bounds[0]]] = "train"
        tags[shuffled[bounds[0]:bounds[1]]] = "val"
        tags[shuffled[bounds[1]:]] = "test"
    return tags


def stratified_split(dataset: Dataset, spec: SplitSpec) -> Dataset:
    """Return a copy of the dataset with train/val/test tags attached."""
    tags = stratified_assignment(dataset.y, spec)
    return Dataset(dataset.X.copy(), dataset.y.copy(), split=tags)


def save_encoded_csv(dataset: Dataset, path, schema: Optional[FeatureSchema] = None) -> None:
    """Persist encoded rows, one per sample, last column = label index."""
    header = (schema.encoded_column_names() if schema is not None
              else [f"x{i}" for i in range(dataset.X.shape[1])]) + ["label"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row, label in zip(dataset.X, dataset.y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def load_encoded_csv(path) -> Dataset:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        width = len(header) - 1
        xs, ys = [], []
        for record in reader:
            xs.append([float(v) for v in record[:width]])
            ys.append(int(record[width]))
    X = np.asarray(xs, dtype=np.float64).reshape(len(xs), width)
    return Dataset(X=X, y=np.asarray(ys, dtype=np.int64))
