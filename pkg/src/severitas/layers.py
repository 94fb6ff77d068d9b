"""Plumbing shared by both model families.

Each schema field owns a contiguous block of encoded columns; embedding a
field is a matmul of that block against a learned matrix, so fractional
one-hot blocks (SMOTE output) become convex combinations of category
embeddings and a numeric value scales its learned direction vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ShapeError
from .ingest import FeatureSchema


@dataclass(frozen=True)
class FieldSpec:
    """One input field and its encoded column block [start, stop)."""

    name: str
    kind: str
    start: int
    stop: int

    @property
    def width(self) -> int:
        return self.stop - self.start


def fields_from_schema(schema: FeatureSchema) -> list[FieldSpec]:
    return [FieldSpec(f.name, f.kind, start, stop)
            for f, (start, stop) in zip(schema.fields, schema.blocks())]


def encoded_width(fields: list[FieldSpec]) -> int:
    return fields[-1].stop if fields else 0


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def as_tensors(arrays: dict, tape=None) -> dict:
    """Wrap parameter arrays as tape leaves (training) or constants (eval)."""
    if tape is None:
        return {name: ad.Tensor(a) for name, a in arrays.items()}
    return {name: tape.leaf(a, name=name) for name, a in arrays.items()}


def check_batch(X: np.ndarray, fields: list[FieldSpec]) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    want = encoded_width(fields)
    if X.ndim != 2 or X.shape[1] != want:
        raise ShapeError(f"batch width {X.shape} does not match encoded width {want}")
    return X


def embed_fields(X: np.ndarray, fields: list[FieldSpec], tensors: dict) -> ad.Tensor:
    """Per-field embeddings stacked to (batch, n_fields, dim)."""
    parts = [ad.matmul(ad.Tensor(np.ascontiguousarray(X[:, f.start:f.stop])),
                       tensors[f"embed.{f.name}"]) for f in fields]
    return ad.stack(parts, axis=1)


def dense(x: ad.Tensor, w: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    return ad.add(ad.matmul(x, w), b)


def param_group(name: str) -> str:
    """Collapse an array name to its parameter group (embeddings, one group per layer)."""
    parts = name.split(".")
    if parts[-1] in ("w", "b") and len(parts) > 1:
        return ".".join(parts[:-1])
    return parts[0]


def param_count(arrays: dict) -> int:
    return int(sum(a.size for a in arrays.values()))


def clone_arrays(arrays: dict) -> dict:
    return {name: a.copy() for name, a in arrays.items()}
