"""SMOTE oversampling, ENN cleaning, and their composition (SMOTEENN).

Runs in the encoded feature space (standardized numerics + one-hot blocks),
so synthetic samples carry fractional one-hot values; the models' embedding
layers handle those as convex category combinations.  All neighbour
searches are exact Euclidean with ties broken toward the lower index, and
every stochastic choice draws from the caller's generator.

Applied to the training split only; the evaluation splits are never touched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._kernels import knn_search
from .errors import ResampleError
from .ingest import SEVERITY_CLASSES, Dataset


@dataclass
class ResampleConfig:
    k_smote: int = 5
    k_enn: int = 3
    target: dict | None = None  # class name -> desired count; default: match majority
    seed: int = 0

    def __post_init__(self):
        if self.k_smote < 1:
            raise ValueError(f"k_smote must be >= 1, got {self.k_smote}")
        if self.k_enn < 1:
            raise ValueError(f"k_enn must be >= 1, got {self.k_enn}")
        if self.k_enn % 2 == 0:
            raise ValueError(f"k_enn must be odd so the majority vote is well-defined, got {self.k_enn}")


@dataclass
class SmoteInfo:
    """Bookkeeping for one SMOTE pass: counts and per-synthetic generators.

    ``generators`` holds (base_row, neighbour_row, u) per synthetic sample,
    indices into the *input* dataset — enough to verify each point sits on
    its generating segment.
    """

    synthesized: dict = field(default_factory=dict)
    generators: list = field(default_factory=list)


@dataclass
class ResampleReport:
    """Per-class count snapshots across the two stages."""

    before: dict = field(default_factory=dict)
    after_smote: dict = field(default_factory=dict)
    after_enn: dict = field(default_factory=dict)

    @property
    def synthesized(self) -> dict:
        return {c: self.after_smote.get(c, 0) - self.before.get(c, 0) for c in self.before}

    @property
    def removed(self) -> dict:
        return {c: self.after_smote.get(c, 0) - self.after_enn.get(c, 0) for c in self.before}

    def to_json_dict(self) -> dict:
        return {
            cls: {
                "before": self.before.get(cls, 0),
                "after_smote": self.after_smote.get(cls, 0),
                "after_enn": self.after_enn.get(cls, 0),
                "removed": self.removed.get(cls, 0),
                "synthesized": self.synthesized.get(cls, 0),
            }
            for cls in SEVERITY_CLASSES if cls in self.before
        }

    def dump_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def knn_indices(points: np.ndarray, query, k: int, exclude_self: bool = False) -> np.ndarray:
    """Indices of the k nearest points (Euclidean), nearest first.

    ``query`` is either a vector or an integer index into ``points``; with
    ``exclude_self`` an index query omits its own row, a vector query omits
    every stored point identical to it.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    if isinstance(query, (int, np.integer)):
        q = points[int(query)][None, :]
        exclude = np.array([int(query) if exclude_self else -1], dtype=np.int64)
        eligible = n - (1 if exclude_self else 0)
    else:
        q = np.ascontiguousarray(query, dtype=np.float64)[None, :]
        exclude = np.array([-1], dtype=np.int64)
        eligible = n
        if exclude_self:
            dup = np.flatnonzero((points == q).all(axis=1))
            eligible = n - len(dup)
            if len(dup) == 1:
                exclude[0] = dup[0]
            elif len(dup) > 1:
                # fall back to a masked scan; the fast path can exclude one index only
                d2 = ((points - q) ** 2).sum(axis=1)
                d2[dup] = np.inf
                if k > eligible:
                    raise ValueError(f"k={k} exceeds the {eligible} eligible points")
                return np.argsort(d2, kind="stable")[:k]
    if k > eligible:
        raise ValueError(f"k={k} exceeds the {eligible} eligible points")
    return knn_search(points, q, k, exclude)[0]


def _class_neighbour_table(X_cls: np.ndarray, k: int) -> np.ndarray:
    """Self-excluded k-NN table among one class's samples."""
    pts = np.ascontiguousarray(X_cls, dtype=np.float64)
    exclude = np.arange(pts.shape[0], dtype=np.int64)
    return knn_search(pts, pts, k, exclude)


def smote_oversample(dataset: Dataset, config: ResampleConfig, rng: np.random.Generator):
    """Interpolated synthetic samples until every class hits its target count.

    Each synthetic point is x + u * (x_nn - x) for a same-class neighbour
    x_nn and u ~ U[0, 1); originals are kept untouched as a prefix of the
    output.  Returns (augmented dataset, SmoteInfo).
    """
    counts = dataset.class_counts()
    present = [c for c in SEVERITY_CLASSES if counts[c] > 0]
    if config.target is None:
        majority = max(counts.values())
        target = {c: majority for c in present}
    else:
        target = {c: int(config.target.get(c, counts[c])) for c in present}
    class_index = {c: i for i, c in enumerate(SEVERITY_CLASSES)}

    new_X, new_y = [], []
    info = SmoteInfo()
    for cls in present:
        need = target[cls] - counts[cls]
        if need <= 0:
            continue
        if counts[cls] < 2:
            raise ResampleError(f"class {cls} has {counts[cls]} sample(s); SMOTE needs at least 2")
        idx = np.flatnonzero(dataset.y == class_index[cls])
        X_cls = dataset.X[idx]
        k = min(config.k_smote, counts[cls] - 1)
        neighbours = _class_neighbour_table(X_cls, k)
        base = rng.integers(0, counts[cls], size=need)
        pick = rng.integers(0, k, size=need)
        u = rng.random(need)
        x0 = X_cls[base]
        x1 = X_cls[neighbours[base, pick]]
        new_X.append(x0 + u[:, None] * (x1 - x0))
        new_y.append(np.full(need, class_index[cls], dtype=np.int64))
        nb_global = idx[neighbours[base, pick]]
        info.generators.extend(zip(idx[base].tolist(), nb_global.tolist(), u.tolist()))

    if new_X:
        X = np.vstack([dataset.X] + new_X)
        y = np.concatenate([dataset.y] + new_y)
    else:
        X, y = dataset.X.copy(), dataset.y.copy()
    out = Dataset(X=X, y=y)
    info.synthesized = {c: out.class_counts()[c] - counts[c] for c in present}
    return out, info


def _majority_vote(neighbour_labels: np.ndarray) -> np.ndarray:
    """Most frequent class per row; count ties break to the lower class index."""
    n = neighbour_labels.shape[0]
    votes = np.zeros((n, len(SEVERITY_CLASSES)), dtype=np.int64)
    for c in range(len(SEVERITY_CLASSES)):
        votes[:, c] = (neighbour_labels == c).sum(axis=1)
    return votes.argmax(axis=1)  # argmax takes the first maximum: lower class wins ties


def enn_edit(dataset: Dataset, config: ResampleConfig):
    """Drop samples whose k-NN majority label (self excluded) disagrees.

    All removal decisions are taken against the original dataset and then
    applied at once; every class is subject to editing.  Returns
    (edited dataset, per-class removed counts).
    """
    n = len(dataset)
    if config.k_enn >= n:
        raise ValueError(f"k_enn={config.k_enn} must be smaller than the dataset size {n}")
    pts = np.ascontiguousarray(dataset.X, dtype=np.float64)
    exclude = np.arange(n, dtype=np.int64)
    neighbours = knn_search(pts, pts, config.k_enn, exclude)
    majority = _majority_vote(dataset.y[neighbours])
    keep = majority == dataset.y
    before = dataset.class_counts()
    edited = Dataset(X=dataset.X[keep].copy(), y=dataset.y[keep].copy())
    after = edited.class_counts()
    removed = {c: before[c] - after[c] for c in SEVERITY_CLASSES if before[c] > 0}
    return edited, removed


def smoteenn(dataset: Dataset, config: ResampleConfig, rng: np.random.Generator):
    """SMOTE then ENN; the report carries all three count snapshots."""
    report = ResampleReport()
    report.before = {c: n for c, n in dataset.class_counts().items() if n > 0}
    oversampled, _ = smote_oversample(dataset, config, rng)
    report.after_smote = {c: n for c, n in oversampled.class_counts().items() if c in report.before}
    edited, _ = enn_edit(oversampled, config)
    report.after_enn = {c: n for c, n in edited.class_counts().items() if c in report.before}
    return edited, report
