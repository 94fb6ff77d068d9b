"""Stage orchestration: config file, derived seeds, checkpointed artifacts.

Each stage reads the artifacts of the previous one from ``out_dir`` and
writes its own atomically (temp file + rename), so stages are idempotent
and independently re-runnable.  One master seed fans out to the split,
resampling, training, tuning and importance stages via fixed tags.
"""

from __future__ import annotations

import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import PipelineError, SchemaError
from .ingest import (FeatureSchema, SchemaConfig, SplitSpec, fit_schema, load_csv,
                     load_encoded_csv, save_encoded_csv, stratified_assignment,
                     transform)
from .reporting import (evaluate_model, save_distribution_csv, save_metrics_json,
                        severity_distribution_report)
from .resample import ResampleConfig, smoteenn
from .training import (DEFAULT_SEARCH_SPACE, HyperParams, TrainResult, build_hyperparams,
                       default_config, random_search, save_loss_curve, train_model)

ENCODED = {"train": "encoded_train.csv", "val": "encoded_val.csv", "test": "encoded_test.csv"}
RESAMPLED = "resampled_train.csv"
SCHEMA = "schema.json"


@dataclass
class PipelineConfig:
    input_csv: Path
    schema_config: Path
    out_dir: Path
    seed: int = 0
    mode: str | None = None  # overrides the schema config's mode when set
    split: dict = field(default_factory=dict)
    resample: dict = field(default_factory=dict)
    model: str = "armnet"
    hyperparams: dict = field(default_factory=dict)
    search_space: dict | None = None
    year_column: str = "year"

    @staticmethod
    def from_json_file(path) -> "PipelineConfig":
        base = Path(path).parent
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)

        def respath(p):
            p = Path(p)
            return p if p.is_absolute() else base / p

        cfg = PipelineConfig(
            input_csv=respath(raw["input_csv"]),
            schema_config=respath(raw["schema_config"]),
            out_dir=respath(raw["out_dir"]),
            seed=int(raw.get("seed", 0)),
            mode=raw.get("mode"),
            split=raw.get("split", {}),
            resample=raw.get("resample", {}),
            model=raw.get("model", "armnet"),
            hyperparams=raw.get("hyperparams", {}),
            search_space=raw.get("search_space"),
            year_column=raw.get("year_column", "year"),
        )
        if not 0 <= cfg.seed < 2 ** 64:
            raise PipelineError(f"seed must be an unsigned 64-bit integer, got {cfg.seed}")
        for p, what in ((cfg.input_csv, "input_csv"), (cfg.schema_config, "schema_config")):
            if not p.exists():
                raise PipelineError(f"config {what} does not exist: {p}")
        return cfg


@contextmanager
def atomic_path(final: Path):
    """Yield a temp path; rename onto the final name when the writer succeeds."""
    final = Path(final)
    tmp = final.with_name(final.name + ".tmp")
    yield tmp
    os.replace(tmp, final)


def _require(path: Path, produced_by: str) -> Path:
    if not Path(path).exists():
        raise PipelineError(f"missing upstream artifact {path} (run '{produced_by}' first)")
    return Path(path)


def _load_schema(out_dir: Path) -> FeatureSchema:
    with open(_require(out_dir / SCHEMA, "severitas ingest"), "r", encoding="utf-8") as fh:
        return FeatureSchema.from_json_dict(json.load(fh))


def _write_json(path: Path, payload: dict) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_ingest(cfg: PipelineConfig) -> dict:
    """Load, split (first!), fit encoders on the training rows, encode all."""
    schema_cfg = SchemaConfig.from_json_file(cfg.schema_config)
    if cfg.mode is not None:
        schema_cfg.mode = cfg.mode
    raw = load_csv(cfg.input_csv, schema_cfg)
    split = SplitSpec(**{"seed": seeding.derive_seed(cfg.seed, seeding.STAGE_SPLIT), **cfg.split})
    labels = [r[schema_cfg.label_column] for r in raw.rows]
    class_to_idx = {"KA": 0, "BC": 1, "O": 2}
    y_raw = np.array([class_to_idx.get(v, -1) for v in labels])
    if (y_raw < 0).any():
        bad = labels[int(np.argmax(y_raw < 0))]
        raise SchemaError(f"label {bad!r} is not one of KA/BC/O")
    tags = stratified_assignment(y_raw, split)

    train_rows = [i for i, t in enumerate(tags) if t == "train"]
    schema = fit_schema(raw.subset(train_rows), schema_cfg)

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    unseen_total: dict[str, int] = {}
    counts = {}
    for tag, fname in ENCODED.items():
        rows = [i for i, t in enumerate(tags) if t == tag]
        ds, unseen = transform(raw.subset(rows), schema, mode=schema_cfg.mode)
        for col, n in unseen.items():
            unseen_total[col] = unseen_total.get(col, 0) + n
        with atomic_path(cfg.out_dir / fname) as tmp:
            save_encoded_csv(ds, tmp, schema)
        counts[tag] = {"rows": len(ds), **ds.class_counts()}
    _write_json(cfg.out_dir / SCHEMA, schema.to_json_dict())
    report = {
        "rows_loaded": len(raw),
        "rows_dropped": raw.dropped_rows,
        "dropped_by_column": raw.dropped_by_column,
        "unseen_categories": unseen_total,
        "encoded_width": schema.encoded_width,
        "splits": counts,
    }
    _write_json(cfg.out_dir / "ingest_report.json", report)
    return report


def run_resample(cfg: PipelineConfig) -> dict:
    """SMOTEENN over the encoded training split only."""
    schema = _load_schema(cfg.out_dir)
    train = load_encoded_csv(_require(cfg.out_dir / ENCODED["train"], "severitas ingest"))
    rc = ResampleConfig(**cfg.resample)
    rng = seeding.derive_rng(cfg.seed, seeding.STAGE_SMOTE)
    resampled, report = smoteenn(train, rc, rng)
    with atomic_path(cfg.out_dir / RESAMPLED) as tmp:
        save_encoded_csv(resampled, tmp, schema)
    _write_json(cfg.out_dir / "resample_report.json", report.to_json_dict())
    return report.to_json_dict()


def _model_tag(model: str) -> int:
    return 1 if model == "armnet" else 2


def _hyperparams_for(cfg: PipelineConfig, model: str) -> HyperParams:
    hp = dict(cfg.hyperparams)
    model_keys = {"hidden_dim", "num_layers", "dropout_rate"}
    sampled = {k: hp.pop(k) for k in list(hp) if k in model_keys}
    epochs = int(hp.pop("epochs", 50))
    base = build_hyperparams(model, sampled, epochs=epochs)
    return HyperParams(lr=float(hp.get("lr", base.lr)),
                       weight_decay=float(hp.get("weight_decay", base.weight_decay)),
                       epochs=epochs,
                       batch_size=int(hp.get("batch_size", base.batch_size)),
                       model_config=base.model_config)


def run_train(cfg: PipelineConfig, model: str | None = None, progress=None) -> TrainResult:
    model = model or cfg.model
    schema = _load_schema(cfg.out_dir)
    train = load_encoded_csv(_require(cfg.out_dir / RESAMPLED, "severitas resample"))
    val = load_encoded_csv(_require(cfg.out_dir / ENCODED["val"], "severitas ingest"))
    hyper = _hyperparams_for(cfg, model)
    seed = seeding.derive_seed(cfg.seed, seeding.STAGE_TRAIN, _model_tag(model))
    result = train_model(model, train, val, hyper, schema, seed, progress=progress)
    with atomic_path(cfg.out_dir / f"checkpoint_{model}.json") as tmp:
        save_checkpoint(tmp, model, result.params, schema)
    with atomic_path(cfg.out_dir / f"loss_curve_{model}.csv") as tmp:
        save_loss_curve(result.curve, tmp)
    return result


def run_evaluate(cfg: PipelineConfig, model: str | None = None, split: str = "test") -> dict:
    model = model or cfg.model
    schema = _load_schema(cfg.out_dir)
    kind, params = load_checkpoint(
        _require(cfg.out_dir / f"checkpoint_{model}.json", f"severitas train --model {model}"), schema)
    data = load_encoded_csv(_require(cfg.out_dir / ENCODED[split], "severitas ingest"))
    result = evaluate_model(kind, params, data)
    with atomic_path(cfg.out_dir / f"metrics_{model}.json") as tmp:
        save_metrics_json(result, model, split, tmp)
    with atomic_path(cfg.out_dir / f"confusion_{model}.csv") as tmp:
        result.cm.to_csv(tmp)
    with atomic_path(cfg.out_dir / f"confusion_{model}_rownorm.csv") as tmp:
        result.cm.to_csv(tmp, normalized=True)
    return result.to_json_dict(model, split)


def run_tune(cfg: PipelineConfig, model: str | None = None, trials: int = 100) -> list:
    model = model or cfg.model
    schema = _load_schema(cfg.out_dir)
    train = load_encoded_csv(_require(cfg.out_dir / RESAMPLED, "severitas resample"))
    val = load_encoded_csv(_require(cfg.out_dir / ENCODED["val"], "severitas ingest"))
    space = cfg.search_space if cfg.search_space is not None else DEFAULT_SEARCH_SPACE
    space = {k: (tuple(v) if isinstance(v, (list, tuple)) and v and v[0] == "log_uniform" else v)
             for k, v in space.items()}
    epochs = int(cfg.hyperparams.get("epochs", 50))
    seed = seeding.derive_seed(cfg.seed, seeding.STAGE_TUNE, _model_tag(model))
    ranked = random_search(model, train, val, schema, space=space, n_trials=trials,
                           seed=seed, epochs=epochs)
    with atomic_path(cfg.out_dir / f"trials_{model}.jsonl") as tmp:
        with open(tmp, "w", encoding="utf-8") as fh:
            for r in ranked:
                fh.write(json.dumps(r.to_json_dict(), sort_keys=True) + "\n")
    best = ranked[0]
    _write_json(cfg.out_dir / f"best_config_{model}.json",
                {"model": model, "hyperparams": best.hyperparams,
                 "val_accuracy": best.val_accuracy, "val_loss": best.val_loss,
                 "trial": best.trial, "seed": best.seed})
    return ranked


def run_report(cfg: PipelineConfig) -> list:
    schema_cfg = SchemaConfig.from_json_file(cfg.schema_config)
    if cfg.mode is not None:
        schema_cfg.mode = cfg.mode
    raw = load_csv(cfg.input_csv, schema_cfg)
    rows = severity_distribution_report(raw, cfg.year_column, schema_cfg.label_column)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    with atomic_path(cfg.out_dir / "severity_by_year.csv") as tmp:
        save_distribution_csv(rows, tmp)
    return rows
