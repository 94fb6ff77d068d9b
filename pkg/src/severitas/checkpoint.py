"""Versioned model checkpoints pinned to a schema fingerprint.

JSON envelope with base64-encoded little-endian float64 arrays: diffable,
platform-portable, and byte-stable so identical runs write identical files.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict

import numpy as np

from .armnet import ArmNetConfig, ArmNetParams
from .errors import CheckpointError
from .ingest import FeatureSchema
from .layers import FieldSpec
from .mambanet import MambaNetConfig, MambaNetParams

FORMAT_VERSION = 1


def _encode_array(a: np.ndarray) -> dict:
    comp = np.ascontiguousarray(a, dtype=np.float64)
    if comp.dtype.byteorder == ">":  # keep files little-endian everywhere
        comp = comp.astype("<f8")
    return {"shape": list(comp.shape), "data": base64.b64encode(comp.tobytes()).decode("ascii")}


def _decode_array(d: dict) -> np.ndarray:
    buf = base64.b64decode(d["data"])
    return np.frombuffer(buf, dtype="<f8").reshape(d["shape"]).copy()


def save_checkpoint(path, kind: str, params, schema: FeatureSchema) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "model_kind": kind,
        "schema_fingerprint": schema.fingerprint(),
        "config": asdict(params.config),
        "fields": [{"name": f.name, "kind": f.kind, "start": f.start, "stop": f.stop}
                   for f in params.fields],
        "arrays": {name: _encode_array(a) for name, a in params.arrays.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path, schema: FeatureSchema):
    """Returns (kind, params); raises CheckpointError on any mismatch."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is not valid JSON: {exc}") from None
    if payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('format_version')!r}")
    if payload["schema_fingerprint"] != schema.fingerprint():
        raise CheckpointError(
            f"checkpoint was trained against a different schema "
            f"(fingerprint {payload['schema_fingerprint'][:12]}… != {schema.fingerprint()[:12]}…)")
    kind = payload["model_kind"]
    fields = [FieldSpec(**f) for f in payload["fields"]]
    arrays = {name: _decode_array(d) for name, d in payload["arrays"].items()}
    cfg = payload["config"]
    if kind == "armnet":
        params = ArmNetParams(config=ArmNetConfig(**cfg), fields=fields, arrays=arrays)
    elif kind == "mambanet":
        cfg["hidden_dims"] = tuple(cfg["hidden_dims"])
        params = MambaNetParams(config=MambaNetConfig(**cfg), fields=fields, arrays=arrays)
    else:
        raise CheckpointError(f"unknown model kind {kind!r} in checkpoint")
    return kind, params
