"""Conv + LSTM hybrid classifier over the field sequence.

Fields are read as a sequence in schema declaration order (tabular data has
no natural order; the choice is fixed and the model is order-sensitive by
construction).  Each field embeds to ``embed_channels``, a 1-D convolution
mixes neighbouring fields, an LSTM scans the result and its final hidden
state feeds a small dense head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ShapeError
from .ingest import FeatureSchema
from .layers import (FieldSpec, as_tensors, check_batch, dense, embed_fields,
                     fields_from_schema, glorot_uniform)


@dataclass
class MambaNetConfig:
    embed_channels: int = 16
    conv_out_channels: int = 32
    conv_kernel: int = 3
    conv_padding: int = 1
    conv_layers: int = 1  # 1 or 2 stacked conv+ReLU blocks
    lstm_hidden: int = 64
    hidden_dims: tuple = (128, 64)
    dropout_rate: float = 0.3
    output_dim: int = 3

    def __post_init__(self):
        self.hidden_dims = tuple(self.hidden_dims)
        if not self.hidden_dims:
            raise ValueError("hidden_dims must be nonempty")
        if self.conv_kernel % 2 == 0:
            raise ValueError(f"conv kernel must be odd, got {self.conv_kernel}")
        if self.conv_layers not in (1, 2):
            raise ValueError(f"conv_layers must be 1 or 2, got {self.conv_layers}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        for name in ("embed_channels", "conv_out_channels", "lstm_hidden", "output_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class MambaNetParams:
    config: MambaNetConfig
    fields: list[FieldSpec]
    arrays: dict = field(default_factory=dict)


def mambanet_init(config: MambaNetConfig, schema: FeatureSchema, rng: np.random.Generator) -> MambaNetParams:
    """Same init family as the attention model; LSTM forget-gate bias starts at 1."""
    fields = fields_from_schema(schema)
    if not fields:
        raise ShapeError("schema has no feature fields")
    ce, co, k, hl = config.embed_channels, config.conv_out_channels, config.conv_kernel, config.lstm_hidden
    if k > len(fields) + 2 * config.conv_padding:
        raise ShapeError(f"conv kernel {k} wider than padded field sequence "
                         f"{len(fields) + 2 * config.conv_padding}")
    arrays: dict[str, np.ndarray] = {}
    for f in fields:
        arrays[f"embed.{f.name}"] = glorot_uniform(rng, (f.width, ce), f.width, ce)
    arrays["conv.w"] = glorot_uniform(rng, (co, ce, k), ce * k, co * k)
    arrays["conv.b"] = np.zeros(co)
    if config.conv_layers == 2:
        arrays["conv2.w"] = glorot_uniform(rng, (co, co, k), co * k, co * k)
        arrays["conv2.b"] = np.zeros(co)
    arrays["lstm.wx"] = glorot_uniform(rng, (co, 4 * hl), co, 4 * hl)
    arrays["lstm.wh"] = glorot_uniform(rng, (hl, 4 * hl), hl, 4 * hl)
    lstm_b = np.zeros(4 * hl)
    lstm_b[hl:2 * hl] = 1.0  # forget gate open at init
    arrays["lstm.b"] = lstm_b
    in_dim = hl
    for layer, width in enumerate(config.hidden_dims):
        arrays[f"head.{layer}.w"] = glorot_uniform(rng, (in_dim, width), in_dim, width)
        arrays[f"head.{layer}.b"] = np.zeros(width)
        in_dim = width
    arrays["out.w"] = glorot_uniform(rng, (in_dim, config.output_dim), in_dim, config.output_dim)
    arrays["out.b"] = np.zeros(config.output_dim)
    return MambaNetParams(config=config, fields=fields, arrays=arrays)


def sequence_embed(X, params: MambaNetParams, tape=None) -> ad.Tensor:
    """Field sequence (batch, n_fields, embed_channels), declaration order."""
    X = check_batch(X, params.fields)
    return embed_fields(X, params.fields, as_tensors(params.arrays, tape))


def _conv_stage(X, params: MambaNetParams, tensors) -> ad.Tensor:
    """Embed + convolve + ReLU (one or two blocks): (batch, conv_out, length_out)."""
    cfg = params.config
    seq = embed_fields(X, params.fields, tensors)  # (b, m, ce)
    x = ad.transpose(seq, (0, 2, 1))  # (b, ce, m)
    for prefix in ("conv", "conv2")[:cfg.conv_layers]:
        conv = ad.conv1d(x, tensors[f"{prefix}.w"], padding=cfg.conv_padding)
        bias = ad.reshape(tensors[f"{prefix}.b"], (1, cfg.conv_out_channels, 1))
        x = ad.relu(ad.add(conv, bias))
    return x


def mambanet_forward(X, params: MambaNetParams, mode: str = "eval",
                     rng: np.random.Generator | None = None, tape=None) -> ad.Tensor:
    """Logits (batch, output_dim); the LSTM reduces any field count to one state."""
    X = check_batch(X, params.fields)
    cfg = params.config
    tensors = as_tensors(params.arrays, tape)
    conv = _conv_stage(X, params, tensors)
    batch, co, steps = conv.data.shape
    state = ad.LstmState.zeros(batch, cfg.lstm_hidden)
    for t in range(steps):
        x_t = ad.reshape(ad.slice_axis(conv, 2, t, t + 1), (batch, co))
        state = ad.lstm_cell(x_t, state, tensors["lstm.wx"], tensors["lstm.wh"], tensors["lstm.b"])
    x = state.h
    for layer in range(len(cfg.hidden_dims)):
        x = ad.relu(dense(x, tensors[f"head.{layer}.w"], tensors[f"head.{layer}.b"]))
        x = ad.dropout_apply(x, cfg.dropout_rate, mode, rng)
    return dense(x, tensors["out.w"], tensors["out.b"])
