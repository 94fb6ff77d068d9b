"""Sparse-attention exponential feature-interaction classifier.

Per head and interaction slot, a query scores every field embedding
through a key projection, the scores pass through sparsemax (so most
fields drop out exactly), a sigmoid gate scales the surviving weights,
and the result is used as exponents over log-transformed embeddings:

    c = exp(sum_f g * alpha_f * ln(relu(e_f) + eps))

i.e. a multiplicative cross feature whose factor set the attention picks.
Interactions are concatenated with the raw embeddings and fed to a dense
classifier head.
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
class ArmNetConfig:
    embed_dim: int = 8
    n_heads: int = 4
    n_interactions: int = 8  # slots per head
    hidden_dim: int = 128
    num_layers: int = 4
    dropout_rate: float = 0.3
    output_dim: int = 3
    epsilon: float = 1e-6  # positivity floor before the log

    def __post_init__(self):
        for name in ("embed_dim", "n_heads", "n_interactions", "hidden_dim", "num_layers", "output_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")


@dataclass
class ArmNetParams:
    config: ArmNetConfig
    fields: list[FieldSpec]
    arrays: dict = field(default_factory=dict)

    @property
    def head_input_dim(self) -> int:
        cfg = self.config
        return cfg.n_heads * cfg.n_interactions * cfg.embed_dim + len(self.fields) * cfg.embed_dim


def armnet_init(config: ArmNetConfig, schema: FeatureSchema, rng: np.random.Generator) -> ArmNetParams:
    """Scaled-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases and gates."""
    fields = fields_from_schema(schema)
    if not fields:
        raise ShapeError("schema has no feature fields")
    d, h, k = config.embed_dim, config.n_heads, config.n_interactions
    arrays: dict[str, np.ndarray] = {}
    for f in fields:
        arrays[f"embed.{f.name}"] = glorot_uniform(rng, (f.width, d), f.width, d)
    arrays["attn.key_proj"] = glorot_uniform(rng, (h, d, d), d, d)
    arrays["attn.queries"] = glorot_uniform(rng, (h, k, d), d, 1)
    arrays["attn.gates"] = np.zeros((h, k))  # sigmoid(0) = 0.5, a neutral start
    in_dim = h * k * d + len(fields) * d
    for layer in range(config.num_layers):
        arrays[f"mlp.{layer}.w"] = glorot_uniform(rng, (in_dim, config.hidden_dim), in_dim, config.hidden_dim)
        arrays[f"mlp.{layer}.b"] = np.zeros(config.hidden_dim)
        in_dim = config.hidden_dim
    arrays["out.w"] = glorot_uniform(rng, (in_dim, config.output_dim), in_dim, config.output_dim)
    arrays["out.b"] = np.zeros(config.output_dim)
    return ArmNetParams(config=config, fields=fields, arrays=arrays)


def field_embed(X, params: ArmNetParams, tape=None) -> ad.Tensor:
    """Embed every field of an encoded batch: (batch, n_fields, embed_dim)."""
    X = check_batch(X, params.fields)
    return embed_fields(X, params.fields, as_tensors(params.arrays, tape))


def exp_interaction(embeddings: ad.Tensor, key_proj: ad.Tensor, queries: ad.Tensor,
                    gates: ad.Tensor, epsilon: float, return_attention: bool = False):
    """Multiplicative cross features, (batch, heads, slots, embed_dim).

    embeddings: (batch, fields, dim); key_proj: (heads, dim, dim);
    queries: (heads, slots, dim); gates: (heads, slots).
    """
    keys = ad.einsum("bfd,hcd->bhfc", embeddings, key_proj)
    scores = ad.einsum("bhfc,hkc->bhkf", keys, queries)
    alpha = ad.sparsemax(scores)  # over fields; exact zeros filter noise
    h, k = gates.data.shape
    gate = ad.reshape(ad.sigmoid(gates), (1, h, k, 1))
    exponents = ad.mul(alpha, gate)
    logs = ad.log(ad.add(ad.relu(embeddings), epsilon))
    inter = ad.exp(ad.einsum("bhkf,bfd->bhkd", exponents, logs))
    if return_attention:
        return inter, alpha
    return inter


def armnet_forward(X, params: ArmNetParams, mode: str = "eval",
                   rng: np.random.Generator | None = None, tape=None,
                   return_internals: bool = False):
    """Logits (batch, output_dim); train mode applies dropout via ``rng``."""
    X = check_batch(X, params.fields)
    cfg = params.config
    tensors = as_tensors(params.arrays, tape)
    emb = embed_fields(X, params.fields, tensors)
    inter, alpha = exp_interaction(emb, tensors["attn.key_proj"], tensors["attn.queries"],
                                   tensors["attn.gates"], cfg.epsilon, return_attention=True)
    batch = X.shape[0]
    m = len(params.fields)
    flat = ad.concat([
        ad.reshape(inter, (batch, cfg.n_heads * cfg.n_interactions * cfg.embed_dim)),
        ad.reshape(emb, (batch, m * cfg.embed_dim)),
    ], axis=1)
    x = flat
    for layer in range(cfg.num_layers):
        x = ad.relu(dense(x, tensors[f"mlp.{layer}.w"], tensors[f"mlp.{layer}.b"]))
        x = ad.dropout_apply(x, cfg.dropout_rate, mode, rng)
    logits = dense(x, tensors["out.w"], tensors["out.b"])
    if return_internals:
        return logits, {"attention": alpha.data, "interactions": inter.data}
    return logits
