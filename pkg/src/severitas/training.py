"""Cross-entropy training with AdamW, plateau scheduling and early stopping.

One ``train_model`` call owns a single derived generator that drives batch
shuffling and dropout in a fixed order, so a (seed, data, hyperparams)
triple maps to one bit-exact training trajectory per platform.  Random
hyperparameter search runs independent trials with per-trial derived
seeds; a thread pool may evaluate them concurrently (results are collected
by trial index, identical to the sequential order).
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .armnet import ArmNetConfig, armnet_forward, armnet_init
from .errors import ShapeError
from .ingest import Dataset, FeatureSchema
from .layers import clone_arrays
from .mambanet import MambaNetConfig, mambanet_forward, mambanet_init
from .seeding import derive_rng, derive_seed

MODEL_KINDS = ("armnet", "mambanet")


def model_init(kind: str, config, schema: FeatureSchema, rng: np.random.Generator):
    if kind == "armnet":
        return armnet_init(config, schema, rng)
    if kind == "mambanet":
        return mambanet_init(config, schema, rng)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def model_forward(kind: str, X, params, mode="eval", rng=None, tape=None):
    if kind == "armnet":
        return armnet_forward(X, params, mode=mode, rng=rng, tape=tape)
    if kind == "mambanet":
        return mambanet_forward(X, params, mode=mode, rng=rng, tape=tape)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def default_config(kind: str):
    return ArmNetConfig() if kind == "armnet" else MambaNetConfig()


@dataclass
class HyperParams:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    epochs: int = 50
    batch_size: int = 32
    model_config: object = None  # ArmNetConfig or MambaNetConfig

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def cross_entropy_loss(logits, labels) -> ad.Tensor:
    """Mean negative log softmax probability of the true class (see autodiff)."""
    return ad.cross_entropy_with_logits(logits, labels)


# ---------------------------------------------------------------------------
# AdamW with decoupled weight decay
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_params(arrays: dict) -> "OptimizerState":
        return OptimizerState(m={k: np.zeros_like(a) for k, a in arrays.items()},
                              v={k: np.zeros_like(a) for k, a in arrays.items()})


def adamw_step(arrays: dict, grads: dict, state: OptimizerState,
               lr: float, weight_decay: float) -> None:
    """In-place bias-corrected Adam update plus decoupled decay.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
    """
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, theta in arrays.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {theta.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        # decay term uses the pre-update theta (decoupled, not L2-in-gradient)
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps) + lr * weight_decay * theta


# ---------------------------------------------------------------------------
# reduce-on-plateau scheduler
# ---------------------------------------------------------------------------

@dataclass
class SchedulerState:
    lr: float
    best: float = np.inf
    since: int = 0
    factor: float = 0.5
    patience: int = 5
    min_lr: float = 1e-6
    threshold: float = 1e-8


def plateau_step(state: SchedulerState, val_loss: float) -> float:
    """Update the plateau counter; reduce lr after patience+1 stale epochs."""
    if not np.isfinite(val_loss):
        raise ValueError(f"validation loss must be finite, got {val_loss}")
    if val_loss < state.best - state.threshold:
        state.best = val_loss
        state.since = 0
    else:
        state.since += 1
        if state.since > state.patience:
            state.lr = max(state.lr * state.factor, state.min_lr)
            state.since = 0
    return state.lr


@dataclass
class EarlyStopState:
    patience: int = 10
    best: float = np.inf
    best_epoch: int = 0
    since: int = 0
    snapshot: Optional[dict] = None

    def update(self, val_loss: float, epoch: int, arrays: dict) -> bool:
        """Record the epoch; returns True when training should stop."""
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.since = 0
            self.snapshot = clone_arrays(arrays)
            return False
        self.since += 1
        return self.since >= self.patience


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainResult:
    params: object  # ArmNetParams or MambaNetParams, best-epoch weights restored
    curve: list
    best_epoch: int
    epochs_ran: int
    stopped_early: bool
    val_loss: float
    val_accuracy: float
    optimizer_steps: int = 0


def save_loss_curve(curve, path) -> None:
    """CSV ``epoch,train_loss,val_loss,lr``, one row per completed epoch."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for rec in curve:
            writer.writerow([rec.epoch, repr(float(rec.train_loss)),
                             repr(float(rec.val_loss)), repr(float(rec.lr))])


def _eval_loss_and_accuracy(kind, params, X, y):
    logits = model_forward(kind, X, params, mode="eval").data
    loss = float(cross_entropy_loss(logits, y).data)
    accuracy = float((logits.argmax(axis=1) == y).mean())
    return loss, accuracy


def train_model(kind: str, train: Dataset, val: Dataset, hyper: HyperParams,
                schema: FeatureSchema, seed: int,
                scheduler: Optional[SchedulerState] = None,
                early_stop: Optional[EarlyStopState] = None,
                progress: Optional[Callable] = None) -> TrainResult:
    """Mini-batch AdamW training with plateau scheduling and early stopping.

    The best-validation-epoch snapshot is restored before returning.  Epoch
    accounting: ceil(train/batch) optimizer steps per epoch, last partial
    batch kept (mean-reduced loss keeps it unbiased).
    """
    if len(train) == 0 or len(val) == 0:
        raise ValueError("train and validation splits must be nonempty")
    config = hyper.model_config if hyper.model_config is not None else default_config(kind)
    init_rng = derive_rng(seed, 1)
    batch_rng = derive_rng(seed, 2)
    params = model_init(kind, config, schema, init_rng)
    opt = OptimizerState.for_params(params.arrays)
    sched = scheduler if scheduler is not None else SchedulerState(lr=hyper.lr)
    stopper = early_stop if early_stop is not None else EarlyStopState()

    curve: list[EpochRecord] = []
    n = len(train)
    stopped_early = False
    for epoch in range(1, hyper.epochs + 1):
        lr_used = sched.lr
        order = batch_rng.permutation(n)
        total = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            tape = ad.GradTape()
            logits = model_forward(kind, train.X[idx], params, mode="train", rng=batch_rng, tape=tape)
            loss = cross_entropy_loss(logits, train.y[idx])
            grads_by_id = ad.backward(tape, loss)
            grads = {name: grads_by_id[nid] for name, nid in zip(params.arrays, tape.leaf_ids())}
            adamw_step(params.arrays, grads, opt, lr_used, hyper.weight_decay)
            total += float(loss.data) * len(idx)
        train_loss = total / n
        val_loss, _ = _eval_loss_and_accuracy(kind, params, val.X, val.y)
        curve.append(EpochRecord(epoch, train_loss, val_loss, lr_used))
        if progress is not None:
            progress(curve[-1])
        plateau_step(sched, val_loss)
        if stopper.update(val_loss, epoch, params.arrays):
            stopped_early = True
            break

    if stopper.snapshot is not None:
        params.arrays = stopper.snapshot
    val_loss, val_acc = _eval_loss_and_accuracy(kind, params, val.X, val.y)
    return TrainResult(params=params, curve=curve, best_epoch=stopper.best_epoch,
                       epochs_ran=len(curve), stopped_early=stopped_early,
                       val_loss=val_loss, val_accuracy=val_acc, optimizer_steps=opt.step)


# ---------------------------------------------------------------------------
# random hyperparameter search
# ---------------------------------------------------------------------------

# Search space values: list of choices, or ("log_uniform", low, high).
DEFAULT_SEARCH_SPACE = {
    "hidden_dim": [64, 128, 256],
    "num_layers": [2, 3, 4],
    "dropout_rate": [0.1, 0.3, 0.5],
    "lr": ("log_uniform", 1e-4, 1e-2),
    "weight_decay": [1e-5, 1e-4, 1e-3],
    "batch_size": [32, 64],
}


@dataclass
class TrialResult:
    trial: int
    hyperparams: dict
    val_accuracy: float
    val_loss: float
    epochs_ran: int
    seed: int

    def to_json_dict(self) -> dict:
        return asdict(self)


def sample_hyperparams(space: dict, rng: np.random.Generator) -> dict:
    """One draw from the declared space, keys in declaration order."""
    out = {}
    for name, choices in space.items():
        if isinstance(choices, tuple) and choices and choices[0] == "log_uniform":
            _, low, high = choices
            out[name] = float(np.exp(rng.uniform(np.log(low), np.log(high))))
        else:
            seq = list(choices)
            out[name] = seq[int(rng.integers(0, len(seq)))]
    return out


def build_hyperparams(kind: str, sampled: dict, epochs: int = 50) -> HyperParams:
    """Map a sampled point onto a model config plus optimizer settings."""
    sampled = dict(sampled)
    hidden = int(sampled.pop("hidden_dim", 128))
    layers = int(sampled.pop("num_layers", 2 if kind == "mambanet" else 4))
    dropout = float(sampled.pop("dropout_rate", 0.3))
    if kind == "armnet":
        config = ArmNetConfig(hidden_dim=hidden, num_layers=layers, dropout_rate=dropout)
    else:
        dims = tuple(max(hidden // (2 ** i), 8) for i in range(layers))
        config = MambaNetConfig(hidden_dims=dims, dropout_rate=dropout)
    return HyperParams(lr=float(sampled.pop("lr", 1e-3)),
                       weight_decay=float(sampled.pop("weight_decay", 1e-4)),
                       epochs=epochs,
                       batch_size=int(sampled.pop("batch_size", 32)),
                       model_config=config)


def random_search(kind: str, train: Dataset, val: Dataset, schema: FeatureSchema,
                  space: dict | None = None, n_trials: int = 100, seed: int = 0,
                  epochs: int = 50, workers: int | None = None) -> list:
    """n_trials independent draws, each trained from scratch; ranked results.

    Ranking: validation accuracy descending, ties by validation loss then
    trial index.  ``workers`` defaults to the SEVERITAS_THREADS env var (1).
    """
    if space is None:
        space = DEFAULT_SEARCH_SPACE
    if not space:
        raise ValueError("search space must be nonempty")

    def run_trial(i: int) -> TrialResult:
        trial_seed = derive_seed(seed, 100 + i)
        sampled = sample_hyperparams(space, derive_rng(seed, 200 + i))
        hyper = build_hyperparams(kind, sampled, epochs=epochs)
        result = train_model(kind, train, val, hyper, schema, trial_seed)
        return TrialResult(trial=i, hyperparams=sampled, val_accuracy=result.val_accuracy,
                           val_loss=result.val_loss, epochs_ran=result.epochs_ran, seed=trial_seed)

    if workers is None:
        workers = int(os.environ.get("SEVERITAS_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_trial, range(n_trials)))
    else:
        results = [run_trial(i) for i in range(n_trials)]
    return sorted(results, key=lambda r: (-r.val_accuracy, r.val_loss, r.trial))
