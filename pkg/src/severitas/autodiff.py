"""Dense-tensor numeric core with reverse-mode automatic differentiation.

A ``GradTape`` records every primitive applied to tracked tensors, in
creation order (which is topological by construction).  ``backward`` walks
the tape once in reverse and accumulates vector-Jacobian products into the
leaves.  Tensors hold float64 NumPy arrays; untracked tensors are plain
immutable values and ops touching only those record nothing.

Conventions baked in here and relied on by the tests:

* relu contributes zero gradient at exactly 0;
* sparsemax backward uses the support-set Jacobian (uniform correction
  over the support), sort ties broken by index order;
* dropout uses inverted scaling so eval mode is the identity;
* all stochastic ops take an explicit ``numpy.random.Generator`` — there
  is no hidden global randomness anywhere in the package.

Tapes are single-writer: one tape per training thread.  Tensors without
tape tracking are safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import ShapeError


class Tensor:
    """A dense n-d array, optionally tracked on a gradient tape."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data, tape: Optional["GradTape"] = None, node_id: Optional[int] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self):
        return self.data.shape

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def __repr__(self):
        tag = f", node={self.node_id}" if self.tracked else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # operator sugar; full definitions live below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class TapeEntry:
    """One recorded primitive: output node, input nodes, local-gradient rule."""

    output_id: int
    input_ids: tuple
    backward: Optional[Callable]  # grad_out -> per-input grads; None for leaves
    name: str


class GradTape:
    """Ordered record of primitive applications (single-writer)."""

    def __init__(self):
        self.entries: list[TapeEntry] = []
        self._shapes: dict[int, tuple] = {}

    def __len__(self):
        return len(self.entries)

    def _new_id(self) -> int:
        return len(self.entries)

    def leaf(self, data, name: str = "leaf") -> Tensor:
        """Register an input tensor whose gradient backward() will report."""
        t = Tensor(data, tape=self, node_id=self._new_id())
        self.entries.append(TapeEntry(t.node_id, (), None, name))
        self._shapes[t.node_id] = t.data.shape
        return t

    def _record(self, out_data, inputs: Sequence[Tensor], backward, name: str) -> Tensor:
        out = Tensor(out_data, tape=self, node_id=self._new_id())
        ids = tuple(t.node_id if (t.tape is self) else None for t in inputs)
        self.entries.append(TapeEntry(out.node_id, ids, backward, name))
        self._shapes[out.node_id] = out.data.shape
        return out

    def leaf_ids(self):
        return [e.output_id for e in self.entries if e.backward is None]


def _find_tape(tensors) -> Optional[GradTape]:
    tape = None
    for t in tensors:
        if isinstance(t, Tensor) and t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ValueError("operands belong to different gradient tapes")
            tape = t.tape
    return tape


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _apply(name, inputs, out_data, backward):
    """Record the op if any input is tracked, else return a constant."""
    inputs = [_as_tensor(t) for t in inputs]
    tape = _find_tape(inputs)
    if tape is None:
        return Tensor(out_data)
    return tape._record(out_data, inputs, backward, name)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise primitives
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _apply("add", [a, b], out, bwd)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _apply("sub", [a, b], out, bwd)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _apply("mul", [a, b], out, bwd)


def neg(a):
    a = _as_tensor(a)
    return _apply("neg", [a], -a.data, lambda g: (-g,))


def exp(a):
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _apply("exp", [a], out, lambda g: (g * out,))


def log(a):
    """Natural log; the caller guarantees a positive domain."""
    a = _as_tensor(a)
    ad = a.data
    return _apply("log", [a], np.log(ad), lambda g: (g / ad,))


def relu(a):
    a = _as_tensor(a)
    mask = a.data > 0
    return _apply("relu", [a], np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def sigmoid(a):
    a = _as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _apply("sigmoid", [a], out, lambda g: (g * out * (1.0 - out),))


def tanh(a):
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _apply("tanh", [a], out, lambda g: (g * (1.0 - out * out),))


# ---------------------------------------------------------------------------
# shape and reduction primitives
# ---------------------------------------------------------------------------

def reshape(a, shape):
    a = _as_tensor(a)
    old = a.data.shape
    return _apply("reshape", [a], a.data.reshape(shape), lambda g: (g.reshape(old),))


def transpose(a, axes):
    a = _as_tensor(a)
    inv = np.argsort(axes)
    return _apply("transpose", [a], np.transpose(a.data, axes), lambda g: (np.transpose(g, inv),))


def tensor_sum(a, axis: Optional[int] = None):
    a = _as_tensor(a)
    ad = a.data
    if axis is None:
        out = ad.sum()

        def bwd(g):
            return (np.broadcast_to(g, ad.shape).copy(),)
    else:
        out = ad.sum(axis=axis)

        def bwd(g):
            return (np.broadcast_to(np.expand_dims(g, axis), ad.shape).copy(),)

    return _apply("sum", [a], out, bwd)


def mean(a):
    a = _as_tensor(a)
    return tensor_sum(a) * (1.0 / a.data.size)


def concat(tensors, axis: int):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, offsets, axis=axis))

    return _apply("concat", tensors, out, bwd)


def stack(tensors, axis: int):
    tensors = [_as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def bwd(g):
        moved = np.moveaxis(g, axis, 0)
        return tuple(np.ascontiguousarray(moved[i]) for i in range(len(tensors)))

    return _apply("stack", tensors, out, bwd)


def slice_axis(a, axis: int, start: int, stop: int):
    """Contiguous slice along one axis (gradient scatters back into place)."""
    a = _as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    shape = a.data.shape

    def bwd(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[idx] = g
        return (full,)

    return _apply("slice", [a], np.ascontiguousarray(a.data[idx]), bwd)


# ---------------------------------------------------------------------------
# contractions
# ---------------------------------------------------------------------------

def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}")
    ad, bd = a.data, b.data

    def bwd(g):
        return g @ bd.T, ad.T @ g

    return _apply("matmul", [a, b], ad @ bd, bwd)


def _parse_einsum(subscripts: str):
    lhs, _, out = subscripts.partition("->")
    if not _:
        raise ValueError("einsum spec must be explicit ('ij,jk->ik')")
    in1, _, in2 = lhs.partition(",")
    if not _ or "," in in2:
        raise ValueError("einsum here supports exactly two operands")
    for term in (in1, in2):
        if len(set(term)) != len(term):
            raise ValueError(f"repeated index within one operand: {term!r}")
        if not set(term) <= set(in2 if term is in1 else in1) | set(out):
            raise ValueError(f"index summed out of a single operand: {subscripts!r}")
    return in1, in2, out


def einsum(subscripts: str, a, b):
    """Two-operand contraction; the VJP is the same contraction re-aimed.

    Each input index must appear in the other operand or the output (no
    single-operand reductions), which makes the swap rule exact.
    """
    in1, in2, out_sub = _parse_einsum(subscripts)
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    out = np.einsum(subscripts, ad, bd, optimize=True)

    def bwd(g):
        ga = np.einsum(f"{out_sub},{in2}->{in1}", g, bd, optimize=True)
        gb = np.einsum(f"{out_sub},{in1}->{in2}", g, ad, optimize=True)
        return ga, gb

    return _apply("einsum", [a, b], out, bwd)


# ---------------------------------------------------------------------------
# model-facing primitives
# ---------------------------------------------------------------------------

def sparsemax(z):
    """Euclidean projection of the last axis onto the probability simplex."""
    z = _as_tensor(z)
    if z.data.size == 0 or z.data.shape[-1] == 0:
        raise ValueError("sparsemax of an empty vector")
    shape = z.data.shape
    rows = np.ascontiguousarray(z.data.reshape(-1, shape[-1]))
    p = _kernels.sparsemax_rows(rows).reshape(shape)

    def bwd(g):
        support = p > 0
        counts = support.sum(axis=-1, keepdims=True)
        corr = np.where(support, g, 0.0).sum(axis=-1, keepdims=True) / counts
        return (np.where(support, g - corr, 0.0),)

    return _apply("sparsemax", [z], p, bwd)


def conv1d(x, kernel, padding: int = 0):
    """Cross-correlation with zero padding.

    ``x`` is (c_in, length) or (batch, c_in, length); ``kernel`` is
    (c_out, c_in, k).  Output length = length + 2*padding - k + 1.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or kernel.data.ndim != 3:
        raise ShapeError(f"conv1d expects (batch, c_in, len) x (c_out, c_in, k), got {x.data.shape} and {kernel.data.shape}")
    if xd.shape[1] != kernel.data.shape[1]:
        raise ShapeError(f"conv1d channel mismatch: input {x.data.shape}, kernel {kernel.data.shape}")
    k = kernel.data.shape[2]
    if k > xd.shape[2] + 2 * padding:
        raise ShapeError(f"kernel width {k} exceeds padded input length {xd.shape[2] + 2 * padding}")
    xd = np.ascontiguousarray(xd)
    wd = np.ascontiguousarray(kernel.data)
    out = _kernels.conv1d_forward(xd, wd, padding)

    def bwd(g):
        g3 = g[None] if squeeze else g
        gx, gw = _kernels.conv1d_backward(xd, wd, padding, np.ascontiguousarray(g3))
        return (gx[0] if squeeze else gx), gw

    return _apply("conv1d", [x, kernel], out[0] if squeeze else out, bwd)


def dropout_apply(x, rate: float, mode: str, rng: Optional[np.random.Generator] = None):
    """Inverted dropout: eval mode is the identity, train mode rescales survivors."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = _as_tensor(x)
    if mode == "eval" or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an explicit rng")
    scale = np.where(rng.random(x.data.shape) >= rate, 1.0 / (1.0 - rate), 0.0)
    return _apply("dropout", [x], x.data * scale, lambda g: (g * scale,))


def cross_entropy_with_logits(logits, labels):
    """Mean over the batch of -ln softmax(logits)[label], log-sum-exp stabilized."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"logits must be (batch, classes), got {logits.data.shape}")
    labels = np.asarray(labels)
    n, c = logits.data.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch size {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    losses = lse - z[np.arange(n), labels]
    out = losses.mean()
    softmax = np.exp(z - zmax)
    softmax /= softmax.sum(axis=1, keepdims=True)

    def bwd(g):
        grad = softmax.copy()
        grad[np.arange(n), labels] -= 1.0
        return (grad * (float(g) / n),)

    return _apply("cross_entropy", [logits], out, bwd)


# ---------------------------------------------------------------------------
# LSTM cell (composed from the primitives above; gate order i|f|g|o)
# ---------------------------------------------------------------------------

@dataclass
class LstmState:
    """Hidden and cell activations; identical trailing dimension."""

    h: Tensor
    c: Tensor

    @staticmethod
    def zeros(batch: int, hidden: int) -> "LstmState":
        return LstmState(Tensor(np.zeros((batch, hidden))), Tensor(np.zeros((batch, hidden))))


def lstm_cell(x: Tensor, state: LstmState, wx: Tensor, wh: Tensor, b: Tensor) -> LstmState:
    """One LSTM step: sigmoid input/forget/output gates, tanh candidate.

    ``wx`` is (input_dim, 4*hidden), ``wh`` is (hidden, 4*hidden) and ``b``
    is (4*hidden,), gates laid out [input | forget | candidate | output].
    """
    x = _as_tensor(x)
    hidden = state.h.data.shape[-1]
    if wx.data.shape != (x.data.shape[-1], 4 * hidden) or wh.data.shape != (hidden, 4 * hidden) \
            or b.data.shape != (4 * hidden,):
        raise ShapeError(
            f"lstm_cell parameter shapes {wx.data.shape}/{wh.data.shape}/{b.data.shape} do not match "
            f"input width {x.data.shape[-1]} and hidden size {hidden}")
    gates = add(add(matmul(x, wx), matmul(state.h, wh)), b)
    i = sigmoid(slice_axis(gates, 1, 0, hidden))
    f = sigmoid(slice_axis(gates, 1, hidden, 2 * hidden))
    g = tanh(slice_axis(gates, 1, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_axis(gates, 1, 3 * hidden, 4 * hidden))
    c_new = add(mul(f, state.c), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return LstmState(h_new, c_new)


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

def backward(tape: GradTape, loss: Tensor) -> dict:
    """Reverse accumulation over the tape; returns {leaf node_id: gradient}.

    The loss must be a scalar recorded on ``tape``.  Each tape entry is
    visited exactly once, in reverse creation order.  Leaves with no path
    to the loss get zero gradients.
    """
    if loss.tape is not tape or loss.node_id is None:
        raise ValueError("loss is not recorded on this tape")
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    leaf_grads: dict[int, np.ndarray] = {}
    for entry in reversed(tape.entries):
        g = grads.pop(entry.output_id, None)
        if entry.backward is None:  # leaf
            shape = tape._shapes[entry.output_id]
            leaf_grads[entry.output_id] = g if g is not None else np.zeros(shape)
            continue
        if g is None:
            continue
        for input_id, gi in zip(entry.input_ids, entry.backward(g)):
            if input_id is None:
                continue
            if input_id in grads:
                grads[input_id] = grads[input_id] + gi
            else:
                grads[input_id] = gi
    return leaf_grads
