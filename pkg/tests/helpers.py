"""Shared test utilities: independent oracles and the finite-difference checker.

The oracles here deliberately avoid the library's kernel paths (explicit
Python loops, collections.Counter votes, sort-and-threshold projections) so
agreement with them is evidence, not tautology.
"""

from collections import Counter

import numpy as np

from severitas import autodiff as ad
from severitas.ingest import FeatureSchema, FieldSchema


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------

def matmul_oracle(a, b):
    """Naive triple loop."""
    a, b = np.asarray(a), np.asarray(b)
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def sparsemax_oracle(z):
    """Sort-and-threshold simplex projection, one plain-Python vector at a time."""
    z = [float(v) for v in z]
    zs = sorted(z, reverse=True)
    cumsum, k_star, cum_star = 0.0, 0, 0.0
    for k, v in enumerate(zs, start=1):
        cumsum += v
        if 1.0 + k * v > cumsum:
            k_star, cum_star = k, cumsum
    tau = (cum_star - 1.0) / k_star
    return np.array([max(v - tau, 0.0) for v in z])


def conv1d_oracle(x, w, padding):
    """Direct sliding-window sum; x (c_in, L), w (c_out, c_in, k)."""
    x, w = np.asarray(x), np.asarray(w)
    c_in, length = x.shape
    c_out, _, k = w.shape
    xp = np.zeros((c_in, length + 2 * padding))
    xp[:, padding:padding + length] = x
    l_out = length + 2 * padding - k + 1
    out = np.zeros((c_out, l_out))
    for o in range(c_out):
        for t in range(l_out):
            s = 0.0
            for c in range(c_in):
                for j in range(k):
                    s += xp[c, t + j] * w[o, c, j]
            out[o, t] = s
    return out


def knn_oracle(points, query_vec, k, exclude_index=None):
    """Exhaustive scan; sort key (squared distance, index)."""
    points = np.asarray(points)
    scored = []
    for i, p in enumerate(points):
        if exclude_index is not None and i == exclude_index:
            continue
        d2 = float(((p - query_vec) ** 2).sum())
        scored.append((d2, i))
    scored.sort()
    return [i for _, i in scored[:k]]


def enn_removal_oracle(X, y, k):
    """Indices ENN must remove: per-sample exhaustive k-NN + Counter vote.

    Majority rule mirrors the documented contract: most common neighbour
    label, count ties broken toward the lower class index.
    """
    X = np.asarray(X)
    n = len(y)
    removed = []
    for i in range(n):
        d2 = ((X - X[i]) ** 2).sum(axis=1)
        order = sorted((float(d2[j]), j) for j in range(n) if j != i)
        neigh = [y[j] for _, j in order[:k]]
        votes = Counter(neigh)
        top = max(votes.values())
        majority = min(cls for cls, c in votes.items() if c == top)
        if majority != y[i]:
            removed.append(i)
    return set(removed)


def point_on_segment(s, x0, x1, tol=1e-9):
    """Distance from s to the segment [x0, x1] is within tol, with u in [0, 1)."""
    d = x1 - x0
    denom = float(d @ d)
    if denom == 0.0:
        return float(np.linalg.norm(s - x0)) <= tol
    u = float((s - x0) @ d) / denom
    if not -tol <= u < 1.0 + tol:
        return False
    residual = float(np.linalg.norm(s - (x0 + u * d)))
    return residual <= tol


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def central_diff_check(loss_fn, arrays, analytic, h=1e-5, tol=1e-4):
    """Compare analytic gradients against central differences, elementwise.

    ``loss_fn()`` re-evaluates the scalar loss from the (mutated) arrays;
    ``analytic`` maps array name -> gradient.  Relative error uses
    max(|a|, |fd|, 1e-6) in the denominator so near-zero pairs compare
    absolutely.

    A coordinate whose +-h window happens to straddle a ReLU/sparsemax kink
    makes the h-step FD an invalid derivative sample, so a failure at the
    base step is re-measured at h/10 and h/30: a kink artifact converges to
    the analytic value (truncation error ~ h^2), a real gradient bug stays
    wrong at every step.  Returns the worst base-step relative error.
    """

    def fd_at(flat, idx, step):
        orig = flat[idx]
        flat[idx] = orig + step
        up = loss_fn()
        flat[idx] = orig - step
        down = loss_fn()
        flat[idx] = orig
        return (up - down) / (2.0 * step)

    def rel(a, b):
        return abs(a - b) / max(abs(a), abs(b), 1e-6)

    worst = 0.0
    for name, a in arrays.items():
        flat = a.ravel()
        gflat = np.asarray(analytic[name]).ravel()
        for idx in range(flat.size):
            fd = fd_at(flat, idx, h)
            err = rel(gflat[idx], fd)
            worst = max(worst, err)
            if err > tol:
                refined = [rel(gflat[idx], fd_at(flat, idx, step)) for step in (h / 10, h / 30)]
                assert max(refined) <= tol, (
                    f"{name}[{idx}]: analytic {gflat[idx]:.3e} vs fd {fd:.3e} "
                    f"(rel {err:.2e}; refined-step rels {refined})")
    return worst


def model_gradients(forward, params, X, labels):
    """One tape pass; returns {array name: gradient}."""
    tape = ad.GradTape()
    logits = forward(X, params, mode="eval", tape=tape)
    loss = ad.cross_entropy_with_logits(logits, labels)
    grads = ad.backward(tape, loss)
    return {name: grads[nid] for name, nid in zip(params.arrays, tape.leaf_ids())}


def jitter_arrays(arrays, rng, scale=0.05):
    """Nudge parameters off exact ReLU kinks / sparsemax boundaries in place."""
    for a in arrays.values():
        a += rng.uniform(-scale, scale, size=a.shape)


# ---------------------------------------------------------------------------
# fixtures-in-code
# ---------------------------------------------------------------------------

def small_schema():
    """Two categorical fields (2 and 3 categories) plus one numeric: width 6."""
    return FeatureSchema(fields=[
        FieldSchema("alpha", "categorical", vocabulary=["x", "y"]),
        FieldSchema("beta", "categorical", vocabulary=["p", "q", "r"]),
        FieldSchema("gamma", "numerical", mean=0.0, std=1.0),
    ], label_column="severity")


def random_batch(schema, n, rng):
    """Valid encoded rows: exact one-hots plus a standardized numeric."""
    X = np.zeros((n, schema.encoded_width))
    col = 0
    for f in schema.fields:
        if f.kind == "categorical":
            picks = rng.integers(0, len(f.vocabulary), size=n)
            X[np.arange(n), col + picks] = 1.0
            col += len(f.vocabulary)
        else:
            X[:, col] = rng.normal(size=n)
            col += 1
    return X
