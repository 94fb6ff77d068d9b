"""Pure-NumPy kernel implementations.

These are the fallback for the compiled extension and the semantics
reference for it: same signatures, same tie-break rules.  All inputs are
expected as C-contiguous float64; callers normalize before dispatching.
"""

import numpy as np

BACKEND = "python"


def conv1d_forward(x, w, padding):
    """Cross-correlation of a batch of 1-D signals.

    x: (batch, c_in, length), w: (c_out, c_in, k).  Zero padding on both
    ends; output length = length + 2*padding - k + 1.
    """
    batch, c_in, length = x.shape
    c_out, _, k = w.shape
    l_out = length + 2 * padding - k + 1
    if padding:
        xp = np.zeros((batch, c_in, length + 2 * padding), dtype=x.dtype)
        xp[:, :, padding:padding + length] = x
    else:
        xp = x
    # windows[b, c, t, j] = xp[b, c, t + j]
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)[:, :, :l_out]
    return np.einsum("bctj,ocj->bot", windows, w, optimize=True)


def conv1d_backward(x, w, padding, grad_out):
    """Gradients of conv1d_forward w.r.t. input and kernel."""
    batch, c_in, length = x.shape
    c_out, _, k = w.shape
    l_out = grad_out.shape[2]
    lp = length + 2 * padding
    if padding:
        xp = np.zeros((batch, c_in, lp), dtype=x.dtype)
        xp[:, :, padding:padding + length] = x
    else:
        xp = x
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)[:, :, :l_out]
    grad_w = np.einsum("bot,bctj->ocj", grad_out, windows, optimize=True)
    grad_xp = np.zeros((batch, c_in, lp), dtype=x.dtype)
    for j in range(k):
        grad_xp[:, :, j:j + l_out] += np.einsum("bot,oc->bct", grad_out, w[:, :, j], optimize=True)
    if padding:
        grad_x = grad_xp[:, :, padding:padding + length]
    else:
        grad_x = grad_xp
    return np.ascontiguousarray(grad_x), grad_w


def sparsemax_rows(z):
    """Row-wise Euclidean projection onto the probability simplex.

    z: (rows, dim).  Returns nonnegative rows summing to 1, possibly with
    exact zeros (the sparse support).
    """
    rows, dim = z.shape
    z_sorted = np.sort(z, axis=1)[:, ::-1]
    cumsum = np.cumsum(z_sorted, axis=1)
    ks = np.arange(1, dim + 1, dtype=z.dtype)
    support = 1.0 + ks * z_sorted > cumsum
    rho = support.sum(axis=1)  # >= 1 always: first column holds by construction
    tau = (cumsum[np.arange(rows), rho - 1] - 1.0) / rho
    return np.maximum(z - tau[:, None], 0.0)


def knn_search(points, queries, k, exclude):
    """Exact k nearest neighbours under Euclidean distance.

    Returns an (n_queries, k) int64 index array, nearest first; distance
    ties break toward the lower point index.  ``exclude`` is an int64 array
    (one entry per query) naming a point index to leave out, or -1.
    """
    n = points.shape[0]
    dim = points.shape[1]
    out = np.empty((queries.shape[0], k), dtype=np.int64)
    # Chunked so the (chunk, n, dim) difference block stays around 32 MB.
    chunk = max(1, min(queries.shape[0], 4 * 1024 * 1024 // max(n * dim, 1) + 1))
    for start in range(0, queries.shape[0], chunk):
        stop = min(start + chunk, queries.shape[0])
        diff = queries[start:stop, None, :] - points[None, :, :]
        d2 = np.einsum("qnd,qnd->qn", diff, diff)
        if exclude is not None:
            rows = np.flatnonzero(exclude[start:stop] >= 0)
            d2[rows, exclude[start:stop][rows]] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")
        out[start:stop] = order[:, :k]
    return out
