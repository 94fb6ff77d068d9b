# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; semantics mirror ``reference.py`` exactly.

Same signatures, same tie-break rules (k-NN ties toward the lower point
index, sparsemax sort ties by index).  Kept loop-level simple: the win over
NumPy comes from fusing the inner loops, not from threading.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def conv1d_forward(double[:, :, ::1] x, double[:, :, ::1] w, int padding):
    cdef Py_ssize_t batch = x.shape[0], c_in = x.shape[1], length = x.shape[2]
    cdef Py_ssize_t c_out = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t l_out = length + 2 * padding - k + 1
    out_arr = np.zeros((batch, c_out, l_out), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, o, c, t, j, src
    cdef double acc
    for b in range(batch):
        for o in range(c_out):
            for t in range(l_out):
                acc = 0.0
                for c in range(c_in):
                    for j in range(k):
                        src = t + j - padding
                        if 0 <= src < length:
                            acc += x[b, c, src] * w[o, c, j]
                out[b, o, t] = acc
    return out_arr


def conv1d_backward(double[:, :, ::1] x, double[:, :, ::1] w, int padding,
                    double[:, :, ::1] grad_out):
    cdef Py_ssize_t batch = x.shape[0], c_in = x.shape[1], length = x.shape[2]
    cdef Py_ssize_t c_out = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t l_out = grad_out.shape[2]
    gx_arr = np.zeros((batch, c_in, length), dtype=np.float64)
    gw_arr = np.zeros((c_out, c_in, k), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gw = gw_arr
    cdef Py_ssize_t b, o, c, t, j, src
    cdef double g
    for b in range(batch):
        for o in range(c_out):
            for t in range(l_out):
                g = grad_out[b, o, t]
                if g == 0.0:
                    continue
                for c in range(c_in):
                    for j in range(k):
                        src = t + j - padding
                        if 0 <= src < length:
                            gx[b, c, src] += g * w[o, c, j]
                            gw[o, c, j] += g * x[b, c, src]
    return gx_arr, gw_arr


def sparsemax_rows(double[:, ::1] z):
    cdef Py_ssize_t rows = z.shape[0], dim = z.shape[1]
    out_arr = np.empty((rows, dim), dtype=np.float64)
    sort_arr = np.empty(dim, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] srt = sort_arr
    cdef Py_ssize_t r, i, j, rho
    cdef double v, cumsum, cum_rho, tau
    for r in range(rows):
        # insertion sort, descending (rows here are small attention spans)
        for i in range(dim):
            v = z[r, i]
            j = i
            while j > 0 and srt[j - 1] < v:
                srt[j] = srt[j - 1]
                j -= 1
            srt[j] = v
        cumsum = 0.0
        rho = 0
        cum_rho = 0.0
        for i in range(dim):
            cumsum += srt[i]
            if 1.0 + (i + 1) * srt[i] > cumsum:
                rho = i + 1
                cum_rho = cumsum
        tau = (cum_rho - 1.0) / rho
        for i in range(dim):
            v = z[r, i] - tau
            out[r, i] = v if v > 0.0 else 0.0
    return out_arr


def knn_search(double[:, ::1] points, double[:, ::1] queries, Py_ssize_t k, exclude):
    cdef Py_ssize_t n = points.shape[0], dim = points.shape[1]
    cdef Py_ssize_t nq = queries.shape[0]
    out_arr = np.empty((nq, k), dtype=np.int64)
    best_d_arr = np.empty(k, dtype=np.float64)
    best_i_arr = np.empty(k, dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    cdef double[::1] best_d = best_d_arr
    cdef long long[::1] best_i = best_i_arr
    cdef long long[::1] excl
    cdef bint has_excl = exclude is not None
    if has_excl:
        excl = exclude
    cdef Py_ssize_t q, p, d, filled, j, pos
    cdef double dist, diff
    for q in range(nq):
        filled = 0
        for p in range(n):
            if has_excl and excl[q] == p:
                continue
            dist = 0.0
            for d in range(dim):
                diff = queries[q, d] - points[p, d]
                dist += diff * diff
            if filled == k and dist >= best_d[k - 1]:
                continue
            # insert keeping (distance, index) lexicographic order; scanning
            # from the back with strict '>' keeps equal-distance earlier
            # indices in front, matching the stable-argsort fallback
            pos = filled if filled < k else k - 1
            j = pos
            while j > 0 and best_d[j - 1] > dist:
                best_d[j] = best_d[j - 1]
                best_i[j] = best_i[j - 1]
                j -= 1
            best_d[j] = dist
            best_i[j] = p
            if filled < k:
                filled += 1
        for j in range(k):
            out[q, j] = best_i[j]
    return out_arr
