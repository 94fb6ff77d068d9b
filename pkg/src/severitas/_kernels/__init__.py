"""Kernel backend selection.

The hot inner loops exist twice: a Cython extension (``_speedups``) and a
NumPy fallback (``reference``), same signatures and tie-break rules.  The
default picks per kernel what measures fastest at this pipeline's sizes
(see ``benchmarks/bench_kernels.py``):

* ``knn_search`` and ``sparsemax_rows``: compiled when importable — the
  fused top-k scan beats materialize-and-argsort by an order of magnitude
  on SMOTEENN-scale inputs;
* ``conv1d_forward/backward``: the NumPy path, whose stride-tricks +
  einsum formulation rides BLAS and wins at every realistic size here
  (the compiled version stays available for the A/B benchmark).

Set ``SEVERITAS_PURE_PYTHON=1`` to force the fallback for everything.
"""

import os

from . import reference

try:
    from . import _speedups
except ImportError:
    _speedups = None

if os.environ.get("SEVERITAS_PURE_PYTHON", "").strip() not in ("", "0") or _speedups is None:
    _fast = reference
else:
    _fast = _speedups

BACKEND = _fast.BACKEND

knn_search = _fast.knn_search
sparsemax_rows = _fast.sparsemax_rows
conv1d_forward = reference.conv1d_forward
conv1d_backward = reference.conv1d_backward

__all__ = [
    "BACKEND",
    "conv1d_forward",
    "conv1d_backward",
    "sparsemax_rows",
    "knn_search",
    "reference",
]
