"""severitas: deterministic crash-severity modeling toolkit.

Two-stage pipeline over tabular crash records: preprocessing plus
SMOTE+ENN resampling, then two deep tabular classifiers (a sparse-attention
feature-interaction net and a conv+LSTM hybrid) trained with a built-in
reverse-mode autodiff engine.  Every stochastic step is driven by one
master seed.
"""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
