"""Backend selection for the hot numeric kernels.

``PSEUDO_OCC_BACKEND=numba`` (default when numba imports) uses the compiled
loops in ``_numba``; ``PSEUDO_OCC_BACKEND=numpy`` forces the vectorised
fallback in ``_numpy``. The choice is made once, at import time.
"""

import importlib
import os

from ._numpy import IDENTITY, LEAKY_RELU, RELU, SIGMOID, TANH, TANH2

__all__ = [
    "BACKEND", "load", "activate", "activation_grad", "dense_forward",
    "dense_backward", "adam_update", "clip_recompute", "row_sq_norms",
    "IDENTITY", "TANH", "TANH2", "SIGMOID", "LEAKY_RELU", "RELU",
]


def load(name):
    """Return the kernel module for backend ``name`` ('numba' or 'numpy')."""
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")
    return importlib.import_module(f"{__name__}._{name}")


def _select():
    requested = os.environ.get("PSEUDO_OCC_BACKEND", "").strip().lower()
    if requested:
        return requested, load(requested)
    try:
        return "numba", load("numba")
    except ImportError:
        return "numpy", load("numpy")


BACKEND, _impl = _select()

activate = _impl.activate
activation_grad = _impl.activation_grad
dense_forward = _impl.dense_forward
dense_backward = _impl.dense_backward
adam_update = _impl.adam_update
clip_recompute = _impl.clip_recompute
row_sq_norms = _impl.row_sq_norms
