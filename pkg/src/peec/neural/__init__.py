"""Small-tensor reverse-mode autodiff and the layers built on it."""

from .layers import Adam, Dense, GaussianHead, LSTMCell, Module, adam_update, gaussian_nll
from .tensor import ShapeError, Tape, Tensor, backward

__all__ = [
    "Adam",
    "Dense",
    "GaussianHead",
    "LSTMCell",
    "Module",
    "ShapeError",
    "Tape",
    "Tensor",
    "adam_update",
    "backward",
    "gaussian_nll",
]
