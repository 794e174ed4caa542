"""Central finite-difference gradient checks and a randomized test network."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import tensor as T
from .layers import Dense, GaussianHead, LSTMCell, Module, gaussian_nll
from .tensor import Tape, Tensor


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Largest ``|a - b| / max(|a|, |b|, floor)`` over all entries."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def numeric_gradient(loss_fn: Callable[[], float], param: Tensor, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = loss_fn()
        flat[i] = old - h
        down = loss_fn()
        flat[i] = old
        grad.reshape(-1)[i] = (up - down) / (2.0 * h)
    return grad


def check_gradients(module: Module, loss_fn: Callable[[], Tensor], h: float = 1e-5) -> float:
    """Max relative error between taped and central-difference gradients of
    ``loss_fn`` with respect to every parameter of ``module``."""
    module.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)
    worst = 0.0
    for p in module.parameters():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numeric_gradient(lambda: loss_fn().item(), p, h)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


class TinyRecurrentNet(Module):
    """Dense -> tanh -> LSTM -> Gaussian head, trained with the NLL loss.

    ``unrolled`` selects the fused sequence op instead of per-step ops so both
    LSTM code paths get exercised.
    """

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator, unrolled: bool = False):
        self.embed = Dense(n_in, hidden, rng)
        self.cell = LSTMCell(hidden, hidden, rng)
        self.head = GaussianHead(hidden, rng)
        self.unrolled = unrolled

    def loss(self, xs: np.ndarray, target: np.ndarray) -> Tensor:
        L, B, F = xs.shape
        H = self.cell.hidden
        z = T.tanh(self.embed(xs.reshape(L * B, F)))
        if self.unrolled:
            hs, _ = self.cell.unroll(T.reshape(z, (L, B, H)), self.cell.zero_state(B))
            flat = T.reshape(hs, (L * B * H,))
            h = T.reshape(T.take(flat, (L - 1) * B * H, L * B * H), (B, H))
        else:
            flat = T.reshape(z, (L * B * H,))
            state = self.cell.zero_state(B)
            for t in range(L):
                h, state = self.cell.step(T.reshape(T.take(flat, t * B * H, (t + 1) * B * H), (B, H)), state)
        mu, sigma = self.head(h)
        return gaussian_nll(mu, sigma, target)


def random_network_case(rng: np.random.Generator, max_params: int = 100) -> tuple[TinyRecurrentNet, np.ndarray, np.ndarray]:
    """A random net with at most ``max_params`` parameters plus a random batch."""
    while True:
        n_in = int(rng.integers(1, 4))
        hidden = int(rng.integers(1, 3))
        net = TinyRecurrentNet(n_in, hidden, rng, unrolled=bool(rng.integers(0, 2)))
        if net.num_parameters() <= max_params:
            break
    L, B = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    xs = rng.normal(size=(L, B, n_in))
    target = rng.normal(size=(B, 2))
    return net, xs, target
