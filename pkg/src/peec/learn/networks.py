"""Actor, critic and opponent-predictor networks."""

from __future__ import annotations

import numpy as np

from ..neural import tensor as T
from ..neural.layers import Dense, GaussianHead, LSTMCell, Module
from ..neural.tensor import Tensor


class RecurrentTrunk(Module):
    """``dense -> relu -> LSTM``; the shared body of every policy network."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        self.inp = Dense(n_in, hidden, rng)
        self.cell = LSTMCell(hidden, hidden, rng)
        self.hidden = hidden

    def zero_state(self, batch: int = 1):
        return self.cell.zero_state(batch)

    def step_np(self, x: np.ndarray, state) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
        """Untracked single step; ``x`` is (B, n_in)."""
        z = np.maximum(self.inp.forward_np(x), 0.0)
        h, c = self.cell.step_np(z, state[0], state[1])
        return h, (h, c)

    def sequence(self, xs: np.ndarray, state) -> tuple[Tensor, tuple[np.ndarray, np.ndarray]]:
        """``xs``: (L, B, n_in) -> hidden sequence flattened to (L*B, hidden)."""
        L, B, F = xs.shape
        z = T.relu(self.inp(T.as_tensor(xs.reshape(L * B, F))))
        hs, last = self.cell.unroll(T.reshape(z, (L, B, self.hidden)), state)
        return T.reshape(hs, (L * B, self.hidden)), last


class RecurrentActor(Module):
    """Deterministic actor with ``tanh`` output in ``[-1, 1]^act_dim``."""

    def __init__(self, n_in: int, act_dim: int, hidden: int, rng: np.random.Generator):
        self.trunk = RecurrentTrunk(n_in, hidden, rng)
        self.out = Dense(hidden, act_dim, rng, scale=0.1)
        self.act_dim = act_dim

    def zero_state(self, batch: int = 1):
        return self.trunk.zero_state(batch)

    def sequence(self, xs: np.ndarray, state) -> tuple[Tensor, tuple]:
        h, last = self.trunk.sequence(xs, state)
        return T.tanh(self.out(h)), last

    def step(self, x: np.ndarray, state) -> tuple[np.ndarray, tuple]:
        h, last = self.trunk.step_np(x.reshape(1, -1), state)
        return np.tanh(self.out.forward_np(h))[0], last


class CategoricalActor(Module):
    """Recurrent policy over ``n_actions`` discrete choices (log-probs out)."""

    def __init__(self, n_in: int, n_actions: int, hidden: int, rng: np.random.Generator):
        self.trunk = RecurrentTrunk(n_in, hidden, rng)
        self.out = Dense(hidden, n_actions, rng, scale=0.1)

    def zero_state(self, batch: int = 1):
        return self.trunk.zero_state(batch)

    def sequence(self, xs: np.ndarray, state) -> tuple[Tensor, tuple]:
        h, last = self.trunk.sequence(xs, state)
        return T.log_softmax(self.out(h)), last

    def step(self, x: np.ndarray, state) -> tuple[np.ndarray, tuple]:
        h, last = self.trunk.step_np(x.reshape(1, -1), state)
        z = self.out.forward_np(h)[0]
        z = z - z.max()
        return z - np.log(np.exp(z).sum()), last


class MLP(Module):
    """Two hidden ``relu`` layers and a scalar output."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator, n_out: int = 1):
        self.l1 = Dense(n_in, hidden, rng)
        self.l2 = Dense(hidden, hidden, rng)
        self.l3 = Dense(hidden, n_out, rng)

    def __call__(self, x) -> Tensor:
        return self.l3(T.relu(self.l2(T.relu(self.l1(x)))))

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        return self.l3.forward_np(np.maximum(self.l2.forward_np(np.maximum(self.l1.forward_np(x), 0.0)), 0.0))


class QCritic(MLP):
    def __init__(self, obs_dim: int, act_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__(obs_dim + act_dim, hidden, rng)

    def q(self, obs, act) -> Tensor:
        return self(T.concat([T.as_tensor(obs), T.as_tensor(act)], axis=-1))


class OpponentNet(Module):
    """``tanh`` MLP feeding a Gaussian head (2-D offset and ``sigma``)."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        self.l1 = Dense(n_in, hidden, rng)
        self.l2 = Dense(hidden, hidden, rng)
        self.head = GaussianHead(hidden, rng)

    def __call__(self, x) -> tuple[Tensor, Tensor]:
        z = T.tanh(self.l2(T.tanh(self.l1(x))))
        return self.head(z)

    def forward_np(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = np.tanh(self.l2.forward_np(np.tanh(self.l1.forward_np(x))))
        return self.head.mean.forward_np(z), np.logaddexp(0.0, self.head.raw_sigma.forward_np(z)) + 1e-6
