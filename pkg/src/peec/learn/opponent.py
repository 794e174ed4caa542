"""Opponent position predictor trained with the Gaussian negative log-likelihood.

Inputs describe the last revealed opponent state and how long ago it was
seen. The mean is parameterized as ``last_pos + reach * offset`` where
``reach = v_opp * elapsed * dt`` is the farthest the opponent could have
moved, so an untrained model already predicts "close to where it was".
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..engine import V_REF
from ..neural import tensor as T
from ..neural.layers import Adam, gaussian_nll
from ..neural.tensor import Tape
from .networks import OpponentNet

N_INPUTS = 7
# reach beyond this is larger than the map, so the feature saturates
REACH_CAP = 1.5


@dataclass
class OpponentConfig:
    hidden: int = 32
    lr: float = 3e-4
    batch_size: int = 32
    eps: float = 1e-6

    def to_dict(self) -> dict:
        return asdict(self)


def model_inputs(last_pos, last_heading, elapsed, v_opp, horizon: int, dt: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized inputs ``(N, 7)`` and the clipped reach ``(N, 1)``."""
    last_pos = np.atleast_2d(np.asarray(last_pos, dtype=np.float64))
    head = np.atleast_1d(np.asarray(last_heading, dtype=np.float64))
    el = np.atleast_1d(np.asarray(elapsed, dtype=np.float64))
    v = np.broadcast_to(np.asarray(v_opp, dtype=np.float64), el.shape)
    reach = np.minimum(v * el * dt, REACH_CAP)
    x = np.column_stack([last_pos[:, 0], last_pos[:, 1], np.cos(head), np.sin(head), el / horizon, reach, v / V_REF])
    return x, reach[:, None]


class OpponentModel:
    def __init__(self, cfg: OpponentConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.net = OpponentNet(N_INPUTS, cfg.hidden, rng)
        self.opt = Adam(self.net.parameters(), lr=cfg.lr)
        self.pending: list[tuple] = []
        self.n_updates = 0

    def forward(self, x: np.ndarray, reach: np.ndarray):
        offset, sigma = self.net(x)
        mu = T.add(T.take(T.as_tensor(x), 0, 2), T.mul(offset, reach))
        return mu, sigma

    def predict(self, last_pos, last_heading, elapsed, v_opp, horizon: int, dt: float = 1.0, width: float = 1.0, height: float = 1.0):
        """Mean clipped to the map and ``sigma``, both as arrays."""
        x, reach = model_inputs(last_pos, last_heading, elapsed, v_opp, horizon, dt)
        offset, sigma = self.net.forward_np(x)
        mu = x[:, 0:2] + offset * reach
        np.clip(mu[:, 0], 0.0, width, out=mu[:, 0])
        np.clip(mu[:, 1], 0.0, height, out=mu[:, 1])
        return mu, sigma[:, 0]

    def add_pair(self, last_pos, last_heading, elapsed: int, v_opp: float, truth) -> None:
        self.pending.append((tuple(last_pos), float(last_heading), int(elapsed), float(v_opp), tuple(truth)))

    def ready(self) -> bool:
        return len(self.pending) >= self.cfg.batch_size

    def train_pending(self, horizon: int, dt: float = 1.0) -> float | None:
        """Consume ``batch_size`` queued pairs with one update."""
        if not self.ready():
            return None
        batch, self.pending = self.pending[: self.cfg.batch_size], self.pending[self.cfg.batch_size :]
        pos = np.array([b[0] for b in batch])
        head = np.array([b[1] for b in batch])
        el = np.array([b[2] for b in batch])
        v = np.array([b[3] for b in batch])
        truth = np.array([b[4] for b in batch])
        return opponent_update(self, pos, head, el, v, truth, horizon, dt)

    def pending_array(self) -> np.ndarray:
        rows = [[*p, h, e, v, *t] for p, h, e, v, t in self.pending]
        return np.array(rows, dtype=np.float64).reshape(len(rows), 7)

    def load_pending(self, arr: np.ndarray) -> None:
        self.pending = [((r[0], r[1]), r[2], int(r[3]), r[4], (r[5], r[6])) for r in arr]

    def modules(self) -> dict:
        return {"net": self.net}

    def optimizers(self) -> dict:
        return {"opt": self.opt}


def opponent_update(model: OpponentModel, last_pos, last_heading, elapsed, v_opp, truth, horizon: int, dt: float = 1.0) -> float:
    """One Adam step on the mean Gaussian NLL; returns the pre-step loss."""
    if len(np.atleast_1d(elapsed)) == 0:
        raise ValueError("opponent_update: empty batch")
    x, reach = model_inputs(last_pos, last_heading, elapsed, v_opp, horizon, dt)
    model.net.zero_grad()
    with Tape() as tape:
        mu, sigma = model.forward(x, reach)
        loss = gaussian_nll(mu, sigma, np.asarray(truth, dtype=np.float64), model.cfg.eps)
        tape.backward(loss)
    model.opt.step()
    model.n_updates += 1
    return loss.item()
