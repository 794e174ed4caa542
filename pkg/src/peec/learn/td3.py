"""Twin-critic delayed deterministic policy gradient with a recurrent actor."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..neural import tensor as T
from ..neural.layers import Adam
from ..neural.tensor import Tape
from .buffers import ReplayBuffer
from .networks import QCritic, RecurrentActor


@dataclass
class TD3Config:
    hidden: int = 32
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 3e-4
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 5
    exploration_noise: float = 0.1
    batch_size: int = 32
    window: int = 8
    buffer_capacity: int = 1_000_000
    warmup: int = 1000

    def to_dict(self) -> dict:
        return asdict(self)


class TD3Agent:
    """Actor, twin critics, their targets and optimizers.

    The actor sees the feature sequence through an LSTM; the critics are
    feed-forward over (features, action).
    """

    def __init__(self, obs_dim: int, act_dim: int, cfg: TD3Config, rng: np.random.Generator):
        self.cfg = cfg
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.actor = RecurrentActor(obs_dim, act_dim, cfg.hidden, rng)
        self.critic1 = QCritic(obs_dim, act_dim, cfg.hidden, rng)
        self.critic2 = QCritic(obs_dim, act_dim, cfg.hidden, rng)
        self.actor_target = self.actor.clone()
        self.critic1_target = self.critic1.clone()
        self.critic2_target = self.critic2.clone()
        self.actor_opt = Adam(self.actor.parameters(), lr=cfg.lr)
        self.critic_opt = Adam(self.critic1.parameters() + self.critic2.parameters(), lr=cfg.lr)
        self.n_updates = 0

    def new_buffer(self) -> ReplayBuffer:
        return ReplayBuffer(self.cfg.buffer_capacity, self.obs_dim, self.act_dim, self.cfg.hidden, self.cfg.window)

    def zero_state(self):
        return self.actor.zero_state(1)

    def act(self, obs: np.ndarray, state, noise_rng: np.random.Generator | None = None):
        """One control step. With ``noise_rng`` adds Gaussian exploration."""
        a, state = self.actor.step(obs, state)
        if noise_rng is not None and self.cfg.exploration_noise > 0:
            a = np.clip(a + noise_rng.normal(0.0, self.cfg.exploration_noise, size=a.shape), -1.0, 1.0)
        return a, state

    def update(self, buffer: ReplayBuffer, rng: np.random.Generator) -> dict | None:
        """Sample a batch and run :func:`td3_update`; ``None`` when the buffer
        holds fewer than ``batch_size`` steps."""
        if len(buffer) < self.cfg.batch_size:
            return None
        return td3_update(self, buffer.sample(self.cfg.batch_size, rng), rng)

    # checkpoint plumbing
    def modules(self) -> dict:
        return {
            "actor": self.actor,
            "critic1": self.critic1,
            "critic2": self.critic2,
            "actor_target": self.actor_target,
            "critic1_target": self.critic1_target,
            "critic2_target": self.critic2_target,
        }

    def optimizers(self) -> dict:
        return {"actor_opt": self.actor_opt, "critic_opt": self.critic_opt}


def _masked_mean(x, mask: np.ndarray):
    return T.div(T.sum(T.mul(x, mask)), float(max(mask.sum(), 1.0)))


def td3_update(agent: TD3Agent, batch: dict, rng: np.random.Generator) -> dict:
    """One critic step, plus an actor step and target blend every
    ``policy_delay`` critic steps."""
    cfg = agent.cfg
    obs, act = batch["obs"], batch["act"]
    L, B = act.shape[:2]
    F, A = agent.obs_dim, agent.act_dim
    h0, c0 = batch["h0"], batch["c0"]
    mask = (batch["mask"] & (batch["done"] | batch["next_valid"])).astype(np.float64).reshape(L * B, 1)

    a_next, _ = agent.actor_target.sequence(obs, (h0, c0))
    a_next = a_next.data.reshape(L + 1, B, A)[1:]
    noise = np.clip(rng.normal(0.0, cfg.policy_noise, size=a_next.shape), -cfg.noise_clip, cfg.noise_clip)
    a_next = np.clip(a_next + noise, -1.0, 1.0).reshape(L * B, A)
    nxt = obs[1:].reshape(L * B, F)
    q_next = np.minimum(agent.critic1_target.q(nxt, a_next).data, agent.critic2_target.q(nxt, a_next).data)
    not_done = 1.0 - batch["done"].astype(np.float64).reshape(L * B, 1)
    y = batch["rew"].reshape(L * B, 1) + cfg.gamma * not_done * q_next

    cur = obs[:L].reshape(L * B, F)
    flat_act = act.reshape(L * B, A)
    agent.critic1.zero_grad()
    agent.critic2.zero_grad()
    with Tape() as tape:
        e1 = T.sub(agent.critic1.q(cur, flat_act), y)
        e2 = T.sub(agent.critic2.q(cur, flat_act), y)
        critic_loss = T.add(_masked_mean(T.square(e1), mask), _masked_mean(T.square(e2), mask))
        tape.backward(critic_loss)
    agent.critic_opt.step()
    agent.n_updates += 1
    out = {"critic_loss": critic_loss.item(), "actor_loss": None}

    if agent.n_updates % cfg.policy_delay == 0:
        agent.actor.zero_grad()
        with Tape() as tape:
            a_pi, _ = agent.actor.sequence(obs[:L], (h0, c0))
            actor_loss = T.neg(_masked_mean(agent.critic1.q(cur, a_pi), mask))
            tape.backward(actor_loss)
        agent.actor_opt.step()
        agent.critic1.zero_grad()
        agent.critic2.zero_grad()
        out["actor_loss"] = actor_loss.item()
        soft_update_targets(agent, cfg.tau)
    return out


def soft_update_targets(agent: TD3Agent, tau: float) -> None:
    agent.actor_target.soft_update_from(agent.actor, tau)
    agent.critic1_target.soft_update_from(agent.critic1, tau)
    agent.critic2_target.soft_update_from(agent.critic2, tau)
