"""Clipped-surrogate policy optimization for the binary query decision."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..neural import tensor as T
from ..neural.layers import Adam
from ..neural.tensor import Tape, Tensor
from .buffers import RolloutBuffer, gae
from .networks import MLP, CategoricalActor


@dataclass
class PPOConfig:
    hidden: int = 32
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    rollout: int = 2048
    minibatch: int = 32
    window: int = 8
    lr: float = 3e-4
    entropy_coef: float = 0.01

    def to_dict(self) -> dict:
        return asdict(self)


class PPOAgent:
    """Recurrent two-way categorical actor and a feed-forward value critic."""

    def __init__(self, obs_dim: int, cfg: PPOConfig, rng: np.random.Generator, n_actions: int = 2):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.actor = CategoricalActor(obs_dim, n_actions, cfg.hidden, rng)
        self.critic = MLP(obs_dim, cfg.hidden, rng)
        self.actor_opt = Adam(self.actor.parameters(), lr=cfg.lr)
        self.critic_opt = Adam(self.critic.parameters(), lr=cfg.lr)
        self.n_updates = 0

    def zero_state(self):
        return self.actor.zero_state(1)

    def act(self, obs: np.ndarray, state, rng: np.random.Generator | None = None):
        """Returns ``(action, logp, value, state)``; argmax when ``rng`` is None."""
        logp, state = self.actor.step(obs, state)
        if rng is None:
            a = int(np.argmax(logp))
        else:
            a = int(rng.random() < np.exp(logp[1])) if len(logp) == 2 else int(rng.choice(len(logp), p=np.exp(logp)))
        value = float(self.critic.forward_np(obs.reshape(1, -1))[0, 0])
        return a, float(logp[a]), value, state

    def update(self, rollout: RolloutBuffer, rng: np.random.Generator) -> dict:
        return ppo_update(self, rollout, rng)

    def modules(self) -> dict:
        return {"actor": self.actor, "critic": self.critic}

    def optimizers(self) -> dict:
        return {"actor_opt": self.actor_opt, "critic_opt": self.critic_opt}


def clipped_surrogate(ratio: Tensor, adv: np.ndarray, clip: float, mask: np.ndarray | None = None) -> Tensor:
    """Masked mean of ``min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)``."""
    ratio = T.as_tensor(ratio)
    s = T.minimum(T.mul(ratio, adv), T.mul(T.clip(ratio, 1.0 - clip, 1.0 + clip), adv))
    if mask is None:
        return T.mean(s)
    return T.div(T.sum(T.mul(s, mask)), float(max(mask.sum(), 1.0)))


def _windows(rollout: RolloutBuffer, adv: np.ndarray, ret: np.ndarray, L: int) -> dict:
    """Cut every episode into consecutive chunks of ``L`` (last one padded)."""
    starts = []
    for lo, hi in rollout.episode_bounds:
        starts.extend((s, min(s + L, hi)) for s in range(lo, hi, L))
    n = len(starts)
    F = len(rollout.obs[0])
    H = len(rollout.h[0])
    out = {
        "obs": np.zeros((L, n, F)),
        "action": np.zeros((L, n), np.int64),
        "logp": np.zeros((L, n)),
        "adv": np.zeros((L, n)),
        "ret": np.zeros((L, n)),
        "mask": np.zeros((L, n)),
        "h0": np.zeros((n, H)),
        "c0": np.zeros((n, H)),
    }
    obs = np.asarray(rollout.obs)
    act = np.asarray(rollout.action)
    logp = np.asarray(rollout.logp)
    for j, (s, e) in enumerate(starts):
        k = e - s
        out["obs"][:k, j] = obs[s:e]
        out["action"][:k, j] = act[s:e]
        out["logp"][:k, j] = logp[s:e]
        out["adv"][:k, j] = adv[s:e]
        out["ret"][:k, j] = ret[s:e]
        out["mask"][:k, j] = 1.0
        out["h0"][j] = rollout.h[s]
        out["c0"][j] = rollout.c[s]
    return out


def ppo_update(agent: PPOAgent, rollout: RolloutBuffer, rng: np.random.Generator) -> dict:
    """GAE over each finished episode, batch-normalized advantages, then
    ``epochs`` passes of minibatch clipped-surrogate and value regression."""
    if len(rollout) == 0:
        raise ValueError("ppo_update: empty rollout")
    cfg = agent.cfg
    rewards = np.asarray(rollout.reward, dtype=np.float64)
    values = np.asarray(rollout.value, dtype=np.float64)
    adv = np.zeros_like(rewards)
    ret = np.zeros_like(rewards)
    for lo, hi in rollout.episode_bounds:
        adv[lo:hi], ret[lo:hi] = gae(rewards[lo:hi], values[lo:hi], cfg.gamma, cfg.lam)
    std = adv.std()
    adv = (adv - adv.mean()) / std if std > 1e-8 else adv - adv.mean()

    L = cfg.window
    w = _windows(rollout, adv, ret, L)
    n = w["h0"].shape[0]
    F = agent.obs_dim
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_frac": 0.0}
    count = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.minibatch):
            idx = order[lo : lo + cfg.minibatch]
            B = len(idx)
            obs = w["obs"][:, idx]
            mask = w["mask"][:, idx].reshape(L * B, 1)
            onehot = np.zeros((L * B, 2))
            onehot[np.arange(L * B), w["action"][:, idx].reshape(-1)] = 1.0
            old = w["logp"][:, idx].reshape(L * B, 1)
            a = w["adv"][:, idx].reshape(L * B, 1)
            agent.actor.zero_grad()
            with Tape() as tape:
                logp_all, _ = agent.actor.sequence(obs, (w["h0"][idx], w["c0"][idx]))
                logp = T.sum(T.mul(logp_all, onehot), axis=-1)
                ratio = T.exp(T.sub(T.reshape(logp, (L * B, 1)), old))
                surr = clipped_surrogate(ratio, a, cfg.clip, mask)
                ent = T.neg(T.sum(T.mul(T.exp(logp_all), logp_all), axis=-1))
                ent_mean = T.div(T.sum(T.mul(T.reshape(ent, (L * B, 1)), mask)), float(mask.sum()))
                loss = T.neg(T.add(surr, T.mul(ent_mean, cfg.entropy_coef)))
                tape.backward(loss)
            agent.actor_opt.step()

            agent.critic.zero_grad()
            with Tape() as tape:
                v = agent.critic(obs.reshape(L * B, F))
                vloss = T.div(T.sum(T.mul(T.square(T.sub(v, w["ret"][:, idx].reshape(L * B, 1))), mask)), float(mask.sum()))
                tape.backward(vloss)
            agent.critic_opt.step()

            r = ratio.data[mask > 0]
            stats["policy_loss"] += -surr.item()
            stats["value_loss"] += vloss.item()
            stats["entropy"] += ent_mean.item()
            stats["clip_frac"] += float(np.mean(np.abs(r - 1.0) > cfg.clip))
            count += 1
    agent.n_updates += 1
    return {k: v / max(count, 1) for k, v in stats.items()}
