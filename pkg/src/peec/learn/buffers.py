"""Replay storage for recurrent TD3 and on-policy rollouts for PPO."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ReplayBuffer:
    """Ring of per-step transitions from completed episodes.

    Each step keeps the observation, action, reward, done flag and the
    actor's recurrent state *before* the step. :meth:`sample` returns windows
    of ``L`` consecutive transitions starting anywhere; a window stops at its
    episode's last step, and positions past it are masked out. Values are
    stored as float32.
    """

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, hidden: int, window: int = 8):
        self.capacity = int(capacity)
        self.window = int(window)
        self.obs = np.zeros((capacity, obs_dim), np.float32)
        self.act = np.zeros((capacity, act_dim), np.float32)
        self.rew = np.zeros(capacity, np.float32)
        self.done = np.zeros(capacity, np.bool_)
        self.h = np.zeros((capacity, hidden), np.float32)
        self.c = np.zeros((capacity, hidden), np.float32)
        self.episode = np.full(capacity, -1, np.int64)
        self.head = 0
        self.size = 0
        self.n_episodes = 0

    def __len__(self) -> int:
        return self.size

    def add_episode(self, obs, act, rew, done, h, c) -> None:
        n = len(rew)
        if n == 0:
            return
        idx = (self.head + np.arange(n)) % self.capacity
        self.obs[idx] = obs
        self.act[idx] = np.asarray(act).reshape(n, -1)
        self.rew[idx] = rew
        self.done[idx] = done
        self.h[idx] = h
        self.c[idx] = c
        self.episode[idx] = self.n_episodes
        self.n_episodes += 1
        self.head = int((self.head + n) % self.capacity)
        self.size = min(self.capacity, self.size + n)

    def sample(self, batch: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Windows as time-major arrays: ``obs`` is ``(L+1, B, F)`` (the extra
        slot is the bootstrap observation), the rest ``(L, B, ...)``."""
        if self.size == 0:
            raise ValueError("sampling from an empty replay buffer")
        L = self.window
        start = rng.integers(0, self.size, size=batch)
        offs = (start[None, :] + np.arange(L + 1)[:, None]) % self.capacity
        ep0 = self.episode[start]
        same = self.episode[offs] == ep0[None, :]
        same[:, :] &= np.cumprod(same, axis=0).astype(bool)
        mask = same[:L].copy()
        # after a terminal step nothing else in the window counts
        done = self.done[offs[:L]] & mask
        after_done = np.cumsum(done, axis=0) - done > 0
        mask &= ~after_done
        return {
            "obs": self.obs[offs].astype(np.float64),
            "act": self.act[offs[:L]].astype(np.float64),
            "rew": self.rew[offs[:L]].astype(np.float64),
            "done": done,
            "mask": mask,
            "next_valid": same[1:] & mask,
            "h0": self.h[start].astype(np.float64),
            "c0": self.c[start].astype(np.float64),
        }

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "obs": self.obs,
            "act": self.act,
            "rew": self.rew,
            "done": self.done,
            "h": self.h,
            "c": self.c,
            "episode": self.episode,
            "cursor": np.array([self.head, self.size, self.n_episodes], np.int64),
        }

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for key in ("obs", "act", "rew", "done", "h", "c", "episode"):
            getattr(self, key)[...] = arrays[key]
        self.head, self.size, self.n_episodes = (int(v) for v in arrays["cursor"])


@dataclass
class RolloutBuffer:
    """Whole episodes of on-policy query decisions."""

    obs: list = field(default_factory=list)
    action: list = field(default_factory=list)
    logp: list = field(default_factory=list)
    value: list = field(default_factory=list)
    reward: list = field(default_factory=list)
    h: list = field(default_factory=list)
    c: list = field(default_factory=list)
    episode_bounds: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.reward)

    def add_episode(self, obs, action, logp, value, reward, h, c) -> None:
        start = len(self.reward)
        self.obs.extend(obs)
        self.action.extend(action)
        self.logp.extend(logp)
        self.value.extend(value)
        self.reward.extend(reward)
        self.h.extend(h)
        self.c.extend(c)
        self.episode_bounds.append((start, len(self.reward)))

    def clear(self) -> None:
        for key in ("obs", "action", "logp", "value", "reward", "h", "c", "episode_bounds"):
            getattr(self, key).clear()


def gae(rewards: np.ndarray, values: np.ndarray, gamma: float = 0.99, lam: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns for one finished episode (terminal at the end)."""
    n = len(rewards)
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        next_v = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * next_v - values[t]
        last = delta + gamma * lam * last
        adv[t] = last
    return adv, adv + values
