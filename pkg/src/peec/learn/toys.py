"""Small control and bandit tasks for checking that the learners learn."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import stream
from .buffers import RolloutBuffer
from .ppo import PPOAgent, PPOConfig
from .td3 import TD3Agent, TD3Config


@dataclass
class PointReachResult:
    final_distances: list[float]
    eval_distance: float
    agent: TD3Agent


def point_reach(
    episodes: int = 500,
    seed: int = 0,
    steps: int = 20,
    step_size: float = 0.1,
    updates_per_step: int = 1,
    eval_episodes: int = 50,
    cfg: TD3Config | None = None,
) -> PointReachResult:
    """A point in the unit square moves by ``step_size * a`` per step toward a
    random target. It observes the target offset and is rewarded with the
    negative distance. Returns the training curve and the mean final distance
    of the noise-free policy on fresh episodes."""
    cfg = cfg or TD3Config(
        hidden=32, window=4, warmup=200, buffer_capacity=50_000, lr=1e-3,
        policy_delay=2, tau=0.05, gamma=0.9, exploration_noise=0.3,
    )
    agent = TD3Agent(2, 2, cfg, stream(seed, "toy.init"))
    buf = agent.new_buffer()
    rng_env, rng_noise, rng_upd = stream(seed, "toy.env"), stream(seed, "toy.explore"), stream(seed, "toy.update")

    def run(noise: bool, learn: bool) -> float:
        pos, goal = rng_env.uniform(0, 1, 2), rng_env.uniform(0, 1, 2)
        state = agent.zero_state()
        obs, act, rew, done, hs, cs = [], [], [], [], [], []
        for t in range(steps):
            o = goal - pos
            hs.append(state[0][0])
            cs.append(state[1][0])
            a, state = agent.act(o, state, rng_noise if noise else None)
            pos = np.clip(pos + step_size * a, 0.0, 1.0)
            obs.append(o)
            act.append(a)
            rew.append(-float(np.linalg.norm(goal - pos)))
            done.append(t == steps - 1)
        if learn:
            buf.add_episode(np.array(obs), np.array(act), np.array(rew), np.array(done), np.array(hs), np.array(cs))
            if len(buf) >= cfg.warmup:
                for _ in range(steps * updates_per_step):
                    agent.update(buf, rng_upd)
        return -rew[-1]

    curve = [run(True, True) for _ in range(episodes)]
    final = float(np.mean([run(False, False) for _ in range(eval_episodes)]))
    return PointReachResult(curve, final, agent)


@dataclass
class BanditResult:
    p_better: list[float]
    agent: PPOAgent


def two_armed_bandit(rollouts: int = 200, seed: int = 0, pulls: int = 32, cfg: PPOConfig | None = None) -> BanditResult:
    """Arm 1 pays 1 and arm 0 pays 0. Each rollout is ``pulls`` one-step
    episodes; records P(arm 1) after every update."""
    cfg = cfg or PPOConfig(hidden=8, window=1, minibatch=8, rollout=pulls)
    agent = PPOAgent(1, cfg, stream(seed, "bandit.init"))
    rng_act, rng_upd = stream(seed, "bandit.act"), stream(seed, "bandit.update")
    obs = np.ones(1)
    history = []
    for _ in range(rollouts):
        ro = RolloutBuffer()
        for _ in range(pulls):
            h, c = agent.zero_state()
            a, logp, v, _ = agent.act(obs, (h, c), rng_act)
            ro.add_episode([obs], [a], [logp], [v], [float(a == 1)], [h[0]], [c[0]])
        agent.update(ro, rng_upd)
        logp, _ = agent.actor.step(obs, agent.zero_state())
        history.append(float(np.exp(logp[1])))
    return BanditResult(history, agent)
