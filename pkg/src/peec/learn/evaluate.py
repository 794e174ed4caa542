"""Episode runner, held-out evaluation, and policy adapters for trained agents."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..engine import GameConfig, GameState, StepAction, Vec2, reset, step
from ..mediator import Observation, Side, build_observation, encode_features
from ..policy import NavigationPolicy, QueryPolicy
from ..rng import stream
from ..trace import EpisodeTrace, pose_dict
from .opponent import OpponentModel
from .ppo import PPOAgent
from .td3 import TD3Agent

EVAL_SEED_BASE = 1_000_000


@dataclass
class SidePolicies:
    """What one player brings to an episode. The evader's ``query`` stays None."""

    nav: NavigationPolicy
    query: QueryPolicy | None = None
    opponent: OpponentModel | None = None
    name: str = ""


def predict_opponent(state: GameState, side: Side, model: OpponentModel | None, config: GameConfig) -> tuple[Vec2, float] | None:
    """Model estimate of the opponent's position, or None when fresh / no model."""
    if model is None or state.elapsed == 0:
        return None
    if side == "pursuer":
        last, head, v = state.last_observed_evader, state.last_observed_evader_heading, state.evader.speed
    else:
        last, head, v = state.last_observed_pursuer, state.last_observed_pursuer_heading, state.pursuer.speed
    mu, sigma = model.predict(last, head, state.elapsed, v, config.horizon, config.dt, config.width, config.height)
    return Vec2(float(mu[0, 0]), float(mu[0, 1])), float(sigma[0])


class _FeatureCache:
    """Encodes each observation once even when two policies read it."""

    def __init__(self, config: GameConfig):
        self.width, self.height = config.width, config.height
        self._key: int | None = None
        self._val: np.ndarray | None = None

    def __call__(self, obs: Observation) -> np.ndarray:
        if self._key != id(obs) or self._val is None:
            self._key, self._val = id(obs), encode_features(obs, self.width, self.height)
        return self._val


class LearnedNav:
    """Deterministic navigation from a trained recurrent actor."""

    def __init__(self, agent: TD3Agent, config: GameConfig):
        self.agent = agent
        self.features = _FeatureCache(config)
        self.state = agent.zero_state()

    def reset_episode(self) -> None:
        self.state = self.agent.zero_state()

    def act(self, obs: Observation) -> float:
        a, self.state = self.agent.act(self.features(obs), self.state)
        return float(a[0])


class LearnedQuery:
    """Query head of a trained agent; argmax unless ``sample`` is set."""

    def __init__(self, agent: PPOAgent, config: GameConfig, sample: bool = False):
        self.agent = agent
        self.sample = sample
        self.features = _FeatureCache(config)
        self.state = agent.zero_state()
        self.last_prob = 0.0

    def reset_episode(self) -> None:
        self.state = self.agent.zero_state()

    def act(self, obs: Observation, rng: np.random.Generator | None = None) -> int:
        logp, self.state = self.agent.actor.step(self.features(obs), self.state)
        self.last_prob = float(np.exp(logp[1]))
        if self.sample:
            return int(rng.random() < self.last_prob)
        return int(np.argmax(logp))


def run_episode(
    config: GameConfig,
    pursuer: SidePolicies,
    evader: SidePolicies,
    seed: int,
    episode: int = 0,
    header_extra: dict | None = None,
) -> EpisodeTrace:
    """Play one episode; every random draw comes from streams keyed by ``seed``."""
    rng_reset = stream(seed, "reset")
    rng_elim = stream(seed, "elimination")
    rng_policy = stream(seed, "policy")
    state = reset(config, rng_reset)
    for pol in (pursuer.nav, pursuer.query, evader.nav):
        if pol is not None:
            pol.reset_episode()
    trace = EpisodeTrace.start(state, config.to_dict(), seed, episode, header_extra)
    while True:
        obs_p = build_observation(state, "pursuer", config, predict_opponent(state, "pursuer", pursuer.opponent, config))
        obs_e = build_observation(state, "evader", config, predict_opponent(state, "evader", evader.opponent, config))
        a_p = pursuer.nav.act(obs_p)
        q = pursuer.query.act(obs_p, rng_policy) if pursuer.query is not None else 0
        a_e = evader.nav.act(obs_e)
        state, res = step(state, StepAction(a_p, q, a_e), rng_elim, config)
        rec = {"t": state.t, **pose_dict(state)}
        rec.update(
            a_p=float(min(1.0, max(-1.0, a_p))),
            a_e=float(min(1.0, max(-1.0, a_e))),
            q=int(q),
            eliminated_draw=res.eliminated_draw,
            reward_p=res.reward_p,
            reward_e=res.reward_e,
            status=res.outcome.value,
            elapsed=obs_p.elapsed,
            sigma=obs_p.sigma,
            est_x=obs_p.estimated_opponent_pos[0],
            est_y=obs_p.estimated_opponent_pos[1],
        )
        trace.records.append(rec)
        if res.terminal:
            return trace


def _run_block(args) -> list[EpisodeTrace]:
    config, pursuer, evader, seed_base, episodes, extra = args
    return [run_episode(config, pursuer, evader, seed_base + i, i, extra) for i in episodes]


def evaluate(
    pursuer: SidePolicies,
    evader: SidePolicies,
    config: GameConfig,
    n_episodes: int,
    seed_base: int = EVAL_SEED_BASE,
    workers: int = 1,
) -> list[EpisodeTrace]:
    """Episode ``i`` is played with seed ``seed_base + i``, so any two policy
    pairs evaluated with the same base face identical starts and draws.

    With ``workers > 1`` contiguous blocks of episodes run in separate
    processes on copies of the policies. Every episode resets its policies and
    draws only from its own seed, so the traces match a single-process run.
    """
    if n_episodes < 1:
        raise ValueError("evaluate: need at least one episode")
    if workers < 1:
        raise ValueError("evaluate: workers must be >= 1")
    extra = {"pursuer": pursuer.name, "evader": evader.name}
    if workers == 1 or n_episodes == 1:
        return _run_block((config, pursuer, evader, seed_base, range(n_episodes), extra))
    blocks = [b for b in np.array_split(np.arange(n_episodes), workers) if len(b)]
    jobs = [(config, pursuer, evader, seed_base, [int(i) for i in b], extra) for b in blocks]
    with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
        return [tr for part in pool.map(_run_block, jobs) for tr in part]
