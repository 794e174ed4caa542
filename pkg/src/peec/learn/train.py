"""Alternating self-play training of the pursuer and evader agents.

Every episode, both navigation actors, the pursuer's query head and both
opponent models act and collect experience. Each learner then updates on
its own schedule: TD3 from replay (``updates_per_step`` per collected step
after the warmup), PPO once ``rollout`` query decisions from whole episodes
have accumulated, and the opponent models once ``batch_size`` revealed
positions are queued. Every ``eval_freq`` episodes the current policies are
evaluated deterministically on held-out seeds, the metrics row is appended
to ``train_log.csv`` and ``ckpt_{episode}`` is written.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..engine import V_REF, ConfigError, GameConfig, StepAction, reset, step
from ..mediator import FEATURE_DIM, build_observation, encode_features
from ..metrics import report_traces
from ..neural.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from ..rng import get_cursor, set_cursor, stream
from .buffers import RolloutBuffer
from .evaluate import LearnedNav, LearnedQuery, SidePolicies, evaluate, predict_opponent
from .opponent import OpponentConfig, OpponentModel
from .ppo import PPOAgent, PPOConfig
from .td3 import TD3Agent, TD3Config

LOG_NAME = "train_log.csv"
BUFFERS_NAME = "resume_buffers"


@dataclass
class TrainConfig:
    profile: str = "desk"
    episodes: int = 2000
    seed: int = 0
    eval_freq: int = 250
    eval_episodes: int = 50
    eval_seed_base: int = 500_000
    max_total_steps: int = 10_000_000
    updates_per_step: float = 0.25
    reward_scale: float = 0.01
    shaping: float = 0.05
    game: GameConfig = field(default_factory=lambda: GameConfig(horizon=300, randomize_shooting_radius=True, randomize_speed_ratio=True))
    td3: TD3Config = field(default_factory=lambda: TD3Config(buffer_capacity=200_000))
    ppo: PPOConfig = field(default_factory=PPOConfig)
    opponent: OpponentConfig = field(default_factory=OpponentConfig)

    def validate(self) -> "TrainConfig":
        self.game.validate()
        if self.episodes < 1:
            raise ConfigError("train.episodes: must be >= 1")
        if self.eval_freq < 1 or self.eval_episodes < 1:
            raise ConfigError("train.eval_freq / eval_episodes: must be >= 1")
        if self.updates_per_step < 0 or self.reward_scale <= 0:
            raise ConfigError("train.updates_per_step must be >= 0 and reward_scale > 0")
        if self.td3.hidden != self.ppo.hidden:
            raise ConfigError("td3.hidden and ppo.hidden must match")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["game"] = self.game.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        sub = {
            "game": GameConfig.from_dict,
            "td3": lambda x: TD3Config(**x),
            "ppo": lambda x: PPOConfig(**x),
            "opponent": lambda x: OpponentConfig(**x),
        }
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"train: unknown keys {sorted(unknown)}")
        for key, make in sub.items():
            if key in d and isinstance(d[key], dict):
                d[key] = make(d[key])
        return cls(**d)


def desk_profile() -> TrainConfig:
    return TrainConfig()


def paper_profile() -> TrainConfig:
    """Full-scale values: 20k episodes, 256 hidden units, 1000-step horizon,
    10^6 replay, one TD3 update per step, raw payoffs without shaping."""
    hidden = 256
    return TrainConfig(
        profile="paper",
        episodes=20_000,
        updates_per_step=1.0,
        reward_scale=1.0,
        shaping=0.0,
        game=GameConfig(horizon=1000, randomize_shooting_radius=True, randomize_speed_ratio=True),
        td3=TD3Config(hidden=hidden),
        ppo=PPOConfig(hidden=hidden),
        opponent=OpponentConfig(hidden=hidden),
    )


PROFILES: dict[str, Callable[[], TrainConfig]] = {"desk": desk_profile, "paper": paper_profile}


class Agents:
    """Every learnable component of one self-play run."""

    def __init__(self, cfg: TrainConfig):
        rng = stream(cfg.seed, "train.init")
        self.p_nav = TD3Agent(FEATURE_DIM, 1, cfg.td3, rng)
        self.p_query = PPOAgent(FEATURE_DIM, cfg.ppo, rng)
        self.p_opp = OpponentModel(cfg.opponent, rng)
        self.e_nav = TD3Agent(FEATURE_DIM, 1, cfg.td3, rng)
        self.e_opp = OpponentModel(cfg.opponent, rng)

    def parts(self) -> dict:
        return {"p_nav": self.p_nav, "p_query": self.p_query, "p_opp": self.p_opp, "e_nav": self.e_nav, "e_opp": self.e_opp}

    def blocks(self) -> dict[str, np.ndarray]:
        out = {}
        for pname, part in self.parts().items():
            for mname, mod in part.modules().items():
                for k, v in mod.state_dict().items():
                    out[f"{pname}.{mname}.{k}"] = v
            for oname, opt in part.optimizers().items():
                for k, v in opt.state().items():
                    out[f"{pname}.{oname}.{k}"] = v
        return out

    def counters(self) -> dict:
        out = {}
        for pname, part in self.parts().items():
            out[pname] = {
                "n_updates": part.n_updates,
                "opt_t": {oname: opt.t for oname, opt in part.optimizers().items()},
            }
        return out

    def load(self, blocks: dict[str, np.ndarray], counters: dict) -> None:
        for pname, part in self.parts().items():
            for mname, mod in part.modules().items():
                prefix = f"{pname}.{mname}."
                mod.load_state_dict({k[len(prefix) :]: v for k, v in blocks.items() if k.startswith(prefix)})
            for oname, opt in part.optimizers().items():
                prefix = f"{pname}.{oname}."
                opt.load_state({k[len(prefix) :]: v for k, v in blocks.items() if k.startswith(prefix)}, counters[pname]["opt_t"][oname])
            part.n_updates = int(counters[pname]["n_updates"])

    def pursuer(self, game: GameConfig, sample_query: bool = False, use_model: bool = True) -> SidePolicies:
        return SidePolicies(
            LearnedNav(self.p_nav, game),
            LearnedQuery(self.p_query, game, sample=sample_query),
            self.p_opp if use_model else None,
            "shadow",
        )

    def evader(self, game: GameConfig, use_model: bool = True) -> SidePolicies:
        return SidePolicies(LearnedNav(self.e_nav, game), None, self.e_opp if use_model else None, "shadow")


def load_agents(path) -> tuple[Agents, TrainConfig]:
    """Rebuild the agents stored in ``ckpt_*`` (path with or without suffix)."""
    blocks, meta = load_checkpoint(path)
    cfg = TrainConfig.from_dict(meta["config"])
    agents = Agents(cfg)
    agents.load(blocks, meta["counters"])
    return agents, cfg


@dataclass
class TrainResult:
    out_dir: Path
    log_rows: list[dict]
    checkpoints: list[Path]
    total_steps: int
    episodes_run: int


class Trainer:
    def __init__(self, cfg: TrainConfig, out_dir):
        self.cfg = cfg.validate()
        self.game = cfg.game
        self.out_dir = Path(out_dir)
        self.agents = Agents(cfg)
        self.buf_p = self.agents.p_nav.new_buffer()
        self.buf_e = self.agents.e_nav.new_buffer()
        self.rollout = RolloutBuffer()
        self.rng_explore = stream(cfg.seed, "train.explore")
        self.rng_update = stream(cfg.seed, "train.update")
        self.rng_query = stream(cfg.seed, "train.query")
        self.episode = 0
        self.total_steps = 0
        self.update_budget = 0.0
        self.log_rows: list[dict] = []
        self.checkpoints: list[Path] = []
        # shaping potential scale: one reference-speed step of closing is worth ``shaping``
        self.k_shape = cfg.shaping / (V_REF * self.game.dt)

    # one self-play episode

    def play_episode(self) -> int:
        cfg, game, ag = self.cfg, self.game, self.agents
        ep = self.episode
        state = reset(game, stream(cfg.seed, "train.reset", ep))
        rng_elim = stream(cfg.seed, "train.elimination", ep)
        W, H = game.width, game.height
        gamma_p, gamma_e = cfg.td3.gamma, cfg.td3.gamma
        st_p, st_e, st_q = ag.p_nav.zero_state(), ag.e_nav.zero_state(), ag.p_query.zero_state()
        P = {k: [] for k in ("f", "a", "r", "d", "h", "c")}
        E = {k: [] for k in ("f", "a", "r", "d", "h", "c")}
        Q = {k: [] for k in ("q", "logp", "v", "h", "c")}
        k = self.k_shape
        scale = cfg.reward_scale
        while True:
            obs_p = build_observation(state, "pursuer", game, predict_opponent(state, "pursuer", ag.p_opp, game))
            obs_e = build_observation(state, "evader", game, predict_opponent(state, "evader", ag.e_opp, game))
            f_p = encode_features(obs_p, W, H)
            f_e = encode_features(obs_e, W, H)
            P["f"].append(f_p)
            P["h"].append(st_p[0][0])
            P["c"].append(st_p[1][0])
            E["f"].append(f_e)
            E["h"].append(st_e[0][0])
            E["c"].append(st_e[1][0])
            Q["h"].append(st_q[0][0])
            Q["c"].append(st_q[1][0])
            a_p, st_p = ag.p_nav.act(f_p, st_p, self.rng_explore)
            q, logp, v, st_q = ag.p_query.act(f_p, st_q, self.rng_query)
            a_e, st_e = ag.e_nav.act(f_e, st_e, self.rng_explore)
            d0 = state.separation
            prev = state
            state, res = step(prev, StepAction(float(a_p[0]), q, float(a_e[0])), rng_elim, game)
            d1 = state.separation
            done = res.terminal
            nxt = 0.0 if done else 1.0
            P["a"].append(a_p)
            P["r"].append(res.reward_p * scale + k * (d0 - gamma_p * nxt * d1))
            P["d"].append(done)
            E["a"].append(a_e)
            E["r"].append(res.reward_e * scale - k * (d0 - gamma_e * nxt * d1))
            E["d"].append(done)
            Q["q"].append(q)
            Q["logp"].append(logp)
            Q["v"].append(v)
            if res.observed_full_state:
                el = state.t - prev.last_query_step
                ag.p_opp.add_pair(prev.last_observed_evader, prev.last_observed_evader_heading, el, prev.evader.speed, state.evader.pos)
                ag.e_opp.add_pair(prev.last_observed_pursuer, prev.last_observed_pursuer_heading, el, prev.pursuer.speed, state.pursuer.pos)
            if done:
                break

        n = len(P["r"])
        self.buf_p.add_episode(np.array(P["f"]), np.array(P["a"]), np.array(P["r"]), np.array(P["d"]), np.array(P["h"]), np.array(P["c"]))
        self.buf_e.add_episode(np.array(E["f"]), np.array(E["a"]), np.array(E["r"]), np.array(E["d"]), np.array(E["h"]), np.array(E["c"]))
        self.rollout.add_episode(P["f"], Q["q"], Q["logp"], Q["v"], P["r"], Q["h"], Q["c"])

        before = self.total_steps
        self.total_steps += n
        warm = cfg.td3.warmup
        self.update_budget += max(0, self.total_steps - max(before, warm)) * cfg.updates_per_step
        while self.update_budget >= 1.0:
            ag.p_nav.update(self.buf_p, self.rng_update)
            ag.e_nav.update(self.buf_e, self.rng_update)
            self.update_budget -= 1.0
        if len(self.rollout) >= cfg.ppo.rollout:
            ag.p_query.update(self.rollout, self.rng_update)
            self.rollout.clear()
        while ag.p_opp.ready():
            ag.p_opp.train_pending(game.horizon, game.dt)
        while ag.e_opp.ready():
            ag.e_opp.train_pending(game.horizon, game.dt)
        self.episode += 1
        return n

    # validation, logging, checkpoints

    def validate(self) -> dict:
        game = self.game
        traces = evaluate(self.agents.pursuer(game), self.agents.evader(game), game, self.cfg.eval_episodes, self.cfg.eval_seed_base)
        rep = report_traces(traces)
        row = {"episode": self.episode, "total_steps": self.total_steps}
        row.update(rep.flat())
        # training curves keep the numeric shot rate even in snapshots without queries
        row["P_shot"], row["P_shot_se"] = rep.P_shot.value, rep.P_shot.se
        row["mean_payoff_p"] = rep.mean_payoff_p
        row["mean_queries"] = rep.mean_queries
        row["mean_payoff_e"] = float(np.mean([sum(r["reward_e"] for r in t.records) for t in traces]))
        self.log_rows.append(row)
        self.write_log()
        return row

    def write_log(self) -> Path:
        path = self.out_dir / LOG_NAME
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            if self.log_rows:
                w = csv.DictWriter(fh, fieldnames=list(self.log_rows[0]), lineterminator="\n")
                w.writeheader()
                w.writerows({k: _fmt(v) for k, v in r.items()} for r in self.log_rows)
        return path

    def meta(self) -> dict:
        return {
            "config": self.cfg.to_dict(),
            "episode": self.episode,
            "total_steps": self.total_steps,
            "update_budget": self.update_budget,
            "counters": self.agents.counters(),
            "rng": {
                "explore": get_cursor(self.rng_explore),
                "update": get_cursor(self.rng_update),
                "query": get_cursor(self.rng_query),
            },
            "log_rows": self.log_rows,
            # metadata is stored with sorted keys, so keep the column order
            "log_columns": list(self.log_rows[0]) if self.log_rows else [],
        }

    def save(self) -> Path:
        stem = self.out_dir / f"ckpt_{self.episode}"
        path = save_checkpoint(stem, self.agents.blocks(), self.meta())
        self.checkpoints.append(path)
        # replay, rollout and queued opponent pairs: kept for the latest snapshot only
        bufs = {f"p.{k}": v for k, v in self.buf_p.arrays().items()}
        bufs.update({f"e.{k}": v for k, v in self.buf_e.arrays().items()})
        bufs.update(_rollout_arrays(self.rollout, self.cfg.td3.hidden))
        bufs["p_opp.pending"] = self.agents.p_opp.pending_array()
        bufs["e_opp.pending"] = self.agents.e_opp.pending_array()
        save_checkpoint(self.out_dir / BUFFERS_NAME, bufs, {"episode": self.episode})
        return path

    @classmethod
    def resume(cls, ckpt, out_dir=None) -> "Trainer":
        blocks, meta = load_checkpoint(ckpt)
        cfg = TrainConfig.from_dict(meta["config"])
        ckpt_dir = Path(ckpt).parent
        tr = cls(cfg, out_dir if out_dir is not None else ckpt_dir)
        tr.agents.load(blocks, meta["counters"])
        tr.episode = int(meta["episode"])
        tr.total_steps = int(meta["total_steps"])
        tr.update_budget = float(meta["update_budget"])
        set_cursor(tr.rng_explore, meta["rng"]["explore"])
        set_cursor(tr.rng_update, meta["rng"]["update"])
        set_cursor(tr.rng_query, meta["rng"]["query"])
        cols = meta.get("log_columns") or []
        tr.log_rows = [{c: r[c] for c in cols} if cols else dict(r) for r in meta["log_rows"]]
        bufs, bmeta = load_checkpoint(ckpt_dir / BUFFERS_NAME)
        if int(bmeta["episode"]) != tr.episode:
            raise CheckpointError(
                f"{ckpt}: buffer state belongs to episode {bmeta['episode']}; resuming needs the latest checkpoint"
            )
        tr.buf_p.load_arrays({k[2:]: v for k, v in bufs.items() if k.startswith("p.")})
        tr.buf_e.load_arrays({k[2:]: v for k, v in bufs.items() if k.startswith("e.")})
        _load_rollout(tr.rollout, bufs)
        tr.agents.p_opp.load_pending(bufs["p_opp.pending"])
        tr.agents.e_opp.load_pending(bufs["e_opp.pending"])
        return tr

    def run(self, episodes: int | None = None, progress: Callable[[dict], None] | None = None) -> TrainResult:
        """Train until ``episodes`` (default: the config's total) or the step cap."""
        target = self.cfg.episodes if episodes is None else episodes
        while self.episode < target and self.total_steps < self.cfg.max_total_steps:
            self.play_episode()
            if self.episode % self.cfg.eval_freq == 0:
                row = self.validate()
                self.save()
                if progress is not None:
                    progress(row)
        self.write_log()
        return TrainResult(self.out_dir, self.log_rows, self.checkpoints, self.total_steps, self.episode)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _rollout_arrays(ro: RolloutBuffer, hidden: int) -> dict[str, np.ndarray]:
    n = len(ro)
    return {
        "ro.obs": np.array(ro.obs, dtype=np.float64).reshape(n, FEATURE_DIM),
        "ro.action": np.array(ro.action, dtype=np.int64),
        "ro.logp": np.array(ro.logp, dtype=np.float64),
        "ro.value": np.array(ro.value, dtype=np.float64),
        "ro.reward": np.array(ro.reward, dtype=np.float64),
        "ro.h": np.array(ro.h, dtype=np.float64).reshape(n, hidden),
        "ro.c": np.array(ro.c, dtype=np.float64).reshape(n, hidden),
        "ro.bounds": np.array(ro.episode_bounds, dtype=np.int64).reshape(-1, 2),
    }


def _load_rollout(ro: RolloutBuffer, bufs: dict[str, np.ndarray]) -> None:
    ro.clear()
    ro.obs.extend(list(bufs["ro.obs"]))
    ro.action.extend(int(a) for a in bufs["ro.action"])
    ro.logp.extend(float(x) for x in bufs["ro.logp"])
    ro.value.extend(float(x) for x in bufs["ro.value"])
    ro.reward.extend(float(x) for x in bufs["ro.reward"])
    ro.h.extend(list(bufs["ro.h"]))
    ro.c.extend(list(bufs["ro.c"]))
    ro.episode_bounds.extend((int(a), int(b)) for a, b in bufs["ro.bounds"])


def train(cfg: TrainConfig, out_dir, resume=None, progress: Callable[[dict], None] | None = None) -> TrainResult:
    """Run (or continue from ``resume``) a self-play training job in ``out_dir``."""
    trainer = Trainer.resume(resume, out_dir) if resume is not None else Trainer(cfg, out_dir)
    if resume is not None and cfg is not None:
        trainer.cfg.episodes = cfg.episodes
    return trainer.run(progress=progress)
