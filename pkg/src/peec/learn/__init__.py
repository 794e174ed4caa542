"""Learners (TD3 navigation, PPO query head, opponent models), self-play
training, and held-out evaluation."""

from .buffers import ReplayBuffer, RolloutBuffer, gae
from .evaluate import EVAL_SEED_BASE, LearnedNav, LearnedQuery, SidePolicies, evaluate, run_episode
from .opponent import OpponentConfig, OpponentModel, opponent_update
from .ppo import PPOAgent, PPOConfig, clipped_surrogate, ppo_update
from .td3 import TD3Agent, TD3Config, td3_update
from .train import PROFILES, Agents, TrainConfig, Trainer, load_agents, train

__all__ = [
    "EVAL_SEED_BASE",
    "PROFILES",
    "Agents",
    "LearnedNav",
    "LearnedQuery",
    "OpponentConfig",
    "OpponentModel",
    "PPOAgent",
    "PPOConfig",
    "ReplayBuffer",
    "RolloutBuffer",
    "SidePolicies",
    "TD3Agent",
    "TD3Config",
    "TrainConfig",
    "Trainer",
    "clipped_surrogate",
    "evaluate",
    "gae",
    "load_agents",
    "opponent_update",
    "ppo_update",
    "run_episode",
    "td3_update",
    "train",
]
