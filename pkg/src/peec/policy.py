"""Policy interfaces and heuristic baselines.

Navigation policies map an :class:`~peec.mediator.Observation` to a
normalized turn control in ``[-1, 1]``; query policies map it to ``{0, 1}``.
Stochastic policies draw only from the generator passed to ``act``.
"""

from __future__ import annotations

import math
from typing import Protocol, runtime_checkable

import numpy as np

from .engine import ConfigError, elimination_probability, wrap_angle
from .mediator import Observation


@runtime_checkable
class NavigationPolicy(Protocol):
    def act(self, obs: Observation) -> float: ...

    def reset_episode(self) -> None: ...


@runtime_checkable
class QueryPolicy(Protocol):
    def act(self, obs: Observation, rng: np.random.Generator) -> int: ...

    def reset_episode(self) -> None: ...


def _clamp(u: float) -> float:
    return min(1.0, max(-1.0, u))


class NoComm:
    name = "none"

    def act(self, obs: Observation, rng: np.random.Generator | None = None) -> int:
        return 0

    def reset_episode(self) -> None:
        pass


class RandomComm:
    """Query with probability ``1 - p_shot`` at the estimated distance."""

    name = "random"

    def act(self, obs: Observation, rng: np.random.Generator) -> int:
        p_comm = 1.0 - elimination_probability(obs.estimated_distance, obs.shooting_radius)
        return int(rng.random() < p_comm)

    def reset_episode(self) -> None:
        pass


class PeriodicComm:
    """Query every ``k`` steps; the first query happens at step ``k``.

    Steps are numbered from 1 (``obs.t + 1``), so with ``k=5`` over a 20-step
    horizon the queries land on steps 5, 10, 15 and 20.
    """

    def __init__(self, k: int):
        if int(k) < 1:
            raise ConfigError(f"periodic query policy needs k >= 1, got {k}")
        self.k = int(k)
        self.last = 0

    @property
    def name(self) -> str:
        return f"periodic:{self.k}"

    def act(self, obs: Observation, rng: np.random.Generator | None = None) -> int:
        now = obs.t + 1
        if now - self.last >= self.k:
            self.last = now
            return 1
        return 0

    def reset_episode(self) -> None:
        self.last = 0


def no_comm_policy() -> NoComm:
    return NoComm()


def random_comm_policy() -> RandomComm:
    return RandomComm()


def periodic_comm_policy(k: int) -> PeriodicComm:
    return PeriodicComm(k)


class PurePursuit:
    """Proportional steering toward the estimated opponent position.

    At ``dt = 1`` a full-scale control turns the agent ``omega_max`` radians,
    so the loop gain is ``gain * omega_max * dt``; it must stay below 2 for
    the heading error to shrink. The default 0.3 gives ~0.85 at ``0.9 pi``.
    """

    name = "pure_pursuit"

    def __init__(self, gain: float = 0.3):
        self.gain = gain

    def act(self, obs: Observation) -> float:
        ex, ey = obs.estimated_opponent_pos
        dx, dy = ex - obs.own_x, ey - obs.own_y
        if dx == 0.0 and dy == 0.0:
            return 0.0
        err = wrap_angle(math.atan2(dy, dx) - obs.own_heading)
        return _clamp(self.gain * err)

    def reset_episode(self) -> None:
        pass


class Evasive:
    """Head away from the estimated pursuer, bending toward the map centre
    when closer than ``margin`` to a wall."""

    name = "evasive"

    def __init__(self, gain: float = 0.3, margin: float = 0.05, width: float = 1.0, height: float = 1.0):
        self.gain = gain
        self.margin = margin
        self.width = width
        self.height = height

    def act(self, obs: Observation) -> float:
        px, py = obs.estimated_opponent_pos
        ax, ay = obs.own_x - px, obs.own_y - py
        norm = math.hypot(ax, ay)
        if norm > 0.0:
            ax, ay = ax / norm, ay / norm
        wall = min(obs.own_x, self.width - obs.own_x, obs.own_y, self.height - obs.own_y)
        if wall < self.margin:
            cx, cy = 0.5 * self.width - obs.own_x, 0.5 * self.height - obs.own_y
            cn = math.hypot(cx, cy)
            if cn > 0.0:
                w = 2.0 * (1.0 - wall / self.margin)
                ax, ay = ax + w * cx / cn, ay + w * cy / cn
        if ax == 0.0 and ay == 0.0:
            return 0.0
        err = wrap_angle(math.atan2(ay, ax) - obs.own_heading)
        return _clamp(self.gain * err)

    def reset_episode(self) -> None:
        pass


class Straight:
    """Hold the current heading (control 0)."""

    name = "straight"

    def act(self, obs: Observation) -> float:
        return 0.0

    def reset_episode(self) -> None:
        pass


def pure_pursuit_nav(gain: float = 0.3) -> PurePursuit:
    return PurePursuit(gain)


def evasive_nav(gain: float = 0.3, margin: float = 0.05) -> Evasive:
    return Evasive(gain, margin)


def make_query_policy(spec: str) -> QueryPolicy:
    """Build a heuristic query policy from ``none``, ``random`` or ``periodic:K``."""
    kind, _, arg = spec.partition(":")
    if kind in ("none", "no_comm"):
        return NoComm()
    if kind == "random":
        return RandomComm()
    if kind == "periodic":
        if not arg:
            raise ConfigError("periodic query policy needs k, e.g. periodic:40")
        return PeriodicComm(int(arg))
    raise ConfigError(f"unknown query policy {spec!r}")


def make_nav_policy(spec: str) -> NavigationPolicy:
    kind, _, arg = spec.partition(":")
    if kind == "pure_pursuit":
        return PurePursuit(float(arg)) if arg else PurePursuit()
    if kind == "evasive":
        return Evasive(float(arg)) if arg else Evasive()
    if kind == "straight":
        return Straight()
    raise ConfigError(f"unknown navigation policy {spec!r}")
