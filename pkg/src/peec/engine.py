"""PEEC environment: kinematics, querying, probabilistic elimination, payoffs.

Units: the map is ``[0, W] x [0, H]`` with ``W = H = 1`` standing for
1 km x 1 km, one step is ``dt`` seconds, speeds are map-units per second.
Agents are constant-speed unicycles steered by a normalized control
``a in [-1, 1]`` that sets the turn rate ``a * omega_max``.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Protocol

import numpy as np

# 15 knots in map-units (km) per second.
V_REF = 15 * 1852.0 / 3600.0 / 1000.0
CAPTURE_RADIUS = 0.025
OMEGA_MAX = 0.9 * math.pi


class ConfigError(ValueError):
    """Invalid game or run configuration."""


class UsageError(RuntimeError):
    """An operation was called in a state that does not allow it."""


class Status(str, enum.Enum):
    RUNNING = "Running"
    CAUGHT = "Caught"
    ELIMINATED = "Eliminated"
    TIMEOUT = "Timeout"


class Vec2(NamedTuple):
    x: float
    y: float


def wrap_angle(theta: float) -> float:
    """Wrap into ``[-pi, pi)``."""
    w = (theta + math.pi) % (2.0 * math.pi) - math.pi
    # float modulo can land exactly on +pi for inputs just below -pi
    return -math.pi if w >= math.pi else w


def distance(a: Vec2, b: Vec2) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class PayoffCoeffs:
    """Integral-cost coefficients, charged per second of game time.

    ``time`` is signed: the evader's is the negation of the pursuer's.
    """

    time: float = 0.5
    query: float = 0.0
    boundary: float = 10.0
    accel: float = 0.5


@dataclass(frozen=True)
class GameConfig:
    width: float = 1.0
    height: float = 1.0
    dt: float = 1.0
    horizon: int = 1000
    capture_radius: float = CAPTURE_RADIUS
    shooting_radius: float = 2.0 * CAPTURE_RADIUS
    pursuer_speed: float = V_REF
    evader_speed: float = V_REF
    omega_max: float = OMEGA_MAX
    pursuer_coeffs: PayoffCoeffs = PayoffCoeffs(0.5, 0.0, 10.0, 0.5)
    evader_coeffs: PayoffCoeffs = PayoffCoeffs(-0.5, 0.0, 10.0, 0.5)
    catch_bonus: float = 1000.0
    shot_penalty: float = 100.0
    randomize_shooting_radius: bool = False
    shooting_ratio_range: tuple[float, float] = (1.0, 4.0)
    randomize_speed_ratio: bool = False
    speed_ratio_range: tuple[float, float] = (0.1, 4.0)
    seed: int = 0

    def validate(self) -> "GameConfig":
        def need(ok: bool, name: str, why: str) -> None:
            if not ok:
                raise ConfigError(f"game.{name}: {why}")

        need(self.width > 0 and self.height > 0, "width/height", "map must have positive size")
        need(self.dt > 0, "dt", "must be > 0")
        need(int(self.horizon) >= 1, "horizon", "must be >= 1")
        need(self.capture_radius > 0, "capture_radius", "must be > 0")
        need(self.shooting_radius > 0, "shooting_radius", "must be > 0")
        need(self.pursuer_speed > 0, "pursuer_speed", "must be > 0")
        need(self.evader_speed > 0, "evader_speed", "must be > 0")
        need(self.omega_max > 0, "omega_max", "must be > 0")
        lo, hi = self.shooting_ratio_range
        need(1.0 <= lo <= hi <= 4.0, "shooting_ratio_range", "must lie within [1, 4]")
        lo, hi = self.speed_ratio_range
        need(0.1 <= lo <= hi <= 4.0, "speed_ratio_range", "must lie within [0.1, 4]")
        for side, c in (("pursuer_coeffs", self.pursuer_coeffs), ("evader_coeffs", self.evader_coeffs)):
            need(c.query >= 0 and c.boundary >= 0 and c.accel >= 0, side, "query/boundary/accel must be >= 0")
        need(self.pursuer_coeffs.time >= 0, "pursuer_coeffs.time", "must be >= 0")
        need(self.evader_coeffs.query == 0, "evader_coeffs.query", "the evader cannot query")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GameConfig":
        d = dict(d)
        for key in ("pursuer_coeffs", "evader_coeffs"):
            if key in d and isinstance(d[key], dict):
                d[key] = PayoffCoeffs(**d[key])
        for key in ("shooting_ratio_range", "speed_ratio_range"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"game: unknown field(s) {sorted(unknown)}")
        return cls(**d)


@dataclass
class AgentState:
    x: float
    y: float
    heading: float
    speed: float
    boundary_contact: bool = False

    @property
    def pos(self) -> Vec2:
        return Vec2(self.x, self.y)


@dataclass
class GameState:
    t: int
    pursuer: AgentState
    evader: AgentState
    shooting_radius: float
    last_query_step: int = 0
    last_observed_evader: Vec2 = Vec2(0.0, 0.0)
    last_observed_evader_heading: float = 0.0
    last_observed_pursuer: Vec2 = Vec2(0.0, 0.0)
    last_observed_pursuer_heading: float = 0.0
    cum_payoff_p: float = 0.0
    cum_payoff_e: float = 0.0
    query_count: int = 0
    status: Status = Status.RUNNING
    queried_last_step: bool = False

    def copy(self) -> "GameState":
        return dataclasses.replace(
            self,
            pursuer=dataclasses.replace(self.pursuer),
            evader=dataclasses.replace(self.evader),
        )

    @property
    def separation(self) -> float:
        return distance(self.pursuer.pos, self.evader.pos)

    @property
    def elapsed(self) -> int:
        return self.t - self.last_query_step


@dataclass(frozen=True)
class StepAction:
    pursuer_control: float = 0.0
    query: int = 0
    evader_control: float = 0.0

    def clamped(self) -> "StepAction":
        return StepAction(
            float(min(1.0, max(-1.0, self.pursuer_control))),
            1 if self.query else 0,
            float(min(1.0, max(-1.0, self.evader_control))),
        )


@dataclass(frozen=True)
class StepResult:
    reward_p: float
    reward_e: float
    terminal: bool
    outcome: Status
    observed_full_state: bool
    eliminated_draw: float | None = None


class UniformSource(Protocol):
    def random(self) -> float: ...


def integrate_agent(
    state: AgentState,
    control: float,
    dt: float,
    width: float = 1.0,
    height: float = 1.0,
    omega_max: float = OMEGA_MAX,
) -> AgentState:
    """One forward-Euler step. Position moves along the pre-update heading."""
    a = min(1.0, max(-1.0, float(control)))
    x = state.x + state.speed * dt * math.cos(state.heading)
    y = state.y + state.speed * dt * math.sin(state.heading)
    cx = min(width, max(0.0, x))
    cy = min(height, max(0.0, y))
    contact = cx != x or cy != y or cx in (0.0, width) or cy in (0.0, height)
    heading = wrap_angle(state.heading + a * omega_max * dt)
    return AgentState(cx, cy, heading, state.speed, contact)


def elimination_probability(r: float, r_e: float) -> float:
    """Probability ``2 ** (-r / r_e)`` that an exposed pursuer is shot."""
    if not r_e > 0:
        raise ConfigError(f"shooting radius must be > 0, got {r_e}")
    return 2.0 ** (-max(0.0, r) / r_e)


def reset(config: GameConfig, rng: np.random.Generator) -> GameState:
    """Sample an initial state. Draw order is fixed for reproducibility."""
    cfg = config
    px, py, ex, ey = rng.uniform(0.0, 1.0, size=4)
    hp, he = rng.uniform(-math.pi, math.pi, size=2)
    r_e = cfg.shooting_radius
    if cfg.randomize_shooting_radius:
        r_e = cfg.capture_radius * float(rng.uniform(*cfg.shooting_ratio_range))
    v_p, v_e = cfg.pursuer_speed, cfg.evader_speed
    if cfg.randomize_speed_ratio:
        v_e = v_p * float(rng.uniform(*cfg.speed_ratio_range))
    pursuer = AgentState(float(px) * cfg.width, float(py) * cfg.height, wrap_angle(float(hp)), v_p)
    evader = AgentState(float(ex) * cfg.width, float(ey) * cfg.height, wrap_angle(float(he)), v_e)
    return GameState(
        t=0,
        pursuer=pursuer,
        evader=evader,
        shooting_radius=float(r_e),
        last_query_step=0,
        last_observed_evader=evader.pos,
        last_observed_evader_heading=evader.heading,
        last_observed_pursuer=pursuer.pos,
        last_observed_pursuer_heading=pursuer.heading,
    )


def _running_cost(c: PayoffCoeffs, query: int, boundary: bool, control: float, dt: float) -> float:
    return -(c.time + c.query * query + c.boundary * (1.0 if boundary else 0.0) + c.accel * abs(control)) * dt


def step(
    state: GameState, action: StepAction, rng: UniformSource, config: GameConfig
) -> tuple[GameState, StepResult]:
    """Advance one step; returns a new state, the input is left untouched.

    Within a step: integrate both agents, resolve the query (elimination
    lottery at the post-move distance), charge running costs, test capture,
    test timeout, then add terminal rewards. A fatal query pre-empts capture.
    """
    if state.status is not Status.RUNNING:
        raise UsageError(f"cannot step a finished game (status={state.status.value})")
    cfg = config
    act = action.clamped()
    s = state.copy()
    s.pursuer = integrate_agent(s.pursuer, act.pursuer_control, cfg.dt, cfg.width, cfg.height, cfg.omega_max)
    s.evader = integrate_agent(s.evader, act.evader_control, cfg.dt, cfg.width, cfg.height, cfg.omega_max)
    r = s.separation

    draw = None
    observed = False
    s.queried_last_step = False
    if act.query:
        s.query_count += 1
        draw = float(rng.random())
        if draw < elimination_probability(r, s.shooting_radius):
            s.status = Status.ELIMINATED
        else:
            observed = True
            s.queried_last_step = True
            s.last_query_step = s.t + 1
            s.last_observed_evader = s.evader.pos
            s.last_observed_evader_heading = s.evader.heading
            s.last_observed_pursuer = s.pursuer.pos
            s.last_observed_pursuer_heading = s.pursuer.heading

    reward_p = _running_cost(cfg.pursuer_coeffs, act.query, s.pursuer.boundary_contact, act.pursuer_control, cfg.dt)
    reward_e = _running_cost(cfg.evader_coeffs, 0, s.evader.boundary_contact, act.evader_control, cfg.dt)

    if s.status is Status.RUNNING and r < cfg.capture_radius:
        s.status = Status.CAUGHT
    if s.status is Status.RUNNING and s.t + 1 >= cfg.horizon:
        s.status = Status.TIMEOUT

    if s.status is Status.CAUGHT:
        reward_p += cfg.catch_bonus
        reward_e -= cfg.catch_bonus
    elif s.status is Status.ELIMINATED:
        reward_p -= cfg.shot_penalty

    s.cum_payoff_p += reward_p
    s.cum_payoff_e += reward_e
    s.t += 1
    terminal = s.status is not Status.RUNNING
    return s, StepResult(reward_p, reward_e, terminal, s.status, observed, draw)
