"""Fixed-shape internal state for each agent.

Whether or not a query happened, every agent sees the same fields: its own
pose, the time since the last full-state observation, the opponent's last
observed position, an estimate of the opponent's current position with an
uncertainty ``sigma``, and the episode's physical parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .engine import V_REF, GameConfig, GameState, Vec2, distance

Side = Literal["pursuer", "evader"]

FEATURE_VERSION = 1
# Scales for the environment-parameter block of the feature vector.
SPEED_SCALE = V_REF
RADIUS_SCALE = 0.1
WALL_MARGIN = 0.1

FEATURE_NAMES: tuple[str, ...] = (
    "own_x",  # x / W
    "own_y",  # y / H
    "own_cos",
    "own_sin",
    "elapsed",  # (t - t0) / H_max
    "last_opp_x",
    "last_opp_y",
    "est_opp_x",
    "est_opp_y",
    "sigma",  # sigma / map diagonal
    "v_self",  # / V_REF
    "v_opp",  # / V_REF
    "capture_radius",  # / RADIUS_SCALE
    "shooting_radius",  # / RADIUS_SCALE
    "omega_max",  # / pi
    "fresh",
    "bearing_cos",  # bearing to the estimate, in the agent's own frame
    "bearing_sin",
    "est_distance",  # / map diagonal
    "exposure",  # 2 ** (-est_distance / r_e)
    "wall_x",  # clip(min(x, W - x) / WALL_MARGIN, 0, 1), same for y
    "wall_y",
)
FEATURE_DIM = len(FEATURE_NAMES)


def feature_schema() -> dict:
    return {
        "version": FEATURE_VERSION,
        "names": list(FEATURE_NAMES),
        "scales": {"speed": SPEED_SCALE, "radius": RADIUS_SCALE, "wall_margin": WALL_MARGIN},
    }


def write_feature_schema(path) -> None:
    with open(path, "w") as fh:
        json.dump(feature_schema(), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class Observation:
    own_x: float
    own_y: float
    own_heading: float
    elapsed: int
    last_opponent_pos: Vec2
    last_opponent_heading: float
    estimated_opponent_pos: Vec2
    sigma: float
    v_self: float
    v_opp: float
    capture_radius: float
    shooting_radius: float
    omega_max: float
    fresh: bool
    horizon: int
    t: int = 0

    @property
    def env_params(self) -> tuple[float, float, float, float, float]:
        return (self.v_self, self.v_opp, self.capture_radius, self.shooting_radius, self.omega_max)

    @property
    def estimated_distance(self) -> float:
        return distance((self.own_x, self.own_y), self.estimated_opponent_pos)


def fallback_prediction(state: GameState, side: Side, dt: float = 1.0) -> tuple[Vec2, float]:
    """Last-known-position estimate with a reachable-radius sigma."""
    opp = state.evader if side == "pursuer" else state.pursuer
    last = state.last_observed_evader if side == "pursuer" else state.last_observed_pursuer
    return last, opp.speed * state.elapsed * dt


def build_observation(
    state: GameState,
    side: Side,
    config: GameConfig,
    prediction: tuple[Vec2, float] | None = None,
) -> Observation:
    """Observation for ``side``.

    ``prediction`` is the opponent model's ``(position, sigma)``; it is
    ignored on the step right after a query, where the estimate is the true
    opponent position with ``sigma = 0``. With no model attached, the
    last-known position is held and sigma grows linearly.
    """
    own, opp = (state.pursuer, state.evader) if side == "pursuer" else (state.evader, state.pursuer)
    if side == "pursuer":
        last, last_heading = state.last_observed_evader, state.last_observed_evader_heading
    else:
        last, last_heading = state.last_observed_pursuer, state.last_observed_pursuer_heading
    elapsed = state.elapsed
    fresh = elapsed == 0
    if fresh:
        est, sigma = opp.pos, 0.0
    elif prediction is not None:
        est, sigma = Vec2(float(prediction[0][0]), float(prediction[0][1])), float(prediction[1])
    else:
        est, sigma = fallback_prediction(state, side, config.dt)
    return Observation(
        own_x=own.x,
        own_y=own.y,
        own_heading=own.heading,
        elapsed=elapsed,
        last_opponent_pos=Vec2(*last),
        last_opponent_heading=last_heading,
        estimated_opponent_pos=Vec2(*est),
        sigma=max(0.0, sigma),
        v_self=own.speed,
        v_opp=opp.speed,
        capture_radius=config.capture_radius,
        shooting_radius=state.shooting_radius,
        omega_max=config.omega_max,
        fresh=fresh,
        horizon=config.horizon,
        t=state.t,
    )


def encode_features(obs: Observation, width: float = 1.0, height: float = 1.0) -> np.ndarray:
    """Feature vector in ``FEATURE_NAMES`` order (schema version 1)."""
    diag = math.hypot(width, height)
    ex, ey = obs.estimated_opponent_pos
    dx, dy = ex - obs.own_x, ey - obs.own_y
    d = math.hypot(dx, dy)
    if d > 0.0:
        rel = math.atan2(dy, dx) - obs.own_heading
        bc, bs = math.cos(rel), math.sin(rel)
    else:
        bc, bs = 1.0, 0.0
    wall_x = min(obs.own_x, width - obs.own_x) / WALL_MARGIN
    wall_y = min(obs.own_y, height - obs.own_y) / WALL_MARGIN
    return np.array(
        [
            obs.own_x / width,
            obs.own_y / height,
            math.cos(obs.own_heading),
            math.sin(obs.own_heading),
            obs.elapsed / obs.horizon,
            obs.last_opponent_pos[0] / width,
            obs.last_opponent_pos[1] / height,
            ex / width,
            ey / height,
            obs.sigma / diag,
            obs.v_self / SPEED_SCALE,
            obs.v_opp / SPEED_SCALE,
            obs.capture_radius / RADIUS_SCALE,
            obs.shooting_radius / RADIUS_SCALE,
            obs.omega_max / math.pi,
            1.0 if obs.fresh else 0.0,
            bc,
            bs,
            d / diag,
            2.0 ** (-d / obs.shooting_radius),
            min(1.0, max(0.0, wall_x)),
            min(1.0, max(0.0, wall_y)),
        ],
        dtype=np.float64,
    )


def prediction_feedback(predicted: Vec2, sigma: float, truth: Vec2, eps: float = 1e-6) -> float:
    """Gaussian NLL ``|err| / (2 sigma + eps) + log(sigma + eps) / 2``."""
    err = distance(predicted, truth)
    return err / (2.0 * sigma + eps) + 0.5 * math.log(sigma + eps)
