from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peec.engine import (
    CAPTURE_RADIUS,
    OMEGA_MAX,
    V_REF,
    AgentState,
    ConfigError,
    GameConfig,
    GameState,
    PayoffCoeffs,
    Status,
    StepAction,
    UsageError,
    Vec2,
    elimination_probability,
    integrate_agent,
    reset,
    step,
    wrap_angle,
)
from peec.rng import stream


class FixedDraw:
    """Elimination source returning a preset uniform."""

    def __init__(self, u: float):
        self.u = u

    def random(self) -> float:
        return self.u


def make_state(p=(0.5, 0.5), e=(0.5, 1.0), vp=0.0, ve=0.0, r_e=0.05, hp=0.0, he=0.0) -> GameState:
    pa = AgentState(p[0], p[1], hp, vp)
    ea = AgentState(e[0], e[1], he, ve)
    return GameState(0, pa, ea, r_e, last_observed_evader=ea.pos, last_observed_pursuer=pa.pos)


def test_units():
    assert V_REF == pytest.approx(15 * 0.514444 / 1000, rel=1e-4)
    assert CAPTURE_RADIUS == 0.025
    assert OMEGA_MAX == pytest.approx(0.9 * math.pi)


# integrate_agent


def test_straight_line_motion():
    s = integrate_agent(AgentState(0.5, 0.5, 0.0, 0.01), 0.0, 1.0)
    assert (s.x, s.y, s.heading) == pytest.approx((0.51, 0.5, 0.0))
    assert not s.boundary_contact


def test_pure_rotation():
    s = integrate_agent(AgentState(0.5, 0.5, 0.0, 0.0), 1.0, 1.0, omega_max=0.9 * math.pi)
    assert (s.x, s.y) == (0.5, 0.5)
    assert s.heading == pytest.approx(0.9 * math.pi)


def test_clamp_at_boundary():
    s = integrate_agent(AgentState(0.999, 0.5, 0.0, 0.01), 0.0, 1.0)
    assert (s.x, s.y) == (1.0, 0.5)
    assert s.boundary_contact


def test_position_uses_pre_update_heading():
    s = integrate_agent(AgentState(0.5, 0.5, 0.0, 0.01), 1.0, 1.0)
    assert s.y == 0.5 and s.x == pytest.approx(0.51)


def test_control_is_clamped():
    a = integrate_agent(AgentState(0.5, 0.5, 0.0, 0.0), 7.0, 1.0)
    b = integrate_agent(AgentState(0.5, 0.5, 0.0, 0.0), 1.0, 1.0)
    assert a == b


@given(
    st.floats(0, 1),
    st.floats(0, 1),
    st.floats(-math.pi, math.pi, exclude_max=True),
    st.floats(0, 0.1),
    st.floats(-5, 5),
)
def test_integrate_invariants(x, y, h, v, a):
    s = integrate_agent(AgentState(x, y, h, v), a, 1.0)
    assert 0.0 <= s.x <= 1.0 and 0.0 <= s.y <= 1.0
    assert -math.pi <= s.heading < math.pi
    assert all(math.isfinite(c) for c in (s.x, s.y, s.heading))


@given(st.floats(-50, 50))
def test_wrap_angle_range(theta):
    w = wrap_angle(theta)
    assert -math.pi <= w < math.pi
    assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)


# elimination_probability


@pytest.mark.parametrize("mult, p", [(0.0, 1.0), (1.0, 0.5), (2.0, 0.25)])
def test_elimination_probability_points(mult, p):
    assert abs(elimination_probability(mult * 0.05, 0.05) - p) <= 1e-12


def test_elimination_probability_rejects_bad_radius():
    with pytest.raises(ConfigError):
        elimination_probability(0.1, 0.0)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 0.2))
def test_elimination_monotone_in_distance(r1, r2, r_e):
    if r1 < r2:
        assert elimination_probability(r1, r_e) > elimination_probability(r2, r_e) or r2 - r1 < 1e-12


@given(st.floats(0.001, 1), st.floats(0.01, 0.2), st.floats(0.01, 0.2))
def test_elimination_monotone_in_radius(r, a, b):
    if a < b - 1e-9:
        assert elimination_probability(r, a) < elimination_probability(r, b)


# step


def test_time_cost_only():
    cfg = GameConfig()
    s, res = step(make_state(e=(0.5, 1.0)), StepAction(0.0, 0, 0.0), FixedDraw(0.9), cfg)
    assert res.reward_p == pytest.approx(-0.5)
    assert res.outcome is Status.RUNNING and not res.terminal


def test_capture_bonus():
    cfg = GameConfig()
    s, res = step(make_state(e=(0.51, 0.5)), StepAction(), FixedDraw(0.9), cfg)
    assert res.outcome is Status.CAUGHT
    assert res.reward_p == pytest.approx(1000 - 0.5)
    assert res.reward_e == pytest.approx(-1000 + 0.5)


def test_fatal_query():
    cfg = GameConfig()
    r_e = 0.05
    state = make_state(e=(0.5, 0.5 + r_e), r_e=r_e)
    s, res = step(state, StepAction(0.0, 1, 0.0), FixedDraw(0.4), cfg)
    assert res.outcome is Status.ELIMINATED
    assert res.reward_p == pytest.approx(-100 - 0.5)
    assert res.reward_e == pytest.approx(0.5)
    assert res.eliminated_draw == 0.4
    assert s.query_count == 1


def test_survived_query_refreshes_observation():
    cfg = GameConfig()
    state = make_state(e=(0.5, 0.9), ve=0.01, he=math.pi)
    state.t = 4
    s, res = step(state, StepAction(0.0, 1, 0.0), FixedDraw(0.99), cfg)
    assert res.observed_full_state
    assert s.last_query_step == 5 and s.elapsed == 0
    assert s.last_observed_evader == s.evader.pos


def test_elimination_preempts_capture():
    cfg = GameConfig()
    s, res = step(make_state(e=(0.51, 0.5)), StepAction(0.0, 1, 0.0), FixedDraw(0.0), cfg)
    assert res.outcome is Status.ELIMINATED


def test_timeout_and_terminal_guard():
    cfg = GameConfig(horizon=3)
    s = make_state()
    for _ in range(3):
        s, res = step(s, StepAction(), FixedDraw(0.5), cfg)
    assert res.outcome is Status.TIMEOUT and s.t == 3
    with pytest.raises(UsageError):
        step(s, StepAction(), FixedDraw(0.5), cfg)


def test_zero_sum_on_timeout():
    cfg = GameConfig(
        horizon=20,
        pursuer_coeffs=PayoffCoeffs(0.5, 0.0, 0.0, 0.0),
        evader_coeffs=PayoffCoeffs(-0.5, 0.0, 0.0, 0.0),
    )
    s = make_state(e=(0.1, 0.9))
    while s.status is Status.RUNNING:
        s, _ = step(s, StepAction(0.3, 0, -0.2), FixedDraw(0.5), cfg)
    assert s.status is Status.TIMEOUT
    assert s.cum_payoff_p == -s.cum_payoff_e


# reset


def test_reset_deterministic():
    cfg = GameConfig(randomize_shooting_radius=True, randomize_speed_ratio=True)
    assert reset(cfg, stream(7, "reset")) == reset(cfg, stream(7, "reset"))


def test_reset_passthrough():
    s = reset(GameConfig(shooting_radius=0.1), stream(1, "reset"))
    assert s.shooting_radius == 0.1
    assert s.t == 0 and s.last_query_step == 0 and s.status is Status.RUNNING
    assert s.last_observed_evader == s.evader.pos
    assert s.last_observed_pursuer == s.pursuer.pos


def test_reset_randomized_radius_mean():
    cfg = GameConfig(randomize_shooting_radius=True)
    rng = stream(3, "reset")
    ratios = [reset(cfg, rng).shooting_radius / cfg.capture_radius for _ in range(10_000)]
    assert abs(np.mean(ratios) - 2.5) < 0.05
    assert min(ratios) >= 1.0 and max(ratios) <= 4.0


def test_config_validation():
    with pytest.raises(ConfigError):
        GameConfig(dt=0).validate()
    with pytest.raises(ConfigError):
        GameConfig(speed_ratio_range=(0.05, 2)).validate()
    assert GameConfig.from_dict(GameConfig(seed=5).to_dict()) == GameConfig(seed=5)


# episode-level invariants


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_payoff_decomposition(seed):
    cfg = GameConfig(horizon=60, randomize_shooting_radius=True, randomize_speed_ratio=True)
    rng = stream(seed, "test")
    s = reset(cfg, stream(seed, "reset"))
    elim = stream(seed, "elimination")
    total = 0.0
    n_q = 0
    terminal = 0.0
    while s.status is Status.RUNNING:
        a = StepAction(rng.uniform(-1, 1), int(rng.random() < 0.2), rng.uniform(-1, 1))
        n_q += a.query
        prev = s
        s, res = step(prev, a, elim, cfg)
        c = cfg.pursuer_coeffs
        running = -(c.time + c.query * a.query + c.boundary * s.pursuer.boundary_contact + c.accel * abs(a.pursuer_control))
        terminal = res.reward_p - running
        total += running
        assert 0 <= s.last_query_step <= s.t <= cfg.horizon
    assert s.query_count == n_q
    expected = {Status.CAUGHT: 1000.0, Status.ELIMINATED: -100.0, Status.TIMEOUT: 0.0}[s.status]
    assert terminal == pytest.approx(expected)
    assert s.cum_payoff_p == pytest.approx(total + expected, abs=1e-9)


def test_step_does_not_mutate_input():
    s = make_state(vp=0.01, ve=0.01)
    before = s.copy()
    step(s, StepAction(0.5, 1, -0.5), FixedDraw(0.99), GameConfig())
    assert s == before


def test_vec2_is_tuple():
    assert Vec2(1.0, 2.0) == (1.0, 2.0)
