from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peec.engine import AgentState, ConfigError, GameConfig, GameState, Status, StepAction, Vec2, step
from peec.learn.evaluate import SidePolicies, evaluate, run_episode
from peec.mediator import (
    FEATURE_DIM,
    FEATURE_NAMES,
    build_observation,
    encode_features,
    feature_schema,
    prediction_feedback,
    write_feature_schema,
)
from peec.metrics import report_traces, summarize
from peec.policy import (
    Evasive,
    NoComm,
    PeriodicComm,
    PurePursuit,
    RandomComm,
    Straight,
    evasive_nav,
    make_nav_policy,
    make_query_policy,
    no_comm_policy,
    periodic_comm_policy,
    pure_pursuit_nav,
    random_comm_policy,
)
from peec.rng import stream
from peec.trace import EpisodeTrace, read_traces, write_traces


def state_at(p, e, t=0, t0=0, last_e=None, vp=0.0077, ve=0.0077, hp=0.0, r_e=0.05) -> GameState:
    pa = AgentState(p[0], p[1], hp, vp)
    ea = AgentState(e[0], e[1], 0.0, ve)
    le = Vec2(*(last_e or e))
    return GameState(t, pa, ea, r_e, last_query_step=t0, last_observed_evader=le, last_observed_pursuer=pa.pos)


# build_observation


def test_fresh_observation_is_ground_truth():
    s = state_at((0.2, 0.3), (0.6, 0.7), t=4, t0=4, last_e=(0.0, 0.0))
    obs = build_observation(s, "pursuer", GameConfig(), prediction=(Vec2(0.9, 0.9), 0.3))
    assert obs.fresh and obs.elapsed == 0 and obs.sigma == 0.0
    assert obs.estimated_opponent_pos == (0.6, 0.7)


def test_fallback_holds_last_position():
    s = state_at((0.5, 0.5), (0.3, 0.4), t=5, t0=0, last_e=(0.2, 0.2), ve=0.01)
    obs = build_observation(s, "pursuer", GameConfig())
    assert obs.estimated_opponent_pos == (0.2, 0.2)
    assert obs.sigma == pytest.approx(0.05)
    s.t = 10
    assert build_observation(s, "pursuer", GameConfig()).sigma == pytest.approx(0.10)


def test_model_prediction_passthrough():
    s = state_at((0.5, 0.5), (0.3, 0.4), t=5, t0=0)
    obs = build_observation(s, "pursuer", GameConfig(), prediction=(Vec2(0.11, 0.22), 0.033))
    assert obs.estimated_opponent_pos == (0.11, 0.22) and obs.sigma == 0.033


def test_both_sides_see_truth_after_query():
    cfg = GameConfig()
    s = state_at((0.2, 0.2), (0.8, 0.8))

    class Sure:
        def random(self):
            return 0.999

    s, res = step(s, StepAction(0.0, 1, 0.0), Sure(), cfg)
    assert res.observed_full_state
    op = build_observation(s, "pursuer", cfg)
    oe = build_observation(s, "evader", cfg)
    assert op.estimated_opponent_pos == s.evader.pos
    assert oe.estimated_opponent_pos == s.pursuer.pos


# encode_features


def test_feature_layout():
    obs = build_observation(state_at((0.5, 0.5), (0.2, 0.2)), "pursuer", GameConfig())
    f = encode_features(obs)
    assert f.shape == (FEATURE_DIM,) == (len(FEATURE_NAMES),)
    assert tuple(f[:4]) == (0.5, 0.5, 1.0, 0.0)


def test_scaled_elapsed_at_horizon():
    cfg = GameConfig(horizon=50)
    s = state_at((0.5, 0.5), (0.2, 0.2), t=50, t0=0)
    f = encode_features(build_observation(s, "pursuer", cfg))
    assert f[FEATURE_NAMES.index("elapsed")] == 1.0


def test_equal_observations_equal_features():
    s = state_at((0.1, 0.9), (0.4, 0.4), t=3)
    a = encode_features(build_observation(s, "evader", GameConfig()))
    b = encode_features(build_observation(s.copy(), "evader", GameConfig()))
    assert np.array_equal(a, b)


@settings(max_examples=50)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.integers(0, 40))
def test_features_finite_and_fixed_shape(px, py, ex, ey, el):
    s = state_at((px, py), (ex, ey), t=el, t0=0)
    for side in ("pursuer", "evader"):
        f = encode_features(build_observation(s, side, GameConfig()))
        assert f.shape == (FEATURE_DIM,) and np.all(np.isfinite(f))


def test_schema_file(tmp_path):
    write_feature_schema(tmp_path / "schema.json")
    import json

    data = json.loads((tmp_path / "schema.json").read_text())
    assert data == feature_schema()
    assert data["names"] == list(FEATURE_NAMES)


# prediction_feedback


def test_nll_zero_error():
    assert prediction_feedback(Vec2(0, 0), 1.0, Vec2(0, 0)) == pytest.approx(0.5 * math.log(1 + 1e-6), abs=1e-15)


def test_nll_unit_error():
    assert abs(prediction_feedback(Vec2(0, 0), 0.5, Vec2(1, 0), eps=0.0) - 0.6534264097200273) < 1e-9


def test_nll_small_error():
    expected = 0.1 / 0.200001 + 0.5 * math.log(0.100001)
    assert abs(prediction_feedback(Vec2(0, 0), 0.1, Vec2(0.1, 0), eps=1e-6) - expected) < 1e-9
    assert expected == pytest.approx(-0.65129, abs=1e-5)


def test_nll_minimized_at_sigma_equal_error():
    e = 0.3
    sig = np.linspace(0.05, 1.0, 2001)
    vals = [prediction_feedback(Vec2(0, 0), s, Vec2(e, 0), eps=1e-12) for s in sig]
    assert sig[int(np.argmin(vals))] == pytest.approx(e, abs=1e-3)


# query policies


def test_no_comm():
    obs = build_observation(state_at((0.5, 0.5), (0.2, 0.2)), "pursuer", GameConfig())
    assert no_comm_policy().act(obs, None) == 0
    tr = run_episode(GameConfig(horizon=1000), SidePolicies(Straight(), NoComm()), SidePolicies(Straight()), seed=3)
    assert summarize(tr).query_count == 0


def test_random_comm_probability():
    rc = random_comm_policy()
    cfg = GameConfig(shooting_radius=0.05)
    # estimate 0.05 away: p = 1 - 2^-1
    s = state_at((0.5, 0.5), (0.55, 0.5), t=1, t0=0, r_e=0.05)
    obs = build_observation(s, "pursuer", cfg)
    rng = stream(0, "test")
    hits = np.mean([rc.act(obs, rng) for _ in range(20000)])
    assert hits == pytest.approx(0.5, abs=0.02)
    point_blank = build_observation(state_at((0.5, 0.5), (0.5, 0.5), t=1, t0=0), "pursuer", cfg)
    assert sum(rc.act(point_blank, rng) for _ in range(1000)) == 0
    far = build_observation(state_at((0.0, 0.0), (1.0, 1.0), t=1, t0=0, r_e=0.025), "pursuer", cfg)
    assert np.mean([rc.act(far, rng) for _ in range(1000)]) > 0.99


# frozen agents and a negligible shooting radius: every episode times out
FROZEN = dict(evader_speed=1e-9, pursuer_speed=1e-9, shooting_radius=1e-9)


def test_periodic_schedule():
    cfg = GameConfig(horizon=20, **FROZEN)
    tr = run_episode(cfg, SidePolicies(Straight(), periodic_comm_policy(5)), SidePolicies(Straight()), seed=11)
    assert tr.outcome == "Timeout"
    assert summarize(tr).query_steps == [5, 10, 15, 20]
    assert report_traces([tr]).C_gap.value == 5


def test_periodic_bounds():
    with pytest.raises(ConfigError):
        periodic_comm_policy(0)
    cfg = GameConfig(horizon=30, **FROZEN)
    tr = run_episode(cfg, SidePolicies(Straight(), PeriodicComm(1)), SidePolicies(Straight()), seed=2)
    s = summarize(tr)
    assert tr.outcome == "Timeout"
    assert s.query_count == s.length == 30
    assert report_traces([tr]).C_ratio.value == 1.0
    tr = run_episode(cfg, SidePolicies(Straight(), PeriodicComm(31)), SidePolicies(Straight()), seed=2)
    assert summarize(tr).query_count == 0


def test_periodic_gap_is_k_on_any_episode():
    cfg = GameConfig(horizon=200)
    pol = SidePolicies(pure_pursuit_nav(), periodic_comm_policy(7))
    for tr in evaluate(pol, SidePolicies(evasive_nav()), cfg, 20):
        s = summarize(tr)
        if s.query_count >= 2:
            assert set(s.gaps) == {7}


def test_factories():
    assert isinstance(make_query_policy("none"), NoComm)
    assert isinstance(make_query_policy("random"), RandomComm)
    assert make_query_policy("periodic:40").k == 40
    assert isinstance(make_nav_policy("pure_pursuit"), PurePursuit)
    assert make_nav_policy("pure_pursuit:2").gain == 2.0
    assert isinstance(make_nav_policy("evasive"), Evasive)
    with pytest.raises(ConfigError):
        make_query_policy("sometimes")


# navigation


def test_pure_pursuit_controls():
    obs = build_observation(state_at((0.5, 0.5), (0.8, 0.5)), "pursuer", GameConfig())
    assert PurePursuit(2.0).act(obs) == 0.0
    obs = build_observation(state_at((0.5, 0.5), (0.5, 0.8)), "pursuer", GameConfig())
    assert PurePursuit(2.0).act(obs) == 1.0


def test_pure_pursuit_catches_stationary_target():
    cfg = GameConfig(horizon=1000, evader_speed=1e-9)
    for seed in range(20):
        tr = run_episode(cfg, SidePolicies(pure_pursuit_nav(), NoComm()), SidePolicies(Straight()), seed=seed)
        h = tr.header["initial"]
        d0 = math.hypot(h["px"] - h["ex"], h["py"] - h["ey"])
        assert tr.outcome == "Caught"
        # straight-line time plus a turn-around transient
        assert len(tr) <= math.ceil((d0 - cfg.capture_radius) / cfg.pursuer_speed) + 30


def test_evasive_turns_away():
    # pursuer due north, evader heading north: must turn hard
    s = state_at((0.5, 0.9), (0.5, 0.5))
    s.evader.heading = math.pi / 2
    obs = build_observation(s, "evader", GameConfig())
    assert abs(Evasive(2.0).act(obs)) == 1.0


def test_evasive_degenerate_holds_heading():
    s = state_at((0.5, 0.5), (0.5, 0.5))
    assert Evasive().act(build_observation(s, "evader", GameConfig())) == 0.0


def test_evasive_escapes_pure_pursuit():
    # pursuer refreshes its estimate every 40 steps; a straight-line evader
    # is caught or shoots the pursuer in every one of these episodes
    cfg = GameConfig(horizon=1000)
    pursuer = SidePolicies(pure_pursuit_nav(), periodic_comm_policy(40))
    assert report_traces(evaluate(pursuer, SidePolicies(evasive_nav()), cfg, 150)).P_timeout.value > 0.5
    assert report_traces(evaluate(pursuer, SidePolicies(Straight()), cfg, 50)).P_timeout.value < 0.1


# traces


def test_trace_roundtrip_and_determinism(tmp_path):
    cfg = GameConfig(horizon=80)
    pol = SidePolicies(pure_pursuit_nav(), random_comm_policy(), name="pp")
    a = evaluate(pol, SidePolicies(evasive_nav()), cfg, 4)
    b = evaluate(pol, SidePolicies(evasive_nav()), cfg, 4)
    assert [t.to_jsonl() for t in a] == [t.to_jsonl() for t in b]
    write_traces(a, tmp_path)
    back = read_traces(tmp_path)
    assert [t.to_jsonl() for t in back] == [t.to_jsonl() for t in a]
    assert all(t.terminal for t in back)
    assert a[0].records[0]["t"] == 1


def test_trace_rejects_headerless():
    with pytest.raises(ValueError):
        EpisodeTrace.from_jsonl('{"t": 1}\n')


def test_outcomes_partition():
    cfg = GameConfig(horizon=150, randomize_shooting_radius=True)
    traces = evaluate(SidePolicies(pure_pursuit_nav(), random_comm_policy()), SidePolicies(evasive_nav()), cfg, 30)
    rep = report_traces(traces)
    assert rep.P_win.value + rep.P_shot.value + rep.P_timeout.value == pytest.approx(1.0)
    assert {t.outcome for t in traces} <= {s.value for s in Status} - {"Running"}
