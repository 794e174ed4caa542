from __future__ import annotations

import json
from pathlib import Path

import pytest

from peec.cli import main, parse_alphas, resolve_seed, sweep_game
from peec.engine import CAPTURE_RADIUS, ConfigError, GameConfig, UsageError
from peec.provenance import code_version, read_stamped_csv

TINY = {
    "episodes": 4,
    "eval_freq": 2,
    "eval_episodes": 2,
    "game": {"horizon": 40},
    "td3": {"hidden": 6, "warmup": 30, "buffer_capacity": 2000, "batch_size": 8},
    "ppo": {"hidden": 6, "rollout": 50, "minibatch": 8},
    "opponent": {"hidden": 6, "batch_size": 4},
}


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv("PEEC_SEED", raising=False)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert main(["train", "--config", json.dumps(TINY), "--out", str(out), "--quiet"]) == 0
    return out


def _files(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# exit codes


def test_usage_errors_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--no-such-flag"])
    assert exc.value.code == 1
    assert main(["eval", "--pursuer-query", "shadow", "--out", str(tmp_path)]) == 1
    assert main(["sweep", "--variable", "r_e", "--grid", "", "--out", str(tmp_path)]) == 1
    assert main(["plot", "--out", str(tmp_path)]) == 1
    assert main(["eval", "--set", "game.horizon", "--out", str(tmp_path)]) == 1


def test_config_errors_exit_2(tmp_path, monkeypatch):
    out = str(tmp_path)
    assert main(["eval", "--set", "game.no_such_field=1", "--out", out]) == 2
    assert main(["eval", "--set", "game.horizon=0", "--out", out]) == 2
    assert main(["eval", "--config", "{not json", "--out", out]) == 2
    assert main(["eval", "--config", '{"td3": {"bogus": 1}}', "--out", out]) == 2
    assert main(["train", "--profile", "huge", "--out", out]) == 2
    assert main(["eval", "--pursuer-query", "sometimes", "--episodes", "1", "--out", out]) == 2
    monkeypatch.setenv("PEEC_SEED", "abc")
    assert main(["eval", "--episodes", "1", "--out", out]) == 2


def test_runtime_errors_exit_3(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "missing"), "--out", str(tmp_path)]) == 3
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"kind": "header"}\nnot json\n')
    assert main(["plot", "--trace", str(bad), "--out", str(tmp_path)]) == 3


# configuration resolution


def test_seed_precedence(monkeypatch):
    assert resolve_seed(5, None) == 5
    monkeypatch.setenv("PEEC_SEED", "9")
    assert resolve_seed(5, None) == 9
    assert resolve_seed(5, 2) == 2


def test_run_json_records_resolved_config(tmp_path, monkeypatch):
    monkeypatch.setenv("PEEC_SEED", "31")
    out = tmp_path / "e"
    assert main(["eval", "--episodes", "2", "--set", "game.horizon=25", "--out", str(out)]) == 0
    run = json.loads((out / "run.json").read_text())
    assert run["seed"] == 31 and run["config"]["seed"] == 31
    assert run["config"]["game"]["horizon"] == 25
    assert run["code_version"] == code_version()
    st, body = read_stamped_csv((out / "report.csv").read_text())
    assert st == run and body.startswith("policy,")


def test_parse_alphas():
    assert parse_alphas("0:10:3") == [0.0, 5.0, 10.0]
    assert parse_alphas("1,2.5") == [1.0, 2.5]
    with pytest.raises(UsageError):
        parse_alphas("0:1")


def test_sweep_game_fixes_the_variable():
    g = GameConfig(randomize_shooting_radius=True, randomize_speed_ratio=True)
    a = sweep_game(g, "r_e", 3.0)
    assert a.shooting_radius == pytest.approx(3 * CAPTURE_RADIUS) and not a.randomize_shooting_radius
    b = sweep_game(g, "speed_ratio", 2.0)
    assert b.evader_speed == pytest.approx(2 * g.pursuer_speed) and not b.randomize_speed_ratio
    with pytest.raises(ConfigError):
        sweep_game(g, "speed_ratio", -1.0)


# subcommands


def test_train_is_reproducible(trained, tmp_path):
    again = tmp_path / "again"
    assert main(["train", "--config", json.dumps(TINY), "--out", str(again), "--quiet"]) == 0
    assert (again / "train_log.csv").read_bytes() == (trained / "train_log.csv").read_bytes()
    assert (again / "run.json").read_bytes() == (trained / "run.json").read_bytes()
    assert (trained / "ckpt_4.bin").exists()


def test_eval_is_byte_identical_across_runs(trained, tmp_path):
    args = ["eval", "--checkpoint", str(trained / "ckpt_4"), "--pursuer-query", "shadow",
            "--pursuer-query", "none", "--episodes", "4"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b), "--workers", "2"]) == 0
    fa, fb = _files(a), _files(b)
    assert fa == fb
    assert any(k.startswith("traces/learned_shadow/") for k in fa)
    # P_shot is undefined for a pursuer that never queries
    assert "N/A" in (a / "report.txt").read_text().splitlines()[-1]


def test_sweep_writes_reports_and_regressions(tmp_path, capsys):
    out = tmp_path / "s"
    rc = main(["sweep", "--variable", "speed_ratio", "--grid", "0.5,2", "--episodes", "4",
               "--pursuer-query", "periodic:10", "--set", "game.horizon=40", "--out", str(out)])
    assert rc == 0
    _, body = read_stamped_csv((out / "regression.csv").read_text())
    lines = body.splitlines()
    assert lines[0] == "metric,beta,intercept,r2,p_value,n,bh_reject"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["P_win", "P_shot", "P_timeout", "C_ratio", "T_len"]
    assert all(ln.split(",")[5] == "8" for ln in lines[1:])
    _, rep = read_stamped_csv((out / "sweep.csv").read_text())
    assert "speed_ratio=0.5" in rep and "speed_ratio=2" in rep


def test_oracle_writes_certificate(tmp_path, capsys):
    out = tmp_path / "o"
    game = {"n": 3, "horizon": 4, "pursuer_start": [0, 0], "evader_start": [2, 2], "d_e": 0}
    assert main(["oracle", "--game", json.dumps(game), "--alphas", "0:20:5", "--out", str(out)]) == 0
    certs = json.loads((out / "certificates.json").read_text())
    assert len(certs) == 1 and isinstance(certs[0]["passed"], bool)
    _, sweep = read_stamped_csv((out / "sweep.csv").read_text())
    assert sweep.splitlines()[0] == "alpha,value"
    assert "monotone=pass" in capsys.readouterr().out


def test_oracle_random_family(tmp_path):
    out = tmp_path / "r"
    assert main(["oracle", "--random", "2", "--family", "no_elimination", "--alphas", "0,10", "--seed", "3",
                 "--out", str(out)]) == 0
    _, body = read_stamped_csv((out / "summary.csv").read_text())
    assert len(body.splitlines()) == 3


def test_plot_trace_and_log(trained, tmp_path):
    ev = tmp_path / "ev"
    assert main(["eval", "--episodes", "1", "--pursuer-query", "periodic:5", "--set", "game.horizon=30",
                 "--out", str(ev)]) == 0
    trace = next((ev / "traces").rglob("episode_00000.jsonl"))
    out = tmp_path / "p"
    assert main(["plot", "--trace", str(trace), "--log", str(trained / "train_log.csv"), "--out", str(out)]) == 0
    assert (out / "episode_00000.svg").read_text().startswith("<svg")
    _, dist = read_stamped_csv((out / "episode_00000_distance.csv").read_text())
    assert dist.startswith("t,distance\n0,")
    assert (out / "dynamics.svg").exists()
    _, dyn = read_stamped_csv((out / "dynamics.csv").read_text())
    assert len(dyn.splitlines()) == 3
