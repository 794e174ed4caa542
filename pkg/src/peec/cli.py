"""Command line entry point: ``peec {train,eval,sweep,oracle,plot}``.

Configuration is resolved as profile defaults, then ``--config`` (a JSON
document, possibly partial), then ``--set dotted.key=value`` overrides, then
the ``PEEC_SEED`` environment variable, then ``--seed``. The resolved
configuration, seed and code version are written into every artifact.

Exit codes: 0 ok, 1 usage, 2 config, 3 runtime.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import oracle as orc
from .engine import CAPTURE_RADIUS, ConfigError, GameConfig, UsageError
from .learn.evaluate import EVAL_SEED_BASE, LearnedNav, LearnedQuery, SidePolicies, evaluate
from .learn.train import PROFILES, TrainConfig, Trainer, load_agents
from .metrics import RegressionError, benjamini_hochberg, ols_fit, report_csv, report_table, report_traces, summarize
from .neural.checkpoint import CheckpointError
from .plot import distance_csv, dynamics_csv, dynamics_svg, trajectory_svg
from .policy import make_nav_policy, make_query_policy
from .provenance import stamp, stamp_line
from .trace import read_trace, write_traces

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# configuration


def parse_value(text: str):
    """JSON when it parses (numbers, booleans, lists), the raw string otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        if not isinstance(cur.get(p), dict):
            raise ConfigError(f"{key}: {p!r} is not a config section")
        cur = cur[p]
    if parts[-1] not in cur:
        raise ConfigError(f"{key}: unknown field")
    cur[parts[-1]] = value


def deep_merge(base: dict, update: dict, path: str = "") -> dict:
    out = dict(base)
    for k, v in update.items():
        where = f"{path}{k}"
        if k not in out:
            raise ConfigError(f"{where}: unknown field")
        out[k] = deep_merge(out[k], v, where + ".") if isinstance(out[k], dict) and isinstance(v, dict) else v
    return out


def _load_json_arg(text: str) -> dict:
    """``text`` is a path to a JSON file or an inline JSON object."""
    p = Path(text)
    try:
        raw = p.read_text() if p.exists() else text
        d = json.loads(raw)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read JSON config {text!r}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{text}: config must be a JSON object")
    return d


def resolve_seed(cfg_seed: int, flag: int | None) -> int:
    env = os.environ.get("PEEC_SEED")
    seed = cfg_seed
    if env is not None:
        try:
            seed = int(env)
        except ValueError as exc:
            raise ConfigError(f"PEEC_SEED: not an integer: {env!r}") from exc
    return flag if flag is not None else seed


def resolve_train_config(profile: str, base: dict | None, config: str | None, sets: list[str], seed: int | None) -> TrainConfig:
    if profile not in PROFILES:
        raise ConfigError(f"profile: unknown profile {profile!r} (choose from {sorted(PROFILES)})")
    d = base if base is not None else PROFILES[profile]().to_dict()
    if config:
        d = deep_merge(d, _load_json_arg(config))
    for item in sets:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        set_dotted(d, key.strip(), parse_value(value))
    d["seed"] = resolve_seed(int(d.get("seed", 0)), seed)
    try:
        return TrainConfig.from_dict(d).validate()
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from exc


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _write_run(out: Path, st: dict) -> None:
    _write(out / "run.json", json.dumps(st, indent=1, sort_keys=True) + "\n")


# train


def cmd_train(args) -> int:
    if args.resume:
        trainer = Trainer.resume(args.resume, args.out)
        if args.episodes is not None:
            trainer.cfg.episodes = args.episodes
        cfg = trainer.cfg
    else:
        cfg = resolve_train_config(args.profile, None, args.config, args.set, args.seed)
        if args.episodes is not None:
            cfg.episodes = args.episodes
        trainer = Trainer(cfg, args.out)
    out = Path(args.out)
    _write_run(out, stamp(cfg.to_dict(), cfg.seed, "train"))

    def progress(row):
        if not args.quiet:
            print(
                f"episode {row['episode']}: P_win={row['P_win']:.3f} P_shot={row['P_shot']:.3f} "
                f"C_ratio={row['C_ratio']:.3f}",
                file=sys.stderr,
            )

    res = trainer.run(progress=progress)
    print(f"trained {res.episodes_run} episodes ({res.total_steps} steps); log: {out / 'train_log.csv'}")
    return EXIT_OK


# eval and sweep share the policy set-up


def _policy_sides(args, cfg: TrainConfig):
    """Returns (game, agents or None)."""
    agents = None
    if args.checkpoint:
        agents, ck_cfg = load_agents(args.checkpoint)
        cfg = resolve_train_config(ck_cfg.profile if ck_cfg.profile in PROFILES else "desk", ck_cfg.to_dict(), args.config, args.set, args.seed)
    return cfg, agents


def _pursuer(agents, game: GameConfig, nav: str | None, query: str) -> SidePolicies:
    nav = nav or ("learned" if agents else "pure_pursuit")
    if (nav == "learned" or query == "shadow") and agents is None:
        raise UsageError("learned policies need --checkpoint")
    nav_pol = LearnedNav(agents.p_nav, game) if nav == "learned" else make_nav_policy(nav)
    q_pol = LearnedQuery(agents.p_query, game) if query == "shadow" else make_query_policy(query)
    return SidePolicies(nav_pol, q_pol, agents.p_opp if agents else None, f"{nav}/{query}")


def _evader(agents, game: GameConfig, nav: str | None) -> SidePolicies:
    nav = nav or ("learned" if agents else "evasive")
    if nav == "learned":
        if agents is None:
            raise UsageError("a learned evader needs --checkpoint")
        return SidePolicies(LearnedNav(agents.e_nav, game), None, agents.e_opp, "learned")
    return SidePolicies(make_nav_policy(nav), None, None, nav)


def _base_config(args) -> TrainConfig:
    return resolve_train_config(args.profile, None, args.config, args.set, args.seed)


def cmd_eval(args) -> int:
    cfg, agents = _policy_sides(args, _base_config(args))
    game = cfg.game
    queries = args.pursuer_query or (["shadow"] if agents else ["none"])
    seed_base = args.seed_base if args.seed_base is not None else EVAL_SEED_BASE
    out = Path(args.out)
    st = stamp(cfg.to_dict(), cfg.seed, "eval")
    st.update(checkpoint=str(args.checkpoint) if args.checkpoint else None, seed_base=seed_base, episodes=args.episodes)
    reports = {}
    for q in queries:
        pursuer = _pursuer(agents, game, args.pursuer_nav, q)
        evader = _evader(agents, game, args.evader_nav)
        traces = evaluate(pursuer, evader, game, args.episodes, seed_base, args.workers)
        reports[pursuer.name] = report_traces(traces)
        if not args.no_traces:
            write_traces(traces, out / "traces" / pursuer.name.replace("/", "_").replace(":", "-"))
    _write_run(out, st)
    _write(out / "report.csv", stamp_line(st) + report_csv(reports))
    table = report_table(reports)
    _write(out / "report.txt", table)
    print(table, end="")
    return EXIT_OK


SWEEP_METRICS = ("P_win", "P_shot", "P_timeout", "C_ratio", "T_len")


def _episode_values(traces) -> dict[str, list[float]]:
    vals = {k: [] for k in SWEEP_METRICS}
    for tr in traces:
        s = summarize(tr)
        vals["P_win"].append(float(s.outcome == "Caught"))
        vals["P_shot"].append(float(s.outcome == "Eliminated"))
        vals["P_timeout"].append(float(s.outcome == "Timeout"))
        vals["C_ratio"].append(s.query_count / s.length)
        vals["T_len"].append(float(s.length))
    return vals


def sweep_game(game: GameConfig, variable: str, value: float) -> GameConfig:
    d = game.to_dict()
    if variable == "r_e":
        d.update(randomize_shooting_radius=False, shooting_radius=value * CAPTURE_RADIUS)
    elif variable == "speed_ratio":
        d.update(randomize_speed_ratio=False, evader_speed=value * game.pursuer_speed)
    else:
        raise UsageError(f"sweep: unknown variable {variable!r} (r_e or speed_ratio)")
    return GameConfig.from_dict(d).validate()


def cmd_sweep(args) -> int:
    grid = [float(v) for v in args.grid.split(",") if v.strip()] if args.grid else []
    if not grid:
        raise UsageError("sweep: empty grid")
    cfg, agents = _policy_sides(args, _base_config(args))
    seed_base = args.seed_base if args.seed_base is not None else EVAL_SEED_BASE
    query = args.pursuer_query or ("shadow" if agents else "none")
    reports, xs, ys = {}, [], {k: [] for k in SWEEP_METRICS}
    for v in grid:
        game = sweep_game(cfg.game, args.variable, v)
        traces = evaluate(_pursuer(agents, game, args.pursuer_nav, query), _evader(agents, game, args.evader_nav), game, args.episodes, seed_base, args.workers)
        reports[f"{args.variable}={v:g}"] = report_traces(traces)
        per = _episode_values(traces)
        xs.extend([v] * len(traces))
        for k in SWEEP_METRICS:
            ys[k].extend(per[k])
    rows = []
    for k in SWEEP_METRICS:
        try:
            fit = ols_fit(xs, ys[k])
            rows.append([k, float(fit.slope), float(fit.intercept), float(fit.r2), float(fit.p_value), int(fit.n)])
        except RegressionError:
            rows.append([k, "", "", "", "", len(xs)])
    ps = [r[4] for r in rows if r[4] != ""]
    rejects = iter(benjamini_hochberg(ps, args.fdr))
    lines = ["metric,beta,intercept,r2,p_value,n,bh_reject"]
    for r in rows:
        rej = "" if r[4] == "" else str(next(rejects))
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in r) + f",{rej}")
    out = Path(args.out)
    st = stamp(cfg.to_dict(), cfg.seed, "sweep")
    st.update(variable=args.variable, grid=grid, query=query, seed_base=seed_base, episodes=args.episodes)
    _write_run(out, st)
    _write(out / "sweep.csv", stamp_line(st) + report_csv(reports))
    _write(out / "regression.csv", stamp_line(st) + "\n".join(lines) + "\n")
    print(report_table(reports), end="")
    print("\n".join(lines))
    return EXIT_OK


# oracle


def parse_alphas(text: str) -> list[float]:
    """``lo:hi:count`` for an even grid or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"--alphas: expected lo:hi:count, got {text!r}")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        return [float(a) for a in np.linspace(lo, hi, n)]
    return [float(a) for a in text.split(",") if a.strip()]


def _certificate_summary(c: orc.Certificate) -> dict:
    return {
        "ciac": c.ciac,
        "ciac_status": c.ciac_status,
        "biac": c.biac,
        "monotone": c.monotone,
        "ciac_nonnegative": c.ciac_nonnegative,
        "biac_le_ciac": c.biac_le_ciac,
        "max_bellman_residual": c.max_bellman_residual,
        "passed": c.passed,
    }


def _jsonable(obj):
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def cmd_oracle(args) -> int:
    alphas = parse_alphas(args.alphas)
    if not alphas:
        raise UsageError("oracle: empty alpha grid")
    out = Path(args.out)
    if args.random:
        seed = resolve_seed(0, args.seed)
        rng = np.random.default_rng(seed)
        games = [orc.random_game(rng, args.family) for _ in range(args.random)]
    else:
        d = orc.ToyGame().to_dict()
        if args.game:
            d = deep_merge(d, _load_json_arg(args.game))
        for item in args.set:
            key, sep, value = item.partition("=")
            if not sep:
                raise UsageError(f"--set expects key=value, got {item!r}")
            set_dotted(d, key.strip(), parse_value(value))
        try:
            games = [orc.ToyGame.from_dict(d).validate()]
        except TypeError as exc:
            raise ConfigError(f"game: {exc}") from exc
        seed = None
    certs = []
    lines = ["game,ciac,ciac_status,biac,monotone,ciac_nonnegative,biac_le_ciac,passed"]
    for i, g in enumerate(games):
        c = orc.certify(g, alphas, args.tol)
        certs.append({"game": g.to_dict(), **_certificate_summary(c), "checks": c.checks, "sweep": c.sweep})
        s = _certificate_summary(c)
        lines.append(",".join(str(x) for x in (i, s["ciac"], s["ciac_status"], s["biac"], s["monotone"], s["ciac_nonnegative"], s["biac_le_ciac"], s["passed"])))
        print(
            f"game {i}: CIAC={c.ciac:.4f} ({c.ciac_status}) BIAC={'N/A' if c.biac is None else f'{c.biac:.4f}'} "
            f"monotone={'pass' if c.monotone else 'FAIL'} "
            f"ciac>=0={'n/a' if c.ciac_nonnegative is None else ('pass' if c.ciac_nonnegative else 'FAIL')} "
            f"biac<=ciac={'pass' if c.biac_le_ciac else 'FAIL'}"
        )
    st = stamp({"games": [g.to_dict() for g in games], "alphas": alphas, "tol": args.tol}, seed, "oracle")
    _write_run(out, st)
    _write(out / "certificates.json", json.dumps(_jsonable(certs), indent=1, sort_keys=True) + "\n")
    _write(out / "summary.csv", stamp_line(st) + "\n".join(lines) + "\n")
    if len(games) == 1:
        _write(out / "sweep.csv", stamp_line(st) + orc.sweep_csv(certs[0]["sweep"]))
    return EXIT_OK


# plot


def cmd_plot(args) -> int:
    if not args.trace and not args.log:
        raise UsageError("plot: give --trace and/or --log")
    out = Path(args.out)
    for path in args.trace or []:
        try:
            tr = read_trace(path)
        except (ValueError, KeyError) as exc:
            raise RuntimeError(f"{path}: malformed trace: {exc}") from exc
        st = stamp(tr.header.get("config", {}), tr.header.get("seed"), "plot")
        stem = Path(path).stem
        _write(out / f"{stem}.svg", trajectory_svg(tr, st))
        _write(out / f"{stem}_distance.csv", stamp_line(st) + distance_csv(tr))
        print(out / f"{stem}.svg")
    if args.log:
        import csv

        with open(args.log, newline="") as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        st = stamp({}, None, "plot")
        st["source"] = str(args.log)
        _write(out / "dynamics.csv", stamp_line(st) + dynamics_csv(rows))
        _write(out / "dynamics.svg", dynamics_svg(rows, st))
        print(out / "dynamics.svg")
    return EXIT_OK


# parser


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", default="desk", help="desk (default) or paper")
    p.add_argument("--config", help="JSON file or inline JSON merged over the profile")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted override, e.g. game.horizon=200")
    p.add_argument("--seed", type=int, help="overrides PEEC_SEED and the config seed")
    p.add_argument("--out", default="peec_out", help="output directory")


def _add_policy_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--checkpoint", help="ckpt_* written by train")
    p.add_argument("--pursuer-nav", help="learned, pure_pursuit[:gain]")
    p.add_argument("--evader-nav", help="learned, evasive[:gain], straight")
    p.add_argument("--episodes", type=int, default=500)
    p.add_argument("--seed-base", type=int, help=f"episode i uses seed base+i (default {EVAL_SEED_BASE})")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="peec", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="self-play training")
    _add_config_args(p)
    p.add_argument("--episodes", type=int, help="override the number of training episodes")
    p.add_argument("--resume", help="continue from the latest ckpt_* of a run")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="held-out evaluation and report")
    _add_config_args(p)
    _add_policy_args(p)
    p.add_argument("--pursuer-query", action="append", help="shadow, none, random, periodic:K (repeatable)")
    p.add_argument("--no-traces", action="store_true", help="skip writing per-episode traces")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="evaluate across r_e or speed-ratio values")
    _add_config_args(p)
    _add_policy_args(p)
    p.add_argument("--variable", required=True, choices=["r_e", "speed_ratio"])
    p.add_argument("--grid", required=True, help="comma list; r_e in units of the capture radius")
    p.add_argument("--pursuer-query", help="shadow, none, random, periodic:K")
    p.add_argument("--fdr", type=float, default=0.05, help="Benjamini-Hochberg level")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="solve small grid games and certify the cost ordering")
    p.add_argument("--game", help="JSON file or inline JSON with game fields")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--alphas", default="-10:30:9", help="lo:hi:count or a comma list")
    p.add_argument("--random", type=int, default=0, help="certify this many random games instead")
    p.add_argument("--family", default="general", choices=["general", "no_elimination"])
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--out", default="peec_out")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("plot", help="trajectory SVG and training-dynamics series")
    p.add_argument("--trace", action="append", help="episode trace (.jsonl); repeatable")
    p.add_argument("--log", help="train_log.csv")
    p.add_argument("--out", default="peec_out")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"peec {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"peec {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointError, OSError, RuntimeError, ValueError) as exc:
        print(f"peec {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
