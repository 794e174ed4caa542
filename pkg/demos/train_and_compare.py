"""Train both sides briefly, then ask whether the learned query head helps.

Trains the desk profile for a few hundred episodes, evaluates the learned
pursuer against the co-trained evader with its own query head and with
queries switched off, and writes a trajectory SVG for the first episode.
Run: python demos/train_and_compare.py OUT_DIR [episodes]
"""

from __future__ import annotations

import sys
from pathlib import Path

from peec.learn.evaluate import SidePolicies, evaluate
from peec.learn.train import Trainer, desk_profile
from peec.metrics import mann_whitney_u, report_table, report_traces
from peec.plot import trajectory_svg
from peec.policy import make_query_policy


def main(out: Path, episodes: int = 300) -> None:
    cfg = desk_profile()
    cfg.episodes, cfg.eval_freq = episodes, max(1, episodes // 4)
    trainer = Trainer(cfg, out)
    trainer.run(progress=lambda r: print(f"episode {r['episode']}: P_win {r['P_win']:.2f} C_ratio {r['C_ratio']:.3f}"))
    ag, game = trainer.agents, cfg.game
    evader = ag.evader(game)
    learned = evaluate(ag.pursuer(game), evader, game, 200)
    silent = SidePolicies(ag.pursuer(game).nav, make_query_policy("no_comm"), ag.p_opp, "no_comm")
    base = evaluate(silent, evader, game, 200)
    print(report_table({"learned queries": report_traces(learned), "no queries": report_traces(base)}), end="")
    _, p = mann_whitney_u([t.outcome == "Caught" for t in learned], [t.outcome == "Caught" for t in base])
    print(f"Mann-Whitney p on captures: {p:.3g}")
    (out / "episode_0.svg").write_text(trajectory_svg(learned[0]))


if __name__ == "__main__":
    main(Path(sys.argv[1]), int(sys.argv[2]) if len(sys.argv) > 2 else 300)
