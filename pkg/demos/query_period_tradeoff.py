"""How often should a pursuer look?

A pure-pursuit pursuer chases an evasive evader on the desk game and queries
every k steps. Frequent queries keep its picture of the evader fresh but each
one is a chance to be shot, so the elimination rate falls as k grows while
captures stay rare. Run: python demos/query_period_tradeoff.py [episodes]
"""

from __future__ import annotations

import sys

from peec.learn.evaluate import SidePolicies, evaluate
from peec.learn.train import desk_profile
from peec.metrics import report_table, report_traces
from peec.policy import make_nav_policy, make_query_policy


def main(episodes: int = 200) -> None:
    game = desk_profile().game
    evader = SidePolicies(make_nav_policy("evasive"), None, None, "evasive")
    rows = {}
    for spec in ("none", "periodic:5", "periodic:10", "periodic:20", "periodic:40", "random"):
        pursuer = SidePolicies(make_nav_policy("pure_pursuit"), make_query_policy(spec), None, spec)
        rows[spec] = report_traces(evaluate(pursuer, evader, game, episodes))
    print(report_table(rows), end="")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 200)
