"""Pricing information in a small grid game.

We solve a 3x3 pursuit game exactly for a range of query prices and read off
two numbers: the critical cost (largest price at which the pursuer still
breaks even) and the base cost (its zero-price payoff divided by how often
it queries). In the second game the evader can steer away from the states
where the pursuer likes to query, and the base cost ends up above the
critical one.
"""

from __future__ import annotations

import numpy as np

from peec.oracle import ToyGame, certify, guaranteed_value, solve_minimax

ALPHAS = np.linspace(-10.0, 30.0, 9)

GAMES = {
    "open board": ToyGame(n=3, horizon=6, pursuer_start=(0, 0), evader_start=(2, 2), d_e=2, catch_bonus=12.0),
    "dodging evader": ToyGame(
        n=3, horizon=6, pursuer_start=(2, 2), evader_start=(0, 1), d_e=2,
        catch_bonus=8.88, shot_penalty=3.18, time_cost=1.78,
    ),
}


def main() -> None:
    for name, game in GAMES.items():
        cert = certify(game, ALPHAS)
        print(f"== {name}")
        for a, v in cert.sweep:
            print(f"  alpha {a:7.3f}  V {v:9.4f}")
        biac = "n/a" if cert.biac is None else f"{cert.biac:.4f}"
        print(f"  critical cost {cert.ciac:.4f} ({cert.ciac_status}), base cost {biac}")
        if cert.biac is not None:
            keep = guaranteed_value(solve_minimax(game, 0.0), cert.biac)
            print(f"  zero-price strategy replayed at the base cost guarantees {keep:.4f}")
        print(f"  ordering holds: {cert.biac_le_ciac}")


if __name__ == "__main__":
    main()
