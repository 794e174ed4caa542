"""Exact minimax solver for a small grid analogue of the pursuit game.

Both players live on an ``n x n`` grid and play ``T`` simultaneous-move
stages. Each stage the pursuer first decides whether to query. A query costs
``alpha`` and triggers an elimination lottery with probability
``2 ** (-d / d_e)`` where ``d`` is the Chebyshev distance (``d_e = 0``
disables it). If the pursuer survives, it sees the evader's move before
choosing its own for that stage. Without a query the stage is a matrix game
solved in mixed strategies by linear programming. Capture happens when the
evader ends on any cell of the pursuer's path or the two swap cells.

The game is zero-sum, so the root value ``V(alpha)`` is the same for every
equilibrium. From it we get the critical cost (largest ``alpha`` with
``V >= 0``) and the base cost (payoff over expected query count at
``alpha = 0``) and check the ordering between them.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .engine import ConfigError

MOVES = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))
LP_TOL = 1e-9


class UnsupportedGameError(ValueError):
    pass


@dataclass(frozen=True)
class ToyGame:
    n: int = 3
    horizon: int = 4
    pursuer_start: tuple[int, int] = (0, 0)
    evader_start: tuple[int, int] = (2, 2)
    pursuer_speed: int = 1  # single-cell moves per stage
    evader_speed: int = 1
    d_e: int = 1  # 0 disables elimination
    catch_bonus: float = 10.0
    shot_penalty: float = 5.0
    time_cost: float = 0.0  # paid by the pursuer every stage
    zero_sum: bool = True

    def validate(self) -> "ToyGame":
        if self.n < 1 or not 0 <= self.horizon <= 8:
            raise ConfigError("toy: need n >= 1 and 0 <= horizon <= 8")
        if self.n**4 * (self.horizon + 1) > 1_000_000:
            raise ConfigError("toy: joint state count exceeds 10^6")
        if self.pursuer_speed < 1 or self.evader_speed < 1:
            raise ConfigError("toy: speeds must be >= 1")
        if self.d_e not in (0, 1, 2, 3):
            raise ConfigError("toy: d_e must be 0 (disabled), 1, 2 or 3")
        for cell in (self.pursuer_start, self.evader_start):
            if not all(0 <= c < self.n for c in cell):
                raise ConfigError(f"toy: start cell {cell} outside the grid")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ToyGame":
        d = dict(d)
        for key in ("pursuer_start", "evader_start"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def elimination(self, p: tuple[int, int], e: tuple[int, int]) -> float:
        if self.d_e == 0:
            return 0.0
        d = max(abs(p[0] - e[0]), abs(p[1] - e[1]))
        return 2.0 ** (-d / self.d_e)


def _paths(n: int, start: tuple[int, int], speed: int) -> list[tuple[tuple[int, int], ...]]:
    """Distinct cell sequences reachable with ``speed`` single moves (walls block)."""
    out = set()
    for seq in itertools.product(MOVES, repeat=speed):
        cells, (x, y) = [], start
        for dx, dy in seq:
            x, y = min(n - 1, max(0, x + dx)), min(n - 1, max(0, y + dy))
            cells.append((x, y))
        out.add(tuple(cells))
    return sorted(out)


@dataclass
class _Stage:
    """Precomputed transitions for one joint position."""

    nxt: np.ndarray  # (Np, Ne) index of the next joint position
    caught: np.ndarray  # (Np, Ne) bool


class _Structure:
    def __init__(self, g: ToyGame):
        self.g = g
        n = g.n
        self.cells = [(x, y) for x in range(n) for y in range(n)]
        idx = {c: i for i, c in enumerate(self.cells)}
        C = len(self.cells)
        self.n_joint = C * C
        self.stages: list[_Stage | None] = []
        self.p_elim = np.zeros(self.n_joint)
        for p, e in itertools.product(self.cells, self.cells):
            if p == e:
                self.stages.append(None)
                continue
            self.p_elim[idx[p] * C + idx[e]] = g.elimination(p, e)
            pp = _paths(n, p, g.pursuer_speed)
            ep = _paths(n, e, g.evader_speed)
            nxt = np.zeros((len(pp), len(ep)), np.int64)
            caught = np.zeros((len(pp), len(ep)), bool)
            for i, a in enumerate(pp):
                for j, b in enumerate(ep):
                    ee = b[-1]
                    nxt[i, j] = idx[a[-1]] * C + idx[ee]
                    caught[i, j] = ee in a or (e in a and ee == p)  # landing on the path, or crossing
            self.stages.append(_Stage(nxt, caught))
        self.root = idx[g.pursuer_start] * C + idx[g.evader_start]


_STRUCT_CACHE: dict[ToyGame, _Structure] = {}


def _structure(g: ToyGame) -> _Structure:
    if g not in _STRUCT_CACHE:
        if len(_STRUCT_CACHE) > 64:
            _STRUCT_CACHE.clear()
        _STRUCT_CACHE[g] = _Structure(g)
    return _STRUCT_CACHE[g]


def solve_matrix_game(A: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Value and optimal mixed strategies of the zero-sum game where the row
    player receives ``A[i, j]`` and maximizes. Pure saddle points skip the LP."""
    A = np.asarray(A, dtype=np.float64)
    m, k = A.shape
    row_min = A.min(axis=1)
    col_max = A.max(axis=0)
    i, j = int(np.argmax(row_min)), int(np.argmin(col_max))
    if row_min[i] >= col_max[j] - LP_TOL:
        x, y = np.zeros(m), np.zeros(k)
        x[i] = y[j] = 1.0
        return float(A[i, j]), x, y
    # variables (x_1..x_m, v): maximize v s.t. A^T x >= v, sum x = 1
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A.T, np.ones((k, 1))])
    A_eq = np.zeros((1, m + 1))
    A_eq[0, :m] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=[1.0], bounds=[(0, None)] * m + [(None, None)], method="highs")
    if res.status != 0:
        raise RuntimeError(f"matrix game LP failed: {res.message}")
    x = np.clip(res.x[:m], 0.0, None)
    x /= x.sum()
    y = np.clip(-res.ineqlin.marginals, 0.0, None)
    y = y / y.sum() if y.sum() > 0 else np.full(k, 1.0 / k)
    return float(res.x[-1]), x, y


@dataclass
class StagePolicy:
    query: int
    pursuer: np.ndarray  # mixed strategy over pursuer paths (no-query stage)
    evader: np.ndarray  # mixed strategy over evader paths
    informed_reply: np.ndarray | None = None  # pursuer path per evader path after a query


@dataclass
class SolveResult:
    alpha: float
    values: np.ndarray  # (T+1, n_joint)
    policy: list[dict[int, StagePolicy]]  # per stage t < T
    root_value: float
    game: ToyGame

    @property
    def value(self) -> float:
        return self.root_value


def _payoff_matrix(g: ToyGame, st: _Stage, v_next: np.ndarray) -> np.ndarray:
    return np.where(st.caught, g.catch_bonus, v_next[st.nxt]) - g.time_cost


def solve_minimax(game: ToyGame, alpha: float, allow_query: bool = True) -> SolveResult:
    """Backward induction over stages. ``allow_query=False`` solves the game
    in which querying is unavailable (the ``alpha -> inf`` limit)."""
    g = game.validate()
    if not g.zero_sum:
        raise UnsupportedGameError("solve_minimax: only zero-sum games are supported")
    S = _structure(g)
    T = g.horizon
    V = np.zeros((T + 1, S.n_joint))
    for s, st in enumerate(S.stages):
        if st is None:
            V[T, s] = g.catch_bonus
    policy: list[dict[int, StagePolicy]] = [dict() for _ in range(T)]
    for t in range(T - 1, -1, -1):
        for s, st in enumerate(S.stages):
            if st is None:
                V[t, s] = g.catch_bonus
                continue
            A = _payoff_matrix(g, st, V[t + 1])
            v0, x, y = solve_matrix_game(A)
            best, pol = v0, StagePolicy(0, x, y)
            if allow_query:
                reply = A.argmax(axis=0)
                col = A[reply, np.arange(A.shape[1])]
                j = int(np.argmin(col))
                pe = S.p_elim[s]
                v1 = -alpha + pe * (-g.shot_penalty - g.time_cost) + (1.0 - pe) * float(col[j])
                if v1 > v0 + LP_TOL:
                    ye = np.zeros(A.shape[1])
                    ye[j] = 1.0
                    best, pol = v1, StagePolicy(1, np.zeros(A.shape[0]), ye, reply)
            V[t, s] = best
            policy[t][s] = pol
    return SolveResult(float(alpha), V, policy, float(V[0, S.root]), g)


def bellman_residual(result: SolveResult) -> float:
    """Largest violation of the one-step minimax conditions by the stored
    values and strategies (0 up to LP tolerance for an exact solve)."""
    g = result.game
    S = _structure(g)
    worst = 0.0
    for t, stage in enumerate(result.policy):
        for s, pol in stage.items():
            A = _payoff_matrix(g, S.stages[s], result.values[t + 1])
            v = result.values[t, s]
            if pol.query == 0:
                worst = max(worst, v - float((pol.pursuer @ A).min()), float((A @ pol.evader).max()) - v)
            else:
                pe = S.p_elim[s]
                col = A.max(axis=0).min()
                v1 = -result.alpha + pe * (-g.shot_penalty - g.time_cost) + (1.0 - pe) * col
                worst = max(worst, abs(v - v1))
    return worst


def guaranteed_value(result: SolveResult, alpha: float) -> float:
    """Payoff the pursuer secures at query cost ``alpha`` by replaying the
    strategy stored in ``result`` while the evader best-responds in pure moves.

    At the solved ``alpha`` this equals the root value. Elsewhere it can fall
    below ``V(alpha)`` and, when the evader can steer the pursuer's query
    count, below the naive ``V(0) - alpha * E[N_Q]`` line as well.
    """
    g = result.game
    S = _structure(g)
    W = np.zeros_like(result.values)
    for s, st in enumerate(S.stages):
        if st is None:
            W[:, s] = g.catch_bonus
    for t in range(g.horizon - 1, -1, -1):
        for s, pol in result.policy[t].items():
            A = _payoff_matrix(g, S.stages[s], W[t + 1])
            if pol.query == 0:
                W[t, s] = float((pol.pursuer @ A).min())
            else:
                pe = S.p_elim[s]
                col = A[pol.informed_reply, np.arange(A.shape[1])]
                W[t, s] = -alpha + pe * (-g.shot_penalty - g.time_cost) + (1.0 - pe) * float(col.min())
    return float(W[0, S.root])


def value_sweep(game: ToyGame, alphas) -> list[tuple[float, float]]:
    alphas = [float(a) for a in alphas]
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("value_sweep: alpha grid must be sorted")
    return [(a, solve_minimax(game, a).root_value) for a in alphas]


@dataclass
class CiacResult:
    value: float  # +inf when V stays non-negative for every alpha
    status: str  # "bracketed" | "above_range" | "unbounded" | "below_range"
    bracket: tuple[float, float] | None = None


def ciac_from_sweep(
    sweep: list[tuple[float, float]],
    value_fn: Callable[[float], float] | None = None,
    tol: float = 1e-3,
) -> CiacResult:
    """Largest alpha with ``V(alpha) >= 0``: the last non-negative grid point,
    refined by bisection against ``value_fn`` up to ``tol``."""
    if not sweep:
        raise ValueError("ciac_from_sweep: empty sweep")
    alphas = [a for a, _ in sweep]
    vals = [v for _, v in sweep]
    if vals[0] < 0:
        return CiacResult(-math.inf, "below_range")
    k = max(i for i, v in enumerate(vals) if v >= 0)
    if k == len(vals) - 1:
        return CiacResult(alphas[-1], "above_range")
    lo, hi = alphas[k], alphas[k + 1]
    if value_fn is None:
        # linear interpolation on the grid segment
        v0, v1 = vals[k], vals[k + 1]
        return CiacResult(lo + (hi - lo) * v0 / (v0 - v1), "bracketed", (lo, hi))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if value_fn(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return CiacResult(lo, "bracketed", (lo, hi))


def critical_cost(game: ToyGame, alphas, tol: float = 1e-3) -> tuple[CiacResult, list[tuple[float, float]]]:
    """CIAC of ``game``; widens the grid upward until ``V`` changes sign and
    reports ``unbounded`` when even a query-free pursuer keeps ``V >= 0``."""
    sweep = value_sweep(game, alphas)
    fn = lambda a: solve_minimax(game, a).root_value  # noqa: E731
    res = ciac_from_sweep(sweep, fn, tol)
    if res.status != "above_range":
        return res, sweep
    if solve_minimax(game, 0.0, allow_query=False).root_value >= 0:
        return CiacResult(math.inf, "unbounded"), sweep
    hi = max(1.0, abs(sweep[-1][0]))
    while True:
        hi *= 2.0
        v = fn(hi)
        sweep.append((hi, v))
        if v < 0:
            return ciac_from_sweep(sweep, fn, tol), sweep


@dataclass
class BiacResult:
    value: float | None  # None when the equilibrium never queries
    expected_payoff: float
    expected_queries: float


def biac_from_equilibrium(game: ToyGame, result: SolveResult | None = None) -> BiacResult:
    """Exact expected payoff and query count of the ``alpha = 0`` equilibrium,
    by pushing the joint-state distribution forward through both players'
    strategies and the elimination lotteries."""
    res = result if result is not None else solve_minimax(game, 0.0)
    if res.alpha != 0.0:
        raise ValueError("biac_from_equilibrium: needs the alpha = 0 solution")
    g = res.game
    S = _structure(g)
    dist = np.zeros(S.n_joint)
    dist[S.root] = 1.0
    payoff = queries = 0.0
    if S.stages[S.root] is None:
        return BiacResult(None, g.catch_bonus, 0.0)
    for t in range(g.horizon):
        new = np.zeros(S.n_joint)
        for s in np.nonzero(dist)[0]:
            w = dist[s]
            st, pol = S.stages[s], res.policy[t][s]
            if pol.query:
                queries += w
                pe = S.p_elim[s]
                payoff += w * pe * (-g.shot_penalty - g.time_cost)
                w = w * (1.0 - pe)
                j = int(np.argmax(pol.evader))
                joint = np.zeros_like(st.caught, dtype=np.float64)
                joint[pol.informed_reply[j], j] = 1.0
            else:
                joint = np.outer(pol.pursuer, pol.evader)
            payoff -= w * g.time_cost
            payoff += w * g.catch_bonus * float(joint[st.caught].sum())
            live = joint * ~st.caught
            np.add.at(new, st.nxt[live > 0], w * live[live > 0])
        dist = new
    value = payoff / queries if queries > 1e-12 else None
    return BiacResult(value, payoff, queries)


def random_game(rng: np.random.Generator, family: str = "general") -> ToyGame:
    """A random tractable game with nearby starts, where information matters.

    ``family="no_elimination"`` disables the elimination lottery and the time
    cost, so the pursuer's payoff is never negative at ``alpha = 0``.
    """
    if family not in ("general", "no_elimination"):
        raise ValueError(f"random_game: unknown family {family!r}")
    fast = rng.random() < 0.3  # both players take two cells per stage
    n = 3 if fast else int(rng.integers(3, 5))
    horizon = int(rng.integers(3, 5)) if fast else int(rng.integers(3, 7))
    speed = 2 if fast else 1
    cells = [(x, y) for x in range(n) for y in range(n)]
    p = cells[int(rng.integers(len(cells)))]
    near = [c for c in cells if c != p and max(abs(c[0] - p[0]), abs(c[1] - p[1])) <= 2]
    e = near[int(rng.integers(len(near)))]
    plain = family == "no_elimination"
    return ToyGame(
        n=n,
        horizon=horizon,
        pursuer_start=p,
        evader_start=e,
        pursuer_speed=speed,
        evader_speed=speed,
        d_e=0 if plain else int(rng.integers(0, 4)),
        catch_bonus=float(np.round(rng.uniform(5.0, 20.0), 2)),
        shot_penalty=float(np.round(rng.uniform(1.0, 10.0), 2)),
        time_cost=0.0 if plain else float(np.round(rng.uniform(0.0, 2.0), 2)),
    )


@dataclass
class Certificate:
    game: dict
    sweep: list[tuple[float, float]]
    ciac: float
    ciac_status: str
    biac: float | None
    expected_payoff: float
    expected_queries: float
    max_bellman_residual: float
    monotone: bool
    ciac_nonnegative: bool | None  # only asserted without elimination and time cost
    biac_le_ciac: bool
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        ok = self.monotone and self.biac_le_ciac and self.max_bellman_residual <= 1e-6
        return ok and self.ciac_nonnegative is not False


def certify(game: ToyGame, alphas, tol: float = 1e-3) -> Certificate:
    """Solve a game across ``alphas`` and check monotonicity of ``V``, the sign
    of the critical cost (when the game qualifies) and ``BIAC <= CIAC + tol``."""
    ciac, sweep = critical_cost(game, alphas, tol)
    grid = [(a, v) for a, v in sweep if a <= float(alphas[-1])]
    monotone = all(v1 <= v0 + 1e-9 for (_, v0), (_, v1) in zip(grid, grid[1:]))
    res0 = solve_minimax(game, 0.0)
    biac = biac_from_equilibrium(game, res0)
    residual = max(bellman_residual(res0), bellman_residual(solve_minimax(game, float(alphas[-1]))))
    qualifies = game.d_e == 0 and game.time_cost == 0.0
    nonneg = (ciac.value >= 0) if qualifies else None
    le = biac.value is None or biac.value <= ciac.value + tol
    return Certificate(
        game=game.to_dict(),
        sweep=sweep,
        ciac=ciac.value,
        ciac_status=ciac.status,
        biac=biac.value,
        expected_payoff=biac.expected_payoff,
        expected_queries=biac.expected_queries,
        max_bellman_residual=residual,
        monotone=monotone,
        ciac_nonnegative=nonneg,
        biac_le_ciac=le,
        checks={
            "root_value_alpha0": res0.root_value,
            "forward_payoff_gap": abs(biac.expected_payoff - res0.root_value),
            # below zero means the evader can dodge the queries priced at BIAC
            "guarantee_at_biac": None if biac.value is None else guaranteed_value(res0, biac.value),
        },
    )


def sweep_csv(sweep: list[tuple[float, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "value"])
    for a, v in sweep:
        w.writerow([repr(float(a)), repr(float(v))])
    return buf.getvalue()
