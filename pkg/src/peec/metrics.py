"""Per-episode summaries, aggregate outcome/communication metrics, and the
statistics used to compare policies (Mann-Whitney U, OLS, Benjamini-Hochberg).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .engine import Status, UsageError
from .trace import EpisodeTrace

COLUMNS = ("P_win", "P_shot", "P_timeout", "C_ratio", "C_gap", "C_comm", "T_len", "S_P", "S_E", "BIAC", "N")


@dataclass
class EpisodeSummary:
    outcome: str
    length: int
    query_steps: list[int]
    dist_at_queries: list[float]
    sum_abs_control_p: float
    sum_abs_control_e: float
    payoff_p: float
    payoff_e: float

    @property
    def query_count(self) -> int:
        return len(self.query_steps)

    @property
    def gaps(self) -> list[int]:
        return [b - a for a, b in zip(self.query_steps, self.query_steps[1:])]


def summarize(trace: EpisodeTrace) -> EpisodeSummary:
    """Extract the per-episode quantities from a finished trace."""
    if not trace.terminal:
        raise UsageError("summarize: trace has not reached a terminal outcome")
    q_steps, q_dist = [], []
    sp = se = pay_p = pay_e = 0.0
    for r in trace.records:
        if r["q"]:
            q_steps.append(int(r["t"]))
            q_dist.append(math.hypot(r["px"] - r["ex"], r["py"] - r["ey"]))
        sp += abs(r["a_p"])
        se += abs(r["a_e"])
        pay_p += r["reward_p"]
        pay_e += r["reward_e"]
    return EpisodeSummary(trace.outcome, len(trace.records), q_steps, q_dist, sp, se, pay_p, pay_e)


@dataclass
class Stat:
    """A point estimate with its uncertainty; ``value`` is None when undefined."""

    value: float | None
    se: float | None = None
    n: int = 0

    def fmt(self, digits: int = 3) -> str:
        if self.value is None:
            return "N/A"
        if self.se is None:
            return f"{self.value:.{digits}f}"
        return f"{self.value:.{digits}f}±{self.se:.{digits}f}"


def _proportion(flags: list[bool]) -> Stat:
    n = len(flags)
    p = sum(flags) / n
    return Stat(p, math.sqrt(p * (1.0 - p) / n), n)


def _mean(xs: list[float]) -> Stat:
    n = len(xs)
    if n == 0:
        return Stat(None)
    m = float(np.mean(xs))
    se = float(np.std(xs, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Stat(m, se, n)


@dataclass
class AggregateReport:
    P_win: Stat
    P_shot: Stat
    P_timeout: Stat
    C_ratio: Stat
    C_gap: Stat
    D_comm: Stat
    T_len: Stat
    S_P: Stat
    S_E: Stat
    BIAC: Stat
    N: int
    mean_payoff_p: float = 0.0
    mean_queries: float = 0.0
    extras: dict = field(default_factory=dict)

    def row(self) -> dict[str, Stat | int]:
        """Report columns. P_shot shows as not-applicable when no episode
        queried, since elimination can only follow a query."""
        return {
            "P_win": self.P_win,
            "P_shot": self.P_shot if self.mean_queries > 0 else Stat(None, None, self.N),
            "P_timeout": self.P_timeout,
            "C_ratio": self.C_ratio,
            "C_gap": self.C_gap,
            "C_comm": self.D_comm,
            "T_len": self.T_len,
            "S_P": self.S_P,
            "S_E": self.S_E,
            "BIAC": self.BIAC,
            "N": self.N,
        }

    def flat(self) -> dict[str, float | int | str]:
        """Plain values plus ``*_se`` columns; undefined entries become ``""``."""
        out: dict[str, float | int | str] = {}
        for key, s in self.row().items():
            if isinstance(s, Stat):
                out[key] = "" if s.value is None else s.value
                out[key + "_se"] = "" if s.se is None else s.se
            else:
                out[key] = s
        return out


def aggregate(summaries: list[EpisodeSummary]) -> AggregateReport:
    """Table-style metrics over a set of episodes (order does not matter)."""
    n = len(summaries)
    if n == 0:
        raise ValueError("aggregate: need at least one episode")
    outcomes = [s.outcome for s in summaries]
    ratio = [s.query_count / s.length for s in summaries]
    gaps = [float(np.mean(s.gaps)) for s in summaries if s.query_count >= 2]
    dcomm = [s.dist_at_queries[-1] for s in summaries if s.query_count >= 1]
    mean_q = float(np.mean([s.query_count for s in summaries]))
    mean_pay = float(np.mean([s.payoff_p for s in summaries]))
    biac = Stat(mean_pay / mean_q, None, n) if mean_q > 0 else Stat(None)
    return AggregateReport(
        P_win=_proportion([o == Status.CAUGHT.value for o in outcomes]),
        P_shot=_proportion([o == Status.ELIMINATED.value for o in outcomes]),
        P_timeout=_proportion([o == Status.TIMEOUT.value for o in outcomes]),
        C_ratio=_mean(ratio),
        C_gap=_mean(gaps),
        D_comm=_mean(dcomm),
        T_len=_mean([float(s.length) for s in summaries]),
        S_P=_mean([s.sum_abs_control_p / s.length for s in summaries]),
        S_E=_mean([s.sum_abs_control_e / s.length for s in summaries]),
        BIAC=biac,
        N=n,
        mean_payoff_p=mean_pay,
        mean_queries=mean_q,
    )


def report_traces(traces: list[EpisodeTrace]) -> AggregateReport:
    return aggregate([summarize(t) for t in traces])


def report_csv(rows: dict[str, AggregateReport]) -> str:
    """CSV with one line per labelled report (value and ``_se`` columns)."""
    buf = io.StringIO()
    header = ["policy"]
    for c in COLUMNS:
        header.extend([c] if c == "N" else [c, c + "_se"])
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for label, rep in rows.items():
        w.writerow({"policy": label, **rep.flat()})
    return buf.getvalue()


def report_table(rows: dict[str, AggregateReport]) -> str:
    """Fixed-width text table with the same columns as :func:`report_csv`."""
    cells = [["policy", *COLUMNS]]
    for label, rep in rows.items():
        cells.append([label] + [v.fmt() if isinstance(v, Stat) else str(v) for v in rep.row().values()])
    widths = [max(len(r[i]) for r in cells) for i in range(len(cells[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


# statistics


def mann_whitney_u(a, b) -> tuple[float, float]:
    """U for sample ``a`` (mid-ranks for ties) and a two-sided normal-approximation
    p-value with tie correction (no continuity correction)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise ValueError("mann_whitney_u: both samples must be nonempty")
    ranks = stats.rankdata(np.concatenate([a, b]))
    u = float(ranks[:n].sum() - n * (n + 1) / 2.0)
    N = n + m
    _, counts = np.unique(ranks, return_counts=True)
    tie = float(np.sum(counts**3 - counts))
    var = n * m / 12.0 * ((N + 1) - tie / (N * (N - 1))) if N > 1 else 0.0
    if var <= 0:
        return u, 1.0
    z = (u - n * m / 2.0) / math.sqrt(var)
    return u, float(min(1.0, 2.0 * stats.norm.sf(abs(z))))


class RegressionError(ValueError):
    pass


@dataclass(frozen=True)
class OLSResult:
    slope: float
    intercept: float
    r2: float
    p_value: float
    n: int


def ols_fit(x, y) -> OLSResult:
    """Simple linear regression of ``y`` on ``x`` with a t-test on the slope."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n != len(y):
        raise RegressionError(f"ols_fit: x has {n} points, y has {len(y)}")
    if n < 3:
        raise RegressionError(f"ols_fit: need at least 3 points, got {n}")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx <= 0.0:
        raise RegressionError("ols_fit: x has zero variance")
    sxy = float(np.sum((x - xm) * (y - ym)))
    syy = float(np.sum((y - ym) ** 2))
    beta = sxy / sxx
    alpha = float(ym - beta * xm)
    sse = max(0.0, syy - beta * sxy)
    r2 = 1.0 - sse / syy if syy > 0 else 0.0
    if sse == 0.0:
        p = 0.0 if beta != 0.0 else 1.0
    else:
        se = math.sqrt(sse / (n - 2) / sxx)
        p = float(2.0 * stats.t.sf(abs(beta / se), n - 2))
    return OLSResult(beta, alpha, r2, p, n)


def benjamini_hochberg(p_values, q: float = 0.05) -> list[bool]:
    """Step-up FDR control: reject the ``k`` smallest p with ``p_(k) <= k q / m``."""
    p = np.asarray(p_values, dtype=np.float64)
    m = len(p)
    if m == 0:
        return []
    if np.any((p < 0) | (p > 1)):
        raise ValueError("benjamini_hochberg: p-values must lie in [0, 1]")
    order = np.argsort(p, kind="stable")
    passed = p[order] <= q * np.arange(1, m + 1) / m
    k = int(np.nonzero(passed)[0].max()) + 1 if passed.any() else 0
    reject = np.zeros(m, dtype=bool)
    reject[order[:k]] = True
    return reject.tolist()


@dataclass(frozen=True)
class OpponentTrend:
    sigma_on_elapsed: OLSResult
    error_on_sigma: OLSResult


def opponent_steps(traces: list[EpisodeTrace]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(elapsed, sigma, error)`` for every pursuer step that used an estimate.

    The estimate in a record was formed before the step, so its error is
    measured against the evader position held before that step.
    """
    el, sg, err = [], [], []
    for tr in traces:
        h = tr.header["initial"]
        ex, ey = h["ex"], h["ey"]
        for r in tr.records:
            if r["elapsed"] > 0:
                el.append(r["elapsed"])
                sg.append(r["sigma"])
                err.append(math.hypot(r["est_x"] - ex, r["est_y"] - ey))
            ex, ey = r["ex"], r["ey"]
    return np.asarray(el, dtype=np.float64), np.asarray(sg, dtype=np.float64), np.asarray(err, dtype=np.float64)


def opponent_trend(traces: list[EpisodeTrace]) -> OpponentTrend:
    """OLS of the reported uncertainty on staleness, and of the realised
    prediction error on the reported uncertainty."""
    el, sg, err = opponent_steps(traces)
    return OpponentTrend(ols_fit(el, sg), ols_fit(sg, err))
