"""Static figures as SVG text plus the CSV series behind them.

Trajectory plots draw both paths over the map with a marker at the
pursuer's position wherever it queried; the position is the one it held
when it decided, i.e. before the step the record describes. The
pursuer-evader distance series and the training-dynamics series are
written as CSV so the figures can be rebuilt elsewhere.
"""

from __future__ import annotations

import csv
import io
import json
import math
from xml.sax.saxutils import escape

from .trace import EpisodeTrace

SIZE = 400.0
PAD = 20.0
COLORS = {"pursuer": "#c0392b", "evader": "#2471a3", "query": "#f39c12"}


def positions(trace: EpisodeTrace) -> tuple[list[tuple[float, float]], list[tuple[float, float]]]:
    """Pursuer and evader paths, starting with the initial poses."""
    h = trace.header["initial"]
    p = [(h["px"], h["py"])] + [(r["px"], r["py"]) for r in trace.records]
    e = [(h["ex"], h["ey"])] + [(r["ex"], r["ey"]) for r in trace.records]
    return p, e


def query_points(trace: EpisodeTrace) -> list[tuple[int, float, float]]:
    """``(t, x, y)`` for every query, at the pursuer's pre-step position."""
    p, _ = positions(trace)
    return [(r["t"], *p[k]) for k, r in enumerate(trace.records) if r["q"]]


def distance_rows(trace: EpisodeTrace) -> list[tuple[int, float]]:
    p, e = positions(trace)
    return [(t, math.hypot(a[0] - b[0], a[1] - b[1])) for t, (a, b) in enumerate(zip(p, e))]


def distance_csv(trace: EpisodeTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "distance"])
    for t, d in distance_rows(trace):
        w.writerow([t, repr(d)])
    return buf.getvalue()


def _map_size(trace: EpisodeTrace) -> tuple[float, float]:
    cfg = trace.header.get("config", {})
    return float(cfg.get("width", 1.0)), float(cfg.get("height", 1.0))


def _project(width: float, height: float):
    scale = (SIZE - 2 * PAD) / max(width, height)

    def f(x: float, y: float) -> tuple[float, float]:
        return PAD + x * scale, SIZE - PAD - y * scale  # y axis points up

    return f, scale


def _metadata(stamp: dict | None) -> str:
    if not stamp:
        return ""
    return f"<metadata>{escape(json.dumps(stamp, sort_keys=True))}</metadata>\n"


def trajectory_svg(trace: EpisodeTrace, stamp: dict | None = None) -> str:
    if not trace.records:
        raise ValueError("trajectory_svg: trace has no steps")
    width, height = _map_size(trace)
    proj, scale = _project(width, height)
    p, e = positions(trace)
    x0, y1 = proj(0.0, 0.0)
    x1, y0 = proj(width, height)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE:g}" height="{SIZE:g}" viewBox="0 0 {SIZE:g} {SIZE:g}">\n',
        _metadata(stamp),
        f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" height="{y1 - y0:.2f}" fill="none" stroke="#888"/>\n',
    ]
    for name, path in (("pursuer", p), ("evader", e)):
        pts = " ".join("{:.2f},{:.2f}".format(*proj(x, y)) for x, y in path)
        parts.append(f'<polyline class="{name}" points="{pts}" fill="none" stroke="{COLORS[name]}" stroke-width="1.5"/>\n')
    r_mark = max(2.0, 0.01 * scale)
    for t, x, y in query_points(trace):
        cx, cy = proj(x, y)
        parts.append(f'<circle class="query" data-t="{t}" cx="{cx:.2f}" cy="{cy:.2f}" r="{r_mark:.2f}" fill="{COLORS["query"]}"/>\n')
    parts.append(f'<text x="{PAD:g}" y="{PAD - 6:g}" font-size="11">outcome: {escape(trace.outcome)}, steps: {len(trace)}</text>\n')
    parts.append("</svg>\n")
    return "".join(parts)


DYNAMICS_SERIES = ("P_win", "P_shot", "P_timeout", "C_ratio", "C_gap")


def dynamics_csv(log_rows: list[dict]) -> str:
    """Per-snapshot outcome and communication series from a training log."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", *DYNAMICS_SERIES])
    for row in log_rows:
        w.writerow([row["episode"], *(row.get(k, "") for k in DYNAMICS_SERIES)])
    return buf.getvalue()


def _as_float(v) -> float | None:
    try:
        return float(v)
    except (TypeError, ValueError):
        return None


def dynamics_svg(log_rows: list[dict], stamp: dict | None = None) -> str:
    """Two panels: outcome rates on top, communication ratio and gap below."""
    if not log_rows:
        raise ValueError("dynamics_svg: empty training log")
    eps = [float(r["episode"]) for r in log_rows]
    lo, hi = min(eps), max(eps)
    span = hi - lo or 1.0
    w, panel = 480.0, 160.0
    colors = {"P_win": "#27ae60", "P_shot": "#c0392b", "P_timeout": "#7f8c8d", "C_ratio": "#8e44ad", "C_gap": "#d35400"}
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:g}" height="{2 * panel + 3 * PAD:g}">\n', _metadata(stamp)]
    panels = ((("P_win", "P_shot", "P_timeout"), PAD), (("C_ratio", "C_gap"), 2 * PAD + panel))
    for keys, top in panels:
        parts.append(f'<rect x="{PAD:g}" y="{top:g}" width="{w - 2 * PAD:g}" height="{panel:g}" fill="none" stroke="#888"/>\n')
        for k in keys:
            ys = [_as_float(r.get(k)) for r in log_rows]
            vals = [v for v in ys if v is not None]
            if not vals:
                continue
            # rates share [0, 1]; the gap gets its own scale
            ymax = 1.0 if k != "C_gap" else max(vals) or 1.0
            pts = [
                f"{PAD + (x - lo) / span * (w - 2 * PAD):.2f},{top + panel - v / ymax * panel:.2f}"
                for x, v in zip(eps, ys)
                if v is not None
            ]
            parts.append(f'<polyline class="{k}" points="{" ".join(pts)}" fill="none" stroke="{colors[k]}"/>\n')
    parts.append("</svg>\n")
    return "".join(parts)
