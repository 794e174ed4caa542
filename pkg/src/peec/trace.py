"""Episode traces: a header line followed by one JSON record per step.

A record's ``t`` is the game time reached by the step it describes (the
first step has ``t = 1``); positions and headings are the values at that
time and the actions are those applied during the step. ``elapsed``, ``sigma`` and
``est_x``/``est_y`` describe the pursuer's observation when it chose its
action (i.e. before the step).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .engine import GameState, Status

TRACE_VERSION = 1

RECORD_FIELDS = (
    "t",
    "px",
    "py",
    "ppsi",
    "ex",
    "ey",
    "epsi",
    "a_p",
    "a_e",
    "q",
    "eliminated_draw",
    "reward_p",
    "reward_e",
    "status",
    "elapsed",
    "sigma",
    "est_x",
    "est_y",
)


def pose_dict(state: GameState) -> dict:
    p, e = state.pursuer, state.evader
    return {"px": p.x, "py": p.y, "ppsi": p.heading, "ex": e.x, "ey": e.y, "epsi": e.heading}


@dataclass
class EpisodeTrace:
    header: dict
    records: list[dict] = field(default_factory=list)

    @classmethod
    def start(cls, state: GameState, config_dict: dict, seed: int, episode: int, extra: dict | None = None) -> "EpisodeTrace":
        header = {
            "kind": "header",
            "version": TRACE_VERSION,
            "seed": int(seed),
            "episode": int(episode),
            "config": config_dict,
            "initial": pose_dict(state),
            "shooting_radius": state.shooting_radius,
            "pursuer_speed": state.pursuer.speed,
            "evader_speed": state.evader.speed,
        }
        if extra:
            header.update(extra)
        return cls(header=header)

    @property
    def terminal(self) -> bool:
        return bool(self.records) and self.records[-1]["status"] != Status.RUNNING.value

    @property
    def outcome(self) -> str:
        return self.records[-1]["status"] if self.records else Status.RUNNING.value

    def __len__(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header, sort_keys=True)]
        lines.extend(json.dumps(r, sort_keys=True) for r in self.records)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeTrace":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[0].get("kind") != "header":
            raise ValueError("trace: first line must be a header record")
        if rows[0].get("version") != TRACE_VERSION:
            raise ValueError(f"trace: unsupported version {rows[0].get('version')}")
        return cls(header=rows[0], records=rows[1:])


def write_trace(trace: EpisodeTrace, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(trace.to_jsonl())
    return path


def read_trace(path: str | os.PathLike) -> EpisodeTrace:
    return EpisodeTrace.from_jsonl(Path(path).read_text())


def write_traces(traces: list[EpisodeTrace], directory: str | os.PathLike) -> list[Path]:
    directory = Path(directory)
    return [write_trace(tr, directory / f"episode_{tr.header['episode']:05d}.jsonl") for tr in traces]


def read_traces(directory: str | os.PathLike) -> list[EpisodeTrace]:
    return [read_trace(p) for p in sorted(Path(directory).glob("episode_*.jsonl"))]
