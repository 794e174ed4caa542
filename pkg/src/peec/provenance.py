"""Code version and run stamps embedded in output artifacts."""

from __future__ import annotations

import hashlib
import json
from functools import lru_cache
from pathlib import Path

from . import __version__

_ROOT = Path(__file__).resolve().parent


@lru_cache(maxsize=1)
def source_hash() -> str:
    """SHA-256 over the package's ``.py`` files (relative path + bytes)."""
    h = hashlib.sha256()
    for path in sorted(_ROOT.rglob("*.py")):
        h.update(str(path.relative_to(_ROOT)).encode())
        h.update(b"\0")
        h.update(path.read_bytes())
    return h.hexdigest()


def code_version() -> str:
    return f"{__version__}+{source_hash()[:12]}"


def stamp(config: dict, seed: int | None, command: str) -> dict:
    return {"command": command, "seed": seed, "code_version": code_version(), "config": config}


def stamp_line(stamp_dict: dict) -> str:
    """A single ``#`` comment line for the top of a CSV artifact."""
    return "# " + json.dumps(stamp_dict, sort_keys=True) + "\n"


def read_stamped_csv(text: str) -> tuple[dict | None, str]:
    """Split a stamped CSV into its stamp and the plain CSV body."""
    if text.startswith("# "):
        first, _, rest = text.partition("\n")
        return json.loads(first[2:]), rest
    return None, text
