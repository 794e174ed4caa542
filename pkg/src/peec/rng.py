"""Seed splitting.

A root seed fans out into independent, named streams (``reset``,
``elimination``, ``policy``, ...). Each stream is a Philox generator keyed by
``SeedSequence(root, spawn_key=(crc32(purpose), index))``, so drawing more
numbers from one stream never shifts another.
"""

from __future__ import annotations

import zlib
from typing import Any

import numpy as np


def purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(purpose_key(purpose), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _restore(obj: Any) -> Any:
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.asarray(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _restore(v) for k, v in obj.items()}
    return obj


def get_cursor(gen: np.random.Generator) -> dict:
    """JSON-safe snapshot of a generator's full state."""
    return _jsonable(gen.bit_generator.state)


def set_cursor(gen: np.random.Generator, cursor: dict) -> None:
    gen.bit_generator.state = _restore(cursor)
