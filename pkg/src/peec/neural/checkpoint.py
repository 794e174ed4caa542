"""Checkpoint container: ``<stem>.bin`` holds raw little-endian blocks back to
back, ``<stem>.json`` is the manifest (block names, dtypes, shapes, byte
offsets) plus free-form metadata such as optimizer step counts and RNG
cursors."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

FORMAT = "peec-ckpt"
VERSION = 1


class CheckpointError(IOError):
    pass


def _le(dtype: np.dtype) -> np.dtype:
    return np.dtype(dtype).newbyteorder("<")


def save_checkpoint(stem: str | os.PathLike, blocks: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    stem = Path(stem)
    entries = []
    offset = 0
    try:
        stem.parent.mkdir(parents=True, exist_ok=True)
        with open(stem.with_suffix(".bin"), "wb") as fh:
            for name, arr in blocks.items():
                arr = np.ascontiguousarray(arr)
                dt = _le(arr.dtype)
                raw = arr.astype(dt, copy=False).tobytes()
                fh.write(raw)
                entries.append({"name": name, "dtype": dt.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
                offset += len(raw)
        manifest = {"format": FORMAT, "version": VERSION, "blocks": entries, "meta": meta or {}}
        with open(stem.with_suffix(".json"), "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise CheckpointError(f"writing checkpoint {stem}: {exc}") from exc
    return stem.with_suffix(".bin")


def load_checkpoint(stem: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    stem = Path(stem)
    if stem.suffix in (".bin", ".json"):
        stem = stem.with_suffix("")
    try:
        with open(stem.with_suffix(".json")) as fh:
            manifest = json.load(fh)
        raw = stem.with_suffix(".bin").read_bytes()
    except OSError as exc:
        raise CheckpointError(f"reading checkpoint {stem}: {exc}") from exc
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{stem}: not a {FORMAT} manifest")
    if manifest.get("version") != VERSION:
        raise CheckpointError(f"{stem}: unsupported checkpoint version {manifest.get('version')}")
    blocks = {}
    for e in manifest["blocks"]:
        end = e["offset"] + e["nbytes"]
        if end > len(raw):
            raise CheckpointError(f"{stem}: block {e['name']} runs past end of file")
        arr = np.frombuffer(raw[e["offset"] : end], dtype=np.dtype(e["dtype"])).reshape(e["shape"])
        blocks[e["name"]] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return blocks, manifest["meta"]
