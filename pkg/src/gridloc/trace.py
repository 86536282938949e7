"""Episode trace files: a JSON header with per-step records plus raw
belief snapshots (float32, heading-major) addressed by offset."""

from __future__ import annotations

import json
import struct
from pathlib import Path

from .bayes import BeliefGrid, belief_from_bytes, belief_to_bytes

_MAGIC = b"EPTR"
_HEAD = struct.Struct("<4sII")  # magic, version, json length


def write_trace(path, meta: dict, records: list[dict],
                beliefs: list[BeliefGrid]):
    """records[i] pairs with beliefs[i]; each record gains the relative
    offset of its snapshot inside the blob region."""
    if len(records) != len(beliefs):
        raise ValueError("one belief snapshot per record required")
    blobs = [belief_to_bytes(b) for b in beliefs]
    offsets = []
    pos = 0
    for blob in blobs:
        offsets.append(pos)
        pos += len(blob)
    steps = [dict(rec, belief_offset=off)
             for rec, off in zip(records, offsets)]
    header = json.dumps({"meta": meta, "steps": steps}, sort_keys=True)
    payload = header.encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEAD.pack(_MAGIC, 1, len(payload)))
        f.write(payload)
        for blob in blobs:
            f.write(blob)


def read_trace(path) -> tuple[dict, list[dict], list[BeliefGrid]]:
    with open(path, "rb") as f:
        magic, version, length = _HEAD.unpack(f.read(_HEAD.size))
        if magic != _MAGIC or version != 1:
            raise ValueError(f"{path} is not an episode trace")
        header = json.loads(f.read(length).decode("utf-8"))
        blob = f.read()
    beliefs = []
    steps = header["steps"]
    for i, rec in enumerate(steps):
        start = rec["belief_offset"]
        end = steps[i + 1]["belief_offset"] if i + 1 < len(steps) else len(blob)
        beliefs.append(belief_from_bytes(blob[start:end]))
    return header["meta"], steps, beliefs
