"""Map persistence: binary PGM (P5) rasters with a JSON sidecar carrying
the grid binding (resolution, coarse dims, headings, cell pitch, seed)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grids import GridGeometry, GridMap, MapError

PGM_FREE = 255
PGM_OBSTACLE = 0


def sidecar_path(pgm_path) -> Path:
    return Path(pgm_path).with_suffix(".json")


def write_map(grid_map: GridMap, pgm_path, seed=None) -> Path:
    """Write <path>.pgm plus <path>.json sidecar; returns the PGM path."""
    pgm_path = Path(pgm_path)
    pgm_path.parent.mkdir(parents=True, exist_ok=True)
    occ = grid_map.occupancy
    h, w = occ.shape
    data = np.where(occ == 1, PGM_FREE, PGM_OBSTACLE).astype(np.uint8)
    with open(pgm_path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())
    g = grid_map.geometry
    meta = {
        "resolution": g.resolution,
        "n": g.n,
        "m": g.m,
        "theta": g.theta,
        "cell_px": g.cell_px,
        "seed": seed,
    }
    with open(sidecar_path(pgm_path), "w", encoding="utf-8") as f:
        json.dump(meta, f, sort_keys=True)
        f.write("\n")
    return pgm_path


def _read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comment lines allowed.
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(raw):
            raise MapError(f"truncated PGM header in {path}")
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        if raw[pos:pos + 1].isspace():
            pos += 1
            continue
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise MapError(f"{path} is not a binary PGM (P5)")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise MapError(f"unsupported PGM maxval {maxval}")
    pixels = np.frombuffer(raw[pos:pos + h * w], dtype=np.uint8)
    if pixels.size != h * w:
        raise MapError(f"PGM payload of {path} is truncated")
    return pixels.reshape(h, w)


def read_map(pgm_path) -> tuple[GridMap, dict]:
    """Load a PGM + sidecar pair, validating the divisibility invariants."""
    pgm_path = Path(pgm_path)
    pixels = _read_pgm(pgm_path)
    meta_file = sidecar_path(pgm_path)
    if not meta_file.exists():
        raise MapError(f"missing sidecar {meta_file}")
    with open(meta_file, "r", encoding="utf-8") as f:
        meta = json.load(f)
    geometry = GridGeometry(
        n=int(meta["n"]), m=int(meta["m"]), theta=int(meta["theta"]),
        cell_px=int(meta["cell_px"]), resolution=float(meta["resolution"]))
    h, w = pixels.shape
    if h % geometry.n != 0 or w % geometry.m != 0:
        raise MapError(
            f"raster {h}x{w} not divisible by grid {geometry.n}x{geometry.m}")
    occ = (pixels >= 128).astype(np.uint8)
    return GridMap(occ, geometry), meta
