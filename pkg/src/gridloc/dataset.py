"""Training-set export: randomized maps with (scan, map, likelihood)
triplets computed by the scan-matching oracle under domain randomization."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .env import NoiseProfile
from .grids import ContinuousPose, GridGeometry, child_rng, normalize_seed
from .lidar import build_scan_matrix, corrupt_scan, raycast, reduce_scan
from .likelihood import cosine_scores, tempered_softmax
from .mapgen import TextureConfig, generate_maze, perturb_map, rasterize
from .mapio import write_map

BETA_RANGE = (0.1, 1.0)  # per-sample export temperature


def generate_dataset(n_maps: int, poses_per_map: int, dr: NoiseProfile,
                     out, seed=None, geometry: GridGeometry | None = None,
                     texture: TextureConfig | None = None,
                     prune_prob: float = 0.25) -> list[dict]:
    """Write n_maps randomized maps with poses_per_map sampled scans each.

    Per map: generate and rasterize a maze, precompute the scan matrix on
    the clean raster, store a (possibly perturbed) copy as the map input.
    Per pose: spawn with within-cell offset noise, ray cast on the clean
    map, corrupt the scan, correlate it against the matrix, temper with a
    per-sample temperature, and write the triplet files plus one manifest
    row. Returns the manifest rows.
    """
    seed = normalize_seed(seed)
    geometry = geometry or GridGeometry(n=11, m=11, theta=4, cell_px=7,
                                        resolution=0.04)
    texture = texture or TextureConfig.clean()
    out = Path(out)
    maps_dir = out / "maps"
    samples_dir = out / "samples"
    maps_dir.mkdir(parents=True, exist_ok=True)
    samples_dir.mkdir(parents=True, exist_ok=True)

    rows: list[dict] = []
    with open(out / "manifest.jsonl", "w", encoding="utf-8") as manifest:
        for i in range(n_maps):
            map_id = f"{i:05d}"
            maze = generate_maze(geometry.n, geometry.m, prune_prob,
                                 seed=seed + [30, i])
            sim_map = rasterize(maze, geometry, texture, seed=seed + [31, i])
            matrix = build_scan_matrix(sim_map)
            if dr.map_flip_count > 0 or dr.map_morph is not None:
                stored = perturb_map(sim_map, dr.map_flip_count,
                                     dr.map_morph, seed=seed + [32, i])
            else:
                stored = sim_map
            write_map(stored, maps_dir / f"{map_id}.pgm", seed=seed)
            sample_dir = samples_dir / map_id
            sample_dir.mkdir(parents=True, exist_ok=True)
            rng = child_rng(seed, 33, i)
            free = np.argwhere(sim_map.free_cells())
            for k in range(poses_per_map):
                try:
                    row = _write_sample(manifest, sample_dir, map_id, k,
                                        sim_map, matrix, free, dr, rng,
                                        geometry)
                except OSError:
                    _cleanup_sample(sample_dir, k)
                    raise
                rows.append(row)
    return rows


def _write_sample(manifest, sample_dir: Path, map_id: str, k: int, sim_map,
                  matrix, free, dr: NoiseProfile, rng, geometry):
    g = geometry
    pick = free[int(rng.integers(free.shape[0]))]
    t = int(rng.integers(g.theta))
    cx, cy = g.centroid_xy(int(pick[0]), int(pick[1]))
    half = g.cell_size / 2.0
    if dr.pose_jitter_frac > 0:
        for _ in range(8):
            dx = float(rng.uniform(-1, 1)) * dr.pose_jitter_frac * half
            dy = float(rng.uniform(-1, 1)) * dr.pose_jitter_frac * half
            if sim_map.is_free_xy(cx + dx, cy + dy):
                cx, cy = cx + dx, cy + dy
                break
    pose = ContinuousPose(cx, cy, g.heading_angle(t))

    scan = raycast(sim_map, pose)
    corrupt_seed = int(rng.integers(2 ** 63))
    scan = corrupt_scan(scan, sigma=dr.scan_sigma,
                        dropout_prob=dr.scan_dropout,
                        rot_jitter=dr.scan_rot_jitter, seed=corrupt_seed)
    beta = float(rng.uniform(*BETA_RANGE))
    scores = cosine_scores(matrix, reduce_scan(scan, matrix.beams))
    lik = tempered_softmax(scores, beta)

    scan_file = sample_dir / f"{k}.scan"
    lik_file = sample_dir / f"{k}.lik"
    with open(scan_file, "wb") as f:
        f.write(np.ascontiguousarray(scan.ranges, dtype="<f4").tobytes())
    with open(lik_file, "wb") as f:
        f.write(np.ascontiguousarray(lik.values, dtype="<f4").tobytes())

    row = {
        "map_id": map_id,
        "sample": k,
        "map_pgm": f"maps/{map_id}.pgm",
        "scan_file": f"samples/{map_id}/{k}.scan",
        "lik_file": f"samples/{map_id}/{k}.lik",
        "pose": {"x": pose.x, "y": pose.y, "heading": pose.heading},
        "cell": [t, int(pick[0]), int(pick[1])],
        "beta": beta,
        "corrupt_seed": corrupt_seed,
    }
    manifest.write(json.dumps(row, sort_keys=True) + "\n")
    manifest.flush()
    return row


def _cleanup_sample(sample_dir: Path, k: int):
    for suffix in (".scan", ".lik"):
        path = sample_dir / f"{k}{suffix}"
        if path.exists():
            path.unlink()
