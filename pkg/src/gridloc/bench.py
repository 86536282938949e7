"""Wall-time scaling of the scan-matching likelihood and the lookahead
policy across grid sizes."""

from __future__ import annotations

import time

import numpy as np

from .bayes import MotionNoise, measurement_update, uniform_belief
from .grids import GridGeometry
from .lidar import build_scan_matrix
from .likelihood import ScanMatchingLikelihood
from .mapgen import TextureConfig, generate_maze, rasterize
from .policy import LookaheadConfig, aml_policy


def _time_calls(fn, reps: int, warmup: int = 2) -> float:
    for _ in range(warmup):
        fn()
    start = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - start) / reps


def run_benchmark(grids, reps: int = 10, seed: int = 0, cell_px: int = 7,
                  resolution: float = 0.04, top_h: int = 16) -> list[dict]:
    """Mean seconds per likelihood evaluation and per lookahead decision
    for each (theta, n, m) grid size, on freshly generated maps."""
    results = []
    for theta, n, m in grids:
        geometry = GridGeometry(n=n, m=m, theta=theta, cell_px=cell_px,
                                resolution=resolution)
        maze = generate_maze(n, m, prune_prob=0.25, seed=[seed, theta, n, m])
        grid_map = rasterize(maze, geometry, TextureConfig.clean(),
                             seed=[seed, theta, n, m, 1])
        matrix = build_scan_matrix(grid_map)
        provider = ScanMatchingLikelihood(matrix)

        cell = np.argwhere(matrix.valid)[0]
        scan = matrix.scan_at(0, int(cell[0]), int(cell[1]))
        sm_mean = _time_calls(lambda: provider(grid_map, scan), reps)

        belief = measurement_update(uniform_belief(grid_map),
                                    provider(grid_map, scan))
        cfg = LookaheadConfig(scan_matrix=matrix, likelihood=provider,
                              grid_map=grid_map,
                              noise=MotionNoise.default_smoothing(),
                              top_h=top_h)
        policy = aml_policy(cfg)
        map_l = grid_map.low_res()
        scan_l = np.zeros_like(map_l)
        aml_mean = _time_calls(lambda: policy(belief, map_l, scan_l), reps,
                               warmup=1)
        results.append({
            "grid": f"{theta}x{n}x{m}",
            "theta": theta, "n": n, "m": m,
            "sm_mean_s": sm_mean,
            "aml_mean_s": aml_mean,
            "reps": reps,
        })
    return results
