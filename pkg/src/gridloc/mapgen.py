"""Random maze-like maps: Kruskal spanning-tree mazes rasterized to
textured occupancy grids, plus pixel-level map perturbation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grids import GridGeometry, GridMap, MapError, child_rng

# 3x3 cross structuring element for all morphology passes
CROSS = ndimage.generate_binary_structure(2, 1)


class ParameterError(ValueError):
    pass


@dataclass
class CoarseMaze:
    """Cell grid with per-edge walls. h_walls[r, c] is the wall between
    cells (r, c) and (r+1, c); v_walls[r, c] between (r, c) and (r, c+1).
    The outer boundary is implicitly walled."""

    rows: int
    cols: int
    h_walls: np.ndarray  # (rows-1, cols) bool
    v_walls: np.ndarray  # (rows, cols-1) bool
    free: np.ndarray     # (rows, cols) bool

    def removed_wall_count(self) -> int:
        return int((~self.h_walls).sum() + (~self.v_walls).sum())

    def interior_wall_count(self) -> int:
        return self.h_walls.size + self.v_walls.size


@dataclass(frozen=True)
class MorphConfig:
    """Pass-count ranges (inclusive) for dilation/erosion of the obstacle
    mask. A draw of 0 skips the pass."""

    dilate_range: tuple[int, int] = (0, 0)
    erode_range: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class TextureConfig:
    """Wall texture randomization: per-wall thickness (pixels) and length
    (fraction of the nominal cell-edge span), plus morphology noise."""

    thickness_range: tuple[int, int] = (1, 2)
    length_frac_range: tuple[float, float] = (1.0, 1.0)
    morph: MorphConfig = field(default_factory=lambda: MorphConfig((0, 2), (0, 2)))

    @staticmethod
    def clean(thickness: int = 1) -> "TextureConfig":
        """Noise-free walls of fixed thickness, no morphology."""
        return TextureConfig((thickness, thickness), (1.0, 1.0),
                             MorphConfig((0, 0), (0, 0)))


class _UnionFind:
    def __init__(self, size: int):
        self.parent = list(range(size))
        self.rank = [0] * size

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:  # path compression
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def generate_maze(rows: int, cols: int, prune_prob: float = 0.0,
                  seed=None) -> CoarseMaze:
    """Kruskal maze over a rows x cols cell grid.

    A seeded uniform shuffle of all interior wall candidates is processed
    through union-find, removing walls that join distinct components; the
    result is a spanning tree (rows*cols - 1 removed walls). Each surviving
    interior wall is then independently removed with prune_prob, which can
    only add cycles, so connectivity is preserved.
    """
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ParameterError(f"maze needs at least 2 cells, got {rows}x{cols}")
    if not 0.0 <= prune_prob < 1.0:
        raise ParameterError(f"prune_prob must be in [0, 1), got {prune_prob}")
    rng = child_rng(seed, 0)

    h_walls = np.ones((rows - 1, cols), dtype=bool)
    v_walls = np.ones((rows, cols - 1), dtype=bool)

    # Wall ids: horizontal first, then vertical, both row-major.
    n_h = (rows - 1) * cols
    n_v = rows * (cols - 1)
    order = rng.permutation(n_h + n_v)

    uf = _UnionFind(rows * cols)
    for wall in order:
        if wall < n_h:
            r, c = divmod(int(wall), cols)
            a, b = r * cols + c, (r + 1) * cols + c
            if uf.union(a, b):
                h_walls[r, c] = False
        else:
            r, c = divmod(int(wall) - n_h, cols - 1)
            a, b = r * cols + c, r * cols + c + 1
            if uf.union(a, b):
                v_walls[r, c] = False

    if prune_prob > 0.0:
        h_walls &= rng.random(h_walls.shape) >= prune_prob
        v_walls &= rng.random(v_walls.shape) >= prune_prob

    free = np.ones((rows, cols), dtype=bool)
    return CoarseMaze(rows, cols, h_walls, v_walls, free)


def connected_free_cells(maze: CoarseMaze, start: tuple[int, int] | None = None):
    """Set of free cells reachable from start by flood fill through open
    edges. Used as the connectivity oracle in tests."""
    free = maze.free
    if start is None:
        idx = np.argwhere(free)
        if idx.size == 0:
            return set()
        start = tuple(idx[0])
    seen = {start}
    stack = [start]
    while stack:
        r, c = stack.pop()
        steps = []
        if r + 1 < maze.rows and not maze.h_walls[r, c]:
            steps.append((r + 1, c))
        if r > 0 and not maze.h_walls[r - 1, c]:
            steps.append((r - 1, c))
        if c + 1 < maze.cols and not maze.v_walls[r, c]:
            steps.append((r, c + 1))
        if c > 0 and not maze.v_walls[r, c - 1]:
            steps.append((r, c - 1))
        for nxt in steps:
            if free[nxt] and nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def _draw_wall_rect(occ: np.ndarray, r0: int, r1: int, c0: int, c1: int):
    h, w = occ.shape
    occ[max(r0, 0):min(r1, h), max(c0, 0):min(c1, w)] = 0


def _sample_morph_passes(rng: np.random.Generator, morph: MorphConfig):
    n_dil = int(rng.integers(morph.dilate_range[0], morph.dilate_range[1] + 1))
    n_ero = int(rng.integers(morph.erode_range[0], morph.erode_range[1] + 1))
    return n_dil, n_ero


def _apply_morph(occ: np.ndarray, n_dil: int, n_ero: int) -> np.ndarray:
    obst = occ == 0
    if n_dil > 0:
        obst = ndimage.binary_dilation(obst, structure=CROSS, iterations=n_dil)
    if n_ero > 0:
        obst = ndimage.binary_erosion(obst, structure=CROSS, iterations=n_ero)
    return np.where(obst, 0, 1).astype(np.uint8)


def rasterize(maze: CoarseMaze, geometry: GridGeometry,
              texture: TextureConfig | None = None, seed=None) -> GridMap:
    """Rasterize a maze to a textured occupancy grid.

    Wall thickness and length are sampled per segment from the texture
    ranges, morphology noise is applied, the outer border is re-asserted
    as obstacle, and every free cell is guaranteed a free centroid (a
    cell_px/4-radius disc is cleared if texture noise sealed it).
    """
    texture = texture or TextureConfig.clean()
    if geometry.n != maze.rows or geometry.m != maze.cols:
        raise ParameterError(
            f"geometry {geometry.n}x{geometry.m} does not match maze "
            f"{maze.rows}x{maze.cols}")
    if texture.thickness_range[1] >= geometry.cell_px:
        raise ParameterError(
            f"wall thickness {texture.thickness_range[1]} would seal "
            f"corridors of {geometry.cell_px} px")
    rng = child_rng(seed, 1)
    cp = geometry.cell_px
    h, w = geometry.height_px, geometry.width_px
    occ = np.ones((h, w), dtype=np.uint8)

    def draw_t():
        return int(rng.integers(texture.thickness_range[0],
                                texture.thickness_range[1] + 1))

    def draw_len():
        lo, hi = texture.length_frac_range
        return float(lo + (hi - lo) * rng.random())

    # Border ring, one thickness draw per side.
    for side in range(4):
        t = draw_t()
        if side == 0:
            occ[:t, :] = 0
        elif side == 1:
            occ[h - t:, :] = 0
        elif side == 2:
            occ[:, :t] = 0
        else:
            occ[:, w - t:] = 0

    # Interior walls live on cell-boundary lattice lines.
    for r in range(maze.rows - 1):
        for c in range(maze.cols):
            if not maze.h_walls[r, c]:
                continue
            t, length = draw_t(), max(1, int(round(cp * draw_len())))
            y = (r + 1) * cp
            c0 = c * cp + (cp - length) // 2
            _draw_wall_rect(occ, y - (t + 1) // 2, y + t // 2, c0, c0 + length)
    for r in range(maze.rows):
        for c in range(maze.cols - 1):
            if not maze.v_walls[r, c]:
                continue
            t, length = draw_t(), max(1, int(round(cp * draw_len())))
            x = (c + 1) * cp
            r0 = r * cp + (cp - length) // 2
            _draw_wall_rect(occ, r0, r0 + length, x - (t + 1) // 2, x + t // 2)

    # Blocked cells fill solid.
    for r in range(maze.rows):
        for c in range(maze.cols):
            if not maze.free[r, c]:
                _draw_wall_rect(occ, r * cp, (r + 1) * cp, c * cp, (c + 1) * cp)

    n_dil, n_ero = _sample_morph_passes(rng, texture.morph)
    occ = _apply_morph(occ, n_dil, n_ero)

    # Invariants: border stays obstacle, free centroids stay reachable.
    occ[0, :] = occ[-1, :] = 0
    occ[:, 0] = occ[:, -1] = 0
    _repair_free_centroids(occ, maze.free, geometry)
    return GridMap(occ, geometry)


def _repair_free_centroids(occ: np.ndarray, free: np.ndarray,
                           geometry: GridGeometry):
    cp = geometry.cell_px
    radius = max(1, cp // 4)
    for r in range(geometry.n):
        for c in range(geometry.m):
            if not free[r, c]:
                continue
            pr, pc = geometry.centroid_px(r, c)
            if occ[pr, pc] == 1:
                continue
            rr, cc = np.ogrid[-radius:radius + 1, -radius:radius + 1]
            disc = rr * rr + cc * cc <= radius * radius
            r0, c0 = pr - radius, pc - radius
            occ[r0:r0 + disc.shape[0], c0:c0 + disc.shape[1]][disc] = 1


def perturb_map(grid_map: GridMap, flip_count: int,
                morph: MorphConfig | None = None, seed=None) -> GridMap:
    """Copy of the map with flip_count uniformly drawn pixels inverted and
    morphology passes applied. Pixel draws are with replacement, so flips
    may collide. The input map is never mutated."""
    h, w = grid_map.shape
    if flip_count > h * w:
        raise ParameterError(f"flip_count {flip_count} exceeds {h * w} pixels")
    rng = child_rng(seed, 2)
    occ = grid_map.occupancy.copy()
    if flip_count > 0:
        idx = rng.integers(0, h * w, size=flip_count)
        flat = occ.reshape(-1)
        np.bitwise_xor.at(flat, idx, 1)
    if morph is not None:
        n_dil, n_ero = _sample_morph_passes(rng, morph)
        occ = _apply_morph(occ, n_dil, n_ero)
    return GridMap(occ, grid_map.geometry)
