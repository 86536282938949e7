"""Grid geometry, occupancy maps, and pose types shared across the engine.

Conventions: occupancy rasters are (H, W) uint8 arrays with 1 = free and
0 = obstacle. World x runs along columns, world y along rows, with the
origin at the outer corner of pixel (0, 0). Heading angles are measured
from +x toward +y; heading index t maps to angle t * 2*pi / theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


class MapError(ValueError):
    """Raised for maps that violate the grid binding invariants."""


@dataclass(frozen=True)
class GridGeometry:
    """Binds a high-resolution raster to a coarse localization grid."""

    n: int            # coarse rows
    m: int            # coarse cols
    theta: int        # discrete headings
    cell_px: int      # pixels per coarse cell side
    resolution: float  # meters per pixel

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise MapError(f"grid must be at least 1x1, got {self.n}x{self.m}")
        if self.theta < 2:
            raise MapError(f"need at least 2 headings, got {self.theta}")
        if self.cell_px < 2:
            raise MapError(f"cell_px must be >= 2, got {self.cell_px}")
        if self.resolution <= 0:
            raise MapError("resolution must be positive")

    @property
    def height_px(self) -> int:
        return self.n * self.cell_px

    @property
    def width_px(self) -> int:
        return self.m * self.cell_px

    @property
    def cell_size(self) -> float:
        """Centroid-to-centroid pitch in meters (square cells)."""
        return self.cell_px * self.resolution

    l_n = cell_size
    l_m = cell_size

    @property
    def heading_step(self) -> float:
        return TWO_PI / self.theta

    def heading_angle(self, t: int) -> float:
        return (t % self.theta) * self.heading_step

    def centroid_xy(self, n: int, m: int) -> tuple[float, float]:
        """World coordinates (x, y) of coarse cell (n, m)."""
        return ((m + 0.5) * self.cell_size, (n + 0.5) * self.cell_size)

    def centroid_px(self, n: int, m: int) -> tuple[int, int]:
        """Raster pixel (row, col) containing the centroid of cell (n, m)."""
        return (n * self.cell_px + self.cell_px // 2,
                m * self.cell_px + self.cell_px // 2)


@dataclass(frozen=True)
class ContinuousPose:
    x: float
    y: float
    heading: float


@dataclass(frozen=True, order=True)
class CellPose:
    """Discrete pose on the coarse grid, ordered (theta, n, m)."""

    theta: int
    n: int
    m: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.theta, self.n, self.m)


@dataclass
class GridMap:
    """High-resolution occupancy raster bound to a coarse grid geometry."""

    occupancy: np.ndarray  # (H, W) uint8, 1 = free
    geometry: GridGeometry

    def __post_init__(self):
        occ = np.asarray(self.occupancy)
        h, w = occ.shape
        g = self.geometry
        if h != g.height_px or w != g.width_px:
            raise MapError(
                f"raster {h}x{w} does not match geometry "
                f"{g.height_px}x{g.width_px}")
        self.occupancy = occ.astype(np.uint8)
        self._passable: dict[tuple[int, int], np.ndarray] = {}

    @property
    def resolution(self) -> float:
        return self.geometry.resolution

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupancy.shape

    def free_cells(self) -> np.ndarray:
        """Boolean (n, m) mask: cell is free iff its centroid pixel is free."""
        g = self.geometry
        rows = np.arange(g.n) * g.cell_px + g.cell_px // 2
        cols = np.arange(g.m) * g.cell_px + g.cell_px // 2
        return self.occupancy[np.ix_(rows, cols)] == 1

    def is_free_xy(self, x: float, y: float) -> bool:
        """True when world point (x, y) lies inside a free pixel."""
        col = int(math.floor(x / self.resolution))
        row = int(math.floor(y / self.resolution))
        h, w = self.occupancy.shape
        if row < 0 or row >= h or col < 0 or col >= w:
            return False
        return bool(self.occupancy[row, col] == 1)

    def snap(self, pose: ContinuousPose) -> CellPose:
        """Nearest coarse cell and heading index for a continuous pose."""
        g = self.geometry
        n = min(max(int(pose.y // g.cell_size), 0), g.n - 1)
        m = min(max(int(pose.x // g.cell_size), 0), g.m - 1)
        t = int(round(pose.heading / g.heading_step)) % g.theta
        return CellPose(t, n, m)

    def passable_step(self, dn: int, dm: int) -> np.ndarray:
        """(n, m) mask: a one-cell move by (dn, dm) stays on the map, lands
        on a free cell, and does not cross obstacle pixels between the two
        centroids (walls between cells block the move). Cached per map."""
        key = (int(dn), int(dm))
        cached = self._passable.get(key)
        if cached is not None:
            return cached
        g = self.geometry
        free = self.free_cells()
        nn, mm = np.meshgrid(np.arange(g.n), np.arange(g.m), indexing="ij")
        dest_n, dest_m = nn + dn, mm + dm
        inb = (dest_n >= 0) & (dest_n < g.n) & (dest_m >= 0) & (dest_m < g.m)
        ok = np.zeros((g.n, g.m), dtype=bool)
        ok[inb] = free[dest_n[inb], dest_m[inb]]
        ok &= free
        # Sample the centroid-to-centroid segment at half-pixel steps.
        cx = (mm + 0.5) * g.cell_size
        cy = (nn + 0.5) * g.cell_size
        length = g.cell_size * float(np.hypot(dn, dm))
        steps = max(2, int(np.ceil(length / (0.5 * g.resolution))))
        h, w = self.occupancy.shape
        clear = np.ones((g.n, g.m), dtype=bool)
        for t in np.linspace(0.0, 1.0, steps + 1):
            col = np.floor((cx + t * dm * g.cell_size) / g.resolution)
            row = np.floor((cy + t * dn * g.cell_size) / g.resolution)
            col = col.astype(np.int64)
            row = row.astype(np.int64)
            inside = (row >= 0) & (row < h) & (col >= 0) & (col < w)
            sample = np.zeros((g.n, g.m), dtype=bool)
            sample[inside] = self.occupancy[row[inside], col[inside]] == 1
            clear &= sample
        mask = ok & clear
        self._passable[key] = mask
        return mask

    def low_res(self) -> np.ndarray:
        """(n, m) float map with 1.0 where the cell contains any obstacle.

        Max-pooled obstacle indicator; the coarse map fed to policies.
        """
        g = self.geometry
        obst = (self.occupancy == 0).astype(np.float64)
        pooled = obst.reshape(g.n, g.cell_px, g.m, g.cell_px).max(axis=(1, 3))
        return pooled


def pool_to_grid(raster: np.ndarray, geometry: GridGeometry) -> np.ndarray:
    """Max-pool any (H, W) raster down to the coarse (n, m) grid."""
    g = geometry
    r = np.asarray(raster, dtype=np.float64)
    if r.shape != (g.height_px, g.width_px):
        raise MapError(f"raster {r.shape} does not match geometry")
    return r.reshape(g.n, g.cell_px, g.m, g.cell_px).max(axis=(1, 3))


def heading_unit_step(t: int, theta: int) -> tuple[int, int]:
    """Coarse (dn, dm) displacement of one forward move at heading index t."""
    ang = t * TWO_PI / theta
    return (int(round(math.sin(ang))), int(round(math.cos(ang))))


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a > math.pi:
        a -= TWO_PI
    elif a <= -math.pi:
        a += TWO_PI
    return a


def normalize_seed(seed) -> list[int]:
    """Root seed as a flat list of ints (fresh entropy when None). Lists
    let callers derive deterministic per-item seeds like [seed, idx]."""
    if seed is None:
        return [int(np.random.SeedSequence().entropy % (2 ** 63))]
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def child_rng(seed, *key) -> np.random.Generator:
    """Independent generator derived from a root seed and an integer key path.

    Uses SeedSequence spawn keys, so streams are stable across runs and
    machines for the same (seed, key).
    """
    ss = np.random.SeedSequence(entropy=normalize_seed(seed),
                                spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
