"""Range sensing on occupancy rasters: grid-traversal ray casting, scan
corruption, scan-to-image projection, and whole-map scan-matrix
precomputation with a binary cache format.

Rays terminate at the first pixel whose center is obstacle; the returned
distance is measured to the crossed pixel boundary, so axis symmetries
and heading/beam aliasing hold exactly.
"""

from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .grids import TWO_PI, GridGeometry, GridMap, child_rng

DEFAULT_BEAMS = 360
DEFAULT_MIN_RANGE = 0.15
DEFAULT_MAX_RANGE = 8.0

_SCMX_MAGIC = b"SCMX"
_SCMX_VERSION = 1
_SCMX_HEADER = struct.Struct("<4sIIIIIIdddd")  # magic, ver, T,N,M,B, cell_px, res, fov, min, max


class InvalidPoseError(ValueError):
    pass


class ParameterError(ValueError):
    pass


@dataclass
class Scan:
    """One revolution of range measurements. Beam i points at
    heading + i * fov / beams; out-of-range returns are +inf."""

    ranges: np.ndarray
    fov: float = TWO_PI
    min_range: float = DEFAULT_MIN_RANGE
    max_range: float = DEFAULT_MAX_RANGE

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=np.float64)

    @property
    def beams(self) -> int:
        return self.ranges.size


@dataclass
class ScanImage:
    raster: np.ndarray  # (H, W) uint8
    frame: str          # "robot" or "map"


@functools.lru_cache(maxsize=8)
def _direction_table(beams: int) -> tuple[np.ndarray, np.ndarray]:
    ang = TWO_PI * np.arange(beams) / beams
    return np.cos(ang), np.sin(ang)


def beam_directions(heading: float, beams: int, fov: float = TWO_PI):
    """Unit direction per beam. When the heading is (numerically) a whole
    number of beam increments on a full-circle scan, directions are taken
    from a shared table so that rotating the robot by k beams yields a
    bitwise circular shift of the scan."""
    if abs(fov - TWO_PI) < 1e-12:
        beats = heading * beams / TWO_PI
        snapped = round(beats)
        if abs(beats - snapped) < 1e-9:
            cos_t, sin_t = _direction_table(beams)
            idx = (snapped + np.arange(beams)) % beams
            return cos_t[idx], sin_t[idx]
    ang = heading + fov * np.arange(beams) / beams
    return np.cos(ang), np.sin(ang)


def _cast_rays(occ: np.ndarray, ox_px: np.ndarray, oy_px: np.ndarray,
               dir_x: np.ndarray, dir_y: np.ndarray,
               tmax_px: float) -> np.ndarray:
    """Lockstep Amanatides-Woo traversal for a batch of rays.

    Origins and the returned distances are in pixel units; rays that hit
    nothing within tmax_px (or leave the raster) come back +inf. The
    per-ray arithmetic is independent of batch composition, so results
    are identical however rays are grouped.
    """
    h, w = occ.shape
    n = ox_px.size
    out = np.full(n, np.inf)

    ix = np.floor(ox_px).astype(np.int64)
    iy = np.floor(oy_px).astype(np.int64)
    step_x = np.sign(dir_x).astype(np.int64)
    step_y = np.sign(dir_y).astype(np.int64)
    with np.errstate(divide="ignore"):
        inv_x = 1.0 / dir_x
        inv_y = 1.0 / dir_y
    t_max_x = np.where(step_x != 0,
                       (ix + (step_x > 0) - ox_px) * inv_x, np.inf)
    t_max_y = np.where(step_y != 0,
                       (iy + (step_y > 0) - oy_px) * inv_y, np.inf)
    t_dx = np.abs(inv_x)
    t_dy = np.abs(inv_y)
    ridx = np.arange(n)

    while ridx.size:
        cross_x = t_max_x <= t_max_y
        cross_y = t_max_y <= t_max_x  # both true at exact corner crossings
        t = np.where(cross_x, t_max_x, t_max_y)
        ix = ix + np.where(cross_x, step_x, 0)
        iy = iy + np.where(cross_y, step_y, 0)
        t_max_x = t_max_x + np.where(cross_x, t_dx, 0.0)
        t_max_y = t_max_y + np.where(cross_y, t_dy, 0.0)

        over = t > tmax_px
        oob = (ix < 0) | (ix >= w) | (iy < 0) | (iy >= h)
        inb = ~(over | oob)
        hit = np.zeros(ridx.size, dtype=bool)
        if inb.any():
            hit[inb] = occ[iy[inb], ix[inb]] == 0
        out[ridx[hit]] = t[hit]

        keep = ~(hit | over | oob)
        if keep.all():
            continue
        ridx = ridx[keep]
        ix, iy = ix[keep], iy[keep]
        step_x, step_y = step_x[keep], step_y[keep]
        t_max_x, t_max_y = t_max_x[keep], t_max_y[keep]
        t_dx, t_dy = t_dx[keep], t_dy[keep]
    return out


def _cast_pose(occ: np.ndarray, resolution: float, x: float, y: float,
               dir_x: np.ndarray, dir_y: np.ndarray,
               min_range: float, max_range: float) -> np.ndarray:
    px, py = x / resolution, y / resolution
    ox = np.full(dir_x.size, px)
    oy = np.full(dir_y.size, py)
    dist_px = _cast_rays(occ, ox, oy, dir_x, dir_y, max_range / resolution)
    ranges = dist_px * resolution
    finite = np.isfinite(ranges)
    ranges[finite] = np.maximum(ranges[finite], min_range)
    return ranges


def raycast(grid_map: GridMap, pose, beams: int = DEFAULT_BEAMS,
            fov: float = TWO_PI, min_range: float = DEFAULT_MIN_RANGE,
            max_range: float = DEFAULT_MAX_RANGE) -> Scan:
    """Simulate one scan from a continuous pose inside free space."""
    if not grid_map.is_free_xy(pose.x, pose.y):
        raise InvalidPoseError(
            f"pose ({pose.x:.3f}, {pose.y:.3f}) is not in free space")
    dir_x, dir_y = beam_directions(pose.heading, beams, fov)
    ranges = _cast_pose(grid_map.occupancy, grid_map.resolution,
                        pose.x, pose.y, dir_x, dir_y, min_range, max_range)
    return Scan(ranges, fov=fov, min_range=min_range, max_range=max_range)


def cast_single(grid_map: GridMap, x: float, y: float, angle: float,
                max_range: float) -> float:
    """Distance (meters) to the first obstacle along one ray, +inf if none.

    No minimum-range clamp; used for motion/contact checks.
    """
    d = np.array([math.cos(angle)])
    s = np.array([math.sin(angle)])
    res = grid_map.resolution
    dist = _cast_rays(grid_map.occupancy,
                      np.array([x / res]), np.array([y / res]),
                      d, s, max_range / res)
    return float(dist[0] * res)


def corrupt_scan(scan: Scan, sigma: float = 0.0, dropout_prob: float = 0.0,
                 rot_jitter: float = 0.0, seed=None) -> Scan:
    """Domain-randomized copy of a scan: circular rotation by a whole-beam
    jitter drawn in +-rot_jitter degrees, Gaussian range noise on finite
    beams (re-clamped), then independent dropout to +inf."""
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")
    if not 0.0 <= dropout_prob <= 1.0:
        raise ParameterError("dropout_prob must be in [0, 1]")
    rng = child_rng(seed, 3)
    b = scan.beams
    jmax = int(round(abs(rot_jitter) * b / 360.0))
    shift = int(rng.integers(-jmax, jmax + 1))
    ranges = np.roll(scan.ranges, shift)
    noise = rng.normal(0.0, sigma, size=b) if sigma > 0 else np.zeros(b)
    finite = np.isfinite(ranges)
    ranges[finite] = np.clip(ranges[finite] + noise[finite],
                             scan.min_range, scan.max_range)
    drop = rng.random(b) < dropout_prob
    ranges[drop] = np.inf
    return Scan(ranges, fov=scan.fov, min_range=scan.min_range,
                max_range=scan.max_range)


def scan_to_image(scan: Scan, geometry: GridGeometry) -> ScanImage:
    """Rasterize finite beam endpoints in the robot frame onto a zero image
    of map dimensions, robot at the image center heading along +x."""
    h, w = geometry.height_px, geometry.width_px
    img = np.zeros((h, w), dtype=np.uint8)
    finite = np.isfinite(scan.ranges)
    if finite.any():
        d = scan.ranges[finite]
        ang = (scan.fov * np.arange(scan.beams) / scan.beams)[finite]
        col = w // 2 + np.rint(d * np.cos(ang) / geometry.resolution).astype(int)
        row = h // 2 + np.rint(d * np.sin(ang) / geometry.resolution).astype(int)
        ok = (row >= 0) & (row < h) & (col >= 0) & (col < w)
        img[row[ok], col[ok]] = 1
    return ScanImage(img, frame="robot")


def scan_to_image_at(scan: Scan, grid_map: GridMap, pose) -> ScanImage:
    """Rasterize finite beam endpoints into the map frame as seen from a
    hypothesized pose."""
    h, w = grid_map.shape
    img = np.zeros((h, w), dtype=np.uint8)
    dir_x, dir_y = beam_directions(pose.heading, scan.beams, scan.fov)
    finite = np.isfinite(scan.ranges)
    if finite.any():
        d = scan.ranges[finite]
        res = grid_map.resolution
        col = np.floor((pose.x + d * dir_x[finite]) / res).astype(int)
        row = np.floor((pose.y + d * dir_y[finite]) / res).astype(int)
        ok = (row >= 0) & (row < h) & (col >= 0) & (col < w)
        img[row[ok], col[ok]] = 1
    return ScanImage(img, frame="map")


def reduce_scan(scan: Scan, target_beams: int = DEFAULT_BEAMS) -> Scan:
    """Resample a scan to target_beams full-circle beams by nearest-angle
    subsampling; target angles outside the sensor fov become +inf."""
    if scan.beams == target_beams and abs(scan.fov - TWO_PI) < 1e-12:
        return scan
    step_src = scan.fov / scan.beams
    ang = TWO_PI * np.arange(target_beams) / target_beams
    idx = np.rint(ang / step_src).astype(int)
    covered = (ang <= scan.fov - step_src / 2) & (idx < scan.beams)
    ranges = np.where(covered, scan.ranges[np.clip(idx, 0, scan.beams - 1)],
                      np.inf)
    return Scan(ranges, fov=TWO_PI, min_range=scan.min_range,
                max_range=scan.max_range)


@dataclass
class ScanMatrix:
    """Precomputed range vectors at every coarse cell centroid and heading.
    Invalid (obstacle-centroid) cells hold all-zero rows."""

    ranges: np.ndarray  # (theta, n, m, beams) float32, +inf = no return
    valid: np.ndarray   # (n, m) bool
    geometry: GridGeometry
    fov: float = TWO_PI
    min_range: float = DEFAULT_MIN_RANGE
    max_range: float = DEFAULT_MAX_RANGE
    _flat: np.ndarray | None = field(default=None, repr=False)
    _norms: np.ndarray | None = field(default=None, repr=False)

    @property
    def beams(self) -> int:
        return self.ranges.shape[-1]

    def scan_at(self, theta: int, n: int, m: int) -> Scan:
        if not self.valid[n, m]:
            raise InvalidPoseError(f"cell ({n}, {m}) has no scan")
        return Scan(self.ranges[theta, n, m].astype(np.float64),
                    fov=self.fov, min_range=self.min_range,
                    max_range=self.max_range)

    def flat_clamped(self) -> tuple[np.ndarray, np.ndarray]:
        """(theta*n*m, beams) matrix with +inf replaced by max_range, and
        per-row norms; cached for repeated correlation queries."""
        if self._flat is None:
            flat = self.ranges.reshape(-1, self.beams).copy()
            flat[~np.isfinite(flat)] = self.max_range
            self._flat = flat
            self._norms = np.linalg.norm(flat, axis=1)
        return self._flat, self._norms


def build_scan_matrix(grid_map: GridMap, beams: int = DEFAULT_BEAMS,
                      fov: float = TWO_PI,
                      min_range: float = DEFAULT_MIN_RANGE,
                      max_range: float = DEFAULT_MAX_RANGE) -> ScanMatrix:
    """Cast a scan from every free cell centroid at every heading.

    On full-circle scans with beams divisible by the heading count, a
    heading rotation aliases onto a circular beam shift, so only heading 0
    is cast and the remaining headings are exact rolls of it; this matches
    what per-heading casting produces bit for bit.
    """
    g = grid_map.geometry
    free = grid_map.free_cells()
    cells = np.argwhere(free)
    tensor = np.zeros((g.theta, g.n, g.m, beams), dtype=np.float32)
    if cells.size:
        res = g.resolution
        cx = (cells[:, 1] + 0.5) * g.cell_size / res   # pixel units
        cy = (cells[:, 0] + 0.5) * g.cell_size / res
        aliases = abs(fov - TWO_PI) < 1e-12 and beams % g.theta == 0
        headings = [0] if aliases else range(g.theta)
        for t in headings:
            dir_x, dir_y = beam_directions(t * g.heading_step, beams, fov)
            ox = np.repeat(cx, beams)
            oy = np.repeat(cy, beams)
            dx = np.tile(dir_x, cells.shape[0])
            dy = np.tile(dir_y, cells.shape[0])
            dist = _cast_rays(grid_map.occupancy, ox, oy, dx, dy,
                              max_range / res)
            ranges = (dist * res).reshape(cells.shape[0], beams)
            fin = np.isfinite(ranges)
            ranges[fin] = np.maximum(ranges[fin], min_range)
            tensor[t, cells[:, 0], cells[:, 1]] = ranges.astype(np.float32)
        if aliases:
            for t in range(1, g.theta):
                shift = t * beams // g.theta
                tensor[t] = np.roll(tensor[0], -shift, axis=-1)
    return ScanMatrix(tensor, free, g, fov=fov, min_range=min_range,
                      max_range=max_range)


def save_scan_matrix(matrix: ScanMatrix, path):
    g = matrix.geometry
    header = _SCMX_HEADER.pack(
        _SCMX_MAGIC, _SCMX_VERSION, g.theta, g.n, g.m, matrix.beams,
        g.cell_px, g.resolution, matrix.fov, matrix.min_range,
        matrix.max_range)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(matrix.ranges, dtype="<f4").tobytes())


def load_scan_matrix(path) -> ScanMatrix:
    with open(path, "rb") as f:
        header = f.read(_SCMX_HEADER.size)
        magic, version, theta, n, m, beams, cell_px, res, fov, rmin, rmax = \
            _SCMX_HEADER.unpack(header)
        if magic != _SCMX_MAGIC:
            raise ParameterError(f"{path} is not a scan-matrix cache")
        if version != _SCMX_VERSION:
            raise ParameterError(f"unsupported scan-matrix version {version}")
        payload = np.frombuffer(f.read(), dtype="<f4")
    expected = theta * n * m * beams
    if payload.size != expected:
        raise ParameterError(f"scan-matrix payload truncated in {path}")
    ranges = payload.reshape(theta, n, m, beams).copy()
    valid = ranges.any(axis=(0, 3))
    geometry = GridGeometry(n=n, m=m, theta=theta, cell_px=cell_px,
                            resolution=res)
    return ScanMatrix(ranges, valid, geometry, fov=fov, min_range=rmin,
                      max_range=rmax)
