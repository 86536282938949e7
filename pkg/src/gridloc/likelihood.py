"""Measurement likelihood: correlation of a live scan against the
precomputed scan matrix, tempered-softmax normalization, and hierarchical
coarse-to-fine refinement behind pluggable provider interfaces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .grids import ContinuousPose, GridMap
from .lidar import ParameterError, Scan, ScanMatrix, _cast_rays, \
    beam_directions, reduce_scan, scan_to_image_at

INVALID_SCORE = -1.0


@dataclass
class LikelihoodGrid:
    """Nonnegative (theta, n, m) tensor; a distribution after tempering."""

    values: np.ndarray
    level: int = 0
    temperature: float | None = None

    @property
    def shape(self):
        return self.values.shape


class LikelihoodProvider(Protocol):
    """Anything that maps (map, scan) to a likelihood distribution; the
    slot a trained model plugs into."""

    def __call__(self, grid_map: GridMap, scan: Scan) -> LikelihoodGrid: ...


@dataclass(frozen=True)
class HierarchyConfig:
    """Coarse-to-fine refinement knobs: refine the top c coarse entries
    into k x k sub-cells using crop_px-wide map context."""

    c: int = 5
    k: int = 3
    crop_px: int = 21

    def __post_init__(self):
        if self.c < 0:
            raise ParameterError("c must be >= 0")
        if self.k < 2:
            raise ParameterError("k must be >= 2")
        if self.crop_px < self.k:
            raise ParameterError("crop_px must be >= k")


@dataclass(frozen=True)
class FineQuery:
    """One refinement request: a coarse cell/heading plus map and scan
    context cropped around that cell."""

    cell: tuple[int, int]
    theta: int
    map_crop: np.ndarray
    scan_crop: np.ndarray
    scan: Scan


FineProvider = Callable[[FineQuery], np.ndarray]


def cosine_scores(scan_matrix: ScanMatrix, scan: Scan) -> np.ndarray:
    """Cosine similarity of the query against every stored range vector.

    +inf beams are clamped to max_range on both sides before correlation.
    Cells without a stored scan score -1 so they can never win the argmax.
    """
    if scan.beams != scan_matrix.beams:
        raise ParameterError(
            f"scan has {scan.beams} beams, matrix expects {scan_matrix.beams}")
    q = np.asarray(scan.ranges, dtype=np.float64).copy()
    q[~np.isfinite(q)] = scan_matrix.max_range
    qn = np.linalg.norm(q)
    flat, norms = scan_matrix.flat_clamped()
    if qn == 0.0:
        scores = np.zeros(flat.shape[0])
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = (flat @ q.astype(np.float32)) / (norms * qn)
    g = scan_matrix.geometry
    scores = scores.reshape(g.theta, g.n, g.m).astype(np.float64)
    scores[:, ~scan_matrix.valid] = INVALID_SCORE
    return scores


def tempered_softmax(scores: np.ndarray, beta: float) -> LikelihoodGrid:
    """exp(beta * score) normalized over all entries, with max subtraction
    for stability. Preserves the argmax for any beta > 0."""
    if beta <= 0:
        raise ParameterError(f"temperature must be positive, got {beta}")
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ParameterError("scores must be finite")
    z = beta * (scores - scores.max())
    e = np.exp(z)
    return LikelihoodGrid(e / e.sum(), level=0, temperature=float(beta))


def crop_centered(arr: np.ndarray, center: tuple[int, int],
                  size: int) -> np.ndarray:
    """Square crop around a pixel, zero-padded where it leaves the array."""
    out = np.zeros((size, size), dtype=arr.dtype)
    r0 = center[0] - size // 2
    c0 = center[1] - size // 2
    ra, rb = max(r0, 0), min(r0 + size, arr.shape[0])
    ca, cb = max(c0, 0), min(c0 + size, arr.shape[1])
    if ra < rb and ca < cb:
        out[ra - r0:rb - r0, ca - c0:cb - c0] = arr[ra:rb, ca:cb]
    return out


def refine_hierarchical(coarse: LikelihoodGrid, grid_map: GridMap,
                        scan: Scan, cfg: HierarchyConfig,
                        fine_provider: FineProvider) -> LikelihoodGrid:
    """Expand a coarse likelihood to (theta, k*n, k*m).

    The top-c coarse entries are refined: the provider's k x k block is
    scaled by the coarse value. Everything else copies its coarse value
    split evenly over the k^2 sub-cells, so block sums always marginalize
    back to the coarse tensor and total mass is conserved.
    """
    if coarse.level != 0:
        raise ParameterError("refinement expects a level-0 likelihood")
    g = grid_map.geometry
    vals = coarse.values
    if vals.shape != (g.theta, g.n, g.m):
        raise ParameterError("coarse shape does not match map geometry")
    k = cfg.k
    fine = vals.repeat(k, axis=1).repeat(k, axis=2) / (k * k)

    flat = vals.reshape(-1)
    order = np.argsort(-flat, kind="stable")  # ties fall back to (t, n, m)
    for idx in order[:min(cfg.c, flat.size)]:
        t, n, m = np.unravel_index(int(idx), vals.shape)
        center = g.centroid_px(n, m)
        map_crop = crop_centered(grid_map.occupancy, center, cfg.crop_px)
        hyp = ContinuousPose(*g.centroid_xy(n, m), g.heading_angle(t))
        scan_img = scan_to_image_at(scan, grid_map, hyp).raster
        scan_crop = crop_centered(scan_img, center, cfg.crop_px)
        block = np.asarray(
            fine_provider(FineQuery((n, m), int(t), map_crop, scan_crop, scan)),
            dtype=np.float64)
        if block.shape != (k, k):
            raise ParameterError(f"fine provider returned {block.shape}, "
                                 f"expected {(k, k)}")
        total = block.sum()
        block = block / total if total > 0 else np.full((k, k), 1.0 / (k * k))
        fine[t, n * k:(n + 1) * k, m * k:(m + 1) * k] = block * vals[t, n, m]

    fine /= fine.sum()
    return LikelihoodGrid(fine, level=1, temperature=coarse.temperature)


def fine_scan_matching_provider(grid_map: GridMap, cfg: HierarchyConfig,
                                beta: float = 20.0) -> FineProvider:
    """Classical stand-in for a learned fine model: ray casts at the k x k
    sub-cell centroids of the target cell (at the query heading), scores
    each against the query scan, and softmaxes within the block."""
    g = grid_map.geometry
    occ = grid_map.occupancy
    res = g.resolution
    k = cfg.k
    sub = g.cell_size / k

    def provider(query: FineQuery) -> np.ndarray:
        n, m = query.cell
        scan = query.scan
        xs = m * g.cell_size + (np.arange(k) + 0.5) * sub
        ys = n * g.cell_size + (np.arange(k) + 0.5) * sub
        gx, gy = np.meshgrid(xs, ys)  # gy rows, gx cols
        cols = np.floor(gx / res).astype(int)
        rows = np.floor(gy / res).astype(int)
        h, w = occ.shape
        inb = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
        free = np.zeros((k, k), dtype=bool)
        free[inb] = occ[rows[inb], cols[inb]] == 1
        if not free.any():
            return np.full((k, k), 1.0 / (k * k))

        q = np.asarray(scan.ranges, dtype=np.float64).copy()
        q[~np.isfinite(q)] = scan.max_range
        qn = np.linalg.norm(q)
        dir_x, dir_y = beam_directions(g.heading_angle(query.theta),
                                       scan.beams, scan.fov)
        fx, fy = gx[free], gy[free]
        ox = np.repeat(fx / res, scan.beams)
        oy = np.repeat(fy / res, scan.beams)
        dx = np.tile(dir_x, fx.size)
        dy = np.tile(dir_y, fx.size)
        dist = _cast_rays(occ, ox, oy, dx, dy, scan.max_range / res)
        ranges = (dist * res).reshape(fx.size, scan.beams)
        fin = np.isfinite(ranges)
        ranges[fin] = np.maximum(ranges[fin], scan.min_range)
        ranges[~fin] = scan.max_range
        norms = np.linalg.norm(ranges, axis=1)
        scores = np.full((k, k), INVALID_SCORE)
        if qn > 0:
            scores[free] = (ranges @ q) / (norms * qn)

        z = beta * (scores - scores.max())
        e = np.exp(z)
        return e / e.sum()

    return provider


@dataclass
class ScanMatchingLikelihood:
    """Coarse likelihood provider backed by the precomputed scan matrix."""

    matrix: ScanMatrix
    beta: float = 50.0

    def __call__(self, grid_map: GridMap, scan: Scan) -> LikelihoodGrid:
        reduced = reduce_scan(scan, self.matrix.beams)
        return tempered_softmax(cosine_scores(self.matrix, reduced), self.beta)
