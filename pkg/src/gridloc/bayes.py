"""Discrete Bayes filter over (heading, row, col) grids: action-conditioned
transition with motion-noise smoothing, multiplicative measurement update,
and point estimates."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy import ndimage

from .grids import CellPose, GridMap, MapError, heading_unit_step
from .likelihood import LikelihoodGrid

_BELF_HEADER = struct.Struct("<4sIIII")
_BELF_MAGIC = b"BELF"


class ParameterError(ValueError):
    pass


class Action(IntEnum):
    LEFT = 0
    RIGHT = 1
    FORWARD = 2


ACTIONS = (Action.LEFT, Action.RIGHT, Action.FORWARD)


@dataclass(frozen=True)
class MotionNoise:
    """Gaussian smoothing widths (cell units) applied after the shift, plus
    the probability that a forward command slips and moves nothing."""

    sigma_heading: float = 0.0
    sigma_row: float = 0.0
    sigma_col: float = 0.0
    slip_prob: float = 0.0

    def __post_init__(self):
        if min(self.sigma_heading, self.sigma_row, self.sigma_col) < 0:
            raise ParameterError("smoothing sigmas must be >= 0")
        if not 0.0 <= self.slip_prob <= 1.0:
            raise ParameterError("slip_prob must be in [0, 1]")

    @staticmethod
    def default_smoothing() -> "MotionNoise":
        return MotionNoise(sigma_heading=0.25, sigma_row=0.5, sigma_col=0.5)


@dataclass
class BeliefGrid:
    """Filter state: nonnegative (theta, n, m) tensor summing to one, with
    zero mass on obstacle cells."""

    values: np.ndarray
    level: int = 0
    degenerate: bool = False

    @property
    def shape(self):
        return self.values.shape


def uniform_belief(grid_map: GridMap) -> BeliefGrid:
    """Equal mass on every (heading, free cell)."""
    free = grid_map.free_cells()
    count = int(free.sum())
    if count == 0:
        raise MapError("map has no free cells")
    g = grid_map.geometry
    values = np.where(free, 1.0 / (g.theta * count), 0.0)
    return BeliefGrid(np.broadcast_to(values, (g.theta, g.n, g.m)).copy())


def _shift_forward(values: np.ndarray, grid_map: GridMap) -> np.ndarray:
    """Per-heading one-cell shift along that heading's unit direction; mass
    that would cross the border, enter an obstacle cell, or pass through a
    wall stays put (a real robot bumps and stops)."""
    theta, n, m = values.shape
    out = np.zeros_like(values)
    nn, mm = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    for t in range(theta):
        dn, dm = heading_unit_step(t, theta)
        ok = grid_map.passable_step(dn, dm)
        plane = values[t]
        np.add.at(out[t], (nn[ok] + dn, mm[ok] + dm), plane[ok])
        out[t][~ok] += plane[~ok]
    return out


def transition(belief: BeliefGrid, action: Action, noise: MotionNoise,
               grid_map: GridMap) -> BeliefGrid:
    """Prior belief after an action: turns rotate the heading axis, forward
    shifts each heading plane one cell (blocked mass stays in place), then
    Gaussian smoothing models motion noise (circular along heading,
    truncated at map edges), obstacle cells are re-zeroed, and the result
    is renormalized."""
    free = grid_map.free_cells()
    vals = belief.values
    if action == Action.LEFT:
        vals = np.roll(vals, 1, axis=0)
    elif action == Action.RIGHT:
        vals = np.roll(vals, -1, axis=0)
    elif action == Action.FORWARD:
        moved = _shift_forward(vals, grid_map)
        if noise.slip_prob > 0:
            vals = (1.0 - noise.slip_prob) * moved + noise.slip_prob * vals
        else:
            vals = moved
    else:
        raise ParameterError(f"unknown action {action!r}")

    sigmas = (noise.sigma_heading, noise.sigma_row, noise.sigma_col)
    if any(s > 0 for s in sigmas):
        vals = ndimage.gaussian_filter(
            vals, sigma=sigmas, mode=("wrap", "constant", "constant"), cval=0.0)
    else:
        vals = vals.copy()

    vals[:, ~free] = 0.0
    total = vals.sum()
    if total <= 0.0:
        return BeliefGrid(belief.values.copy(), level=belief.level,
                          degenerate=True)
    return BeliefGrid(vals / total, level=belief.level)


def transition_hold(belief: BeliefGrid, noise: MotionNoise,
                    grid_map: GridMap) -> BeliefGrid:
    """Prior for a commanded move that measurably did not happen (the
    robot bumped): no shift, only motion-noise smoothing."""
    free = grid_map.free_cells()
    sigmas = (noise.sigma_heading, noise.sigma_row, noise.sigma_col)
    if any(s > 0 for s in sigmas):
        vals = ndimage.gaussian_filter(
            belief.values, sigma=sigmas,
            mode=("wrap", "constant", "constant"), cval=0.0)
    else:
        vals = belief.values.copy()
    vals[:, ~free] = 0.0
    total = vals.sum()
    if total <= 0.0:
        return BeliefGrid(belief.values.copy(), level=belief.level,
                          degenerate=True)
    return BeliefGrid(vals / total, level=belief.level)


def bump_update(belief: BeliefGrid, grid_map: GridMap,
                miss_prob: float = 0.1) -> BeliefGrid:
    """Condition on a sensed forward bump: poses whose forward step was
    open explain the bump only with miss_prob, so they lose mass."""
    theta = belief.values.shape[0]
    vals = belief.values.copy()
    for t in range(theta):
        dn, dm = heading_unit_step(t, theta)
        open_ahead = grid_map.passable_step(dn, dm)
        vals[t][open_ahead] *= miss_prob
    total = vals.sum()
    if total <= 0.0:
        return BeliefGrid(belief.values.copy(), level=belief.level,
                          degenerate=True)
    return BeliefGrid(vals / total, level=belief.level)


def measurement_update(prior: BeliefGrid,
                       likelihood: LikelihoodGrid) -> BeliefGrid:
    """Elementwise product with the measurement likelihood, renormalized.
    An identically zero product keeps the prior and sets the degeneracy
    flag so callers can choose a recovery."""
    if prior.values.shape != likelihood.values.shape:
        raise ParameterError(
            f"belief {prior.values.shape} and likelihood "
            f"{likelihood.values.shape} shapes differ")
    post = prior.values * likelihood.values
    total = post.sum()
    if total <= 0.0:
        return BeliefGrid(prior.values.copy(), level=prior.level,
                          degenerate=True)
    return BeliefGrid(post / total, level=prior.level)


def map_estimate(belief: BeliefGrid) -> CellPose:
    """Pose of maximum mass; argmax over the C-ordered tensor, so ties
    break lexicographically by (theta, n, m)."""
    t, n, m = np.unravel_index(int(np.argmax(belief.values)),
                               belief.values.shape)
    return CellPose(int(t), int(n), int(m))


def entropy(belief: BeliefGrid) -> float:
    """Shannon entropy in nats, with 0 ln 0 := 0."""
    p = belief.values[belief.values > 0.0]
    return float(-(p * np.log(p)).sum())


def belief_to_bytes(belief: BeliefGrid) -> bytes:
    t, n, m = belief.values.shape
    header = _BELF_HEADER.pack(_BELF_MAGIC, 1, t, n, m)
    return header + np.ascontiguousarray(belief.values, dtype="<f4").tobytes()


def belief_from_bytes(blob: bytes) -> BeliefGrid:
    magic, version, t, n, m = _BELF_HEADER.unpack_from(blob)
    if magic != _BELF_MAGIC or version != 1:
        raise ParameterError("not a belief snapshot")
    values = np.frombuffer(blob, dtype="<f4",
                           offset=_BELF_HEADER.size).astype(np.float64)
    return BeliefGrid(values.reshape(t, n, m))
