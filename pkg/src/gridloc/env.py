"""Episode orchestration: continuous-pose simulation with closed-loop
drift correction, the reset/step protocol, reward functions, and the
localization metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from .bayes import Action, BeliefGrid, MotionNoise, bump_update, entropy, \
    map_estimate, measurement_update, transition, transition_hold, \
    uniform_belief
from .grids import TWO_PI, CellPose, ContinuousPose, GridMap, child_rng, \
    heading_unit_step, normalize_seed, pool_to_grid, wrap_angle
from .lidar import DEFAULT_BEAMS, DEFAULT_MAX_RANGE, DEFAULT_MIN_RANGE, \
    Scan, ScanMatrix, build_scan_matrix, cast_single, corrupt_scan, raycast, \
    scan_to_image
from .likelihood import FineQuery, HierarchyConfig, LikelihoodProvider, \
    ScanMatchingLikelihood, crop_centered, fine_scan_matching_provider
from .mapgen import MorphConfig, perturb_map


class EpisodeFinishedError(RuntimeError):
    pass


class ParameterError(ValueError):
    pass


class RewardKind(str, Enum):
    BEL_GT = "belgt"        # belief mass at the true pose
    INFO_GAIN = "infogain"  # entropy decrease
    BEL_NEW = "belnew"      # +1 for a new believed pose
    EXPL = "expl"           # +1 for a new true pose
    BEL_ENT = "belent"      # negative belief entropy
    HIT_RATE = "hitrate"    # +1 when the pose error is exactly zero
    DIST = "dist"           # negated Manhattan pose error


@dataclass(frozen=True)
class NoiseProfile:
    """One bundle of domain-randomization knobs for an episode."""

    name: str = "none"
    scan_sigma: float = 0.0
    scan_dropout: float = 0.0
    scan_rot_jitter: float = 0.0       # degrees
    pose_jitter_frac: float = 0.0      # of half a cell, per axis
    map_flip_count: int = 0
    map_morph: MorphConfig | None = None
    motion_scale_sigma: float = 0.0
    motion_heading_sigma: float = 0.0  # degrees
    filter_noise: MotionNoise = field(default_factory=MotionNoise)
    sm_beta: float = 50.0

    @staticmethod
    def none() -> "NoiseProfile":
        return NoiseProfile()

    @staticmethod
    def moderate() -> "NoiseProfile":
        return NoiseProfile(
            name="moderate", scan_sigma=0.02, scan_dropout=0.005,
            scan_rot_jitter=1.0, pose_jitter_frac=0.25,
            motion_scale_sigma=0.05, motion_heading_sigma=1.0,
            filter_noise=MotionNoise.default_smoothing(), sm_beta=40.0)

    @staticmethod
    def transfer() -> "NoiseProfile":
        """Sim-to-real transfer bundle: scan rotation of +-2 degrees, 100
        pixel flips on the filter's map copy, Gaussian range noise."""
        return NoiseProfile(
            name="transfer", scan_sigma=0.02, scan_rot_jitter=2.0,
            map_flip_count=100, motion_scale_sigma=0.05,
            motion_heading_sigma=1.0,
            filter_noise=MotionNoise.default_smoothing(), sm_beta=20.0)


NOISE_PROFILES = {
    "none": NoiseProfile.none,
    "moderate": NoiseProfile.moderate,
    "transfer": NoiseProfile.transfer,
}


@dataclass(frozen=True)
class EpisodeConfig:
    horizon: int = 11
    reward: RewardKind = RewardKind.BEL_GT
    noise: NoiseProfile = field(default_factory=NoiseProfile)
    hierarchy: HierarchyConfig | None = None
    drift_correction_period: int = 1   # 0 disables the fine correction
    beams: int = DEFAULT_BEAMS
    fov: float = TWO_PI
    min_range: float = DEFAULT_MIN_RANGE
    max_range: float = DEFAULT_MAX_RANGE
    likelihood_factory: Callable[[GridMap, ScanMatrix], LikelihoodProvider] \
        | None = None


@dataclass
class Observation:
    belief: np.ndarray   # (theta, n, m)
    map_l: np.ndarray    # (n, m) obstacle-presence map
    scan_l: np.ndarray   # (n, m) pooled scan image


@dataclass
class EpisodeState:
    true_pose: ContinuousPose
    true_cell: CellPose
    belief: BeliefGrid
    entropy: float
    step: int
    horizon: int
    visited_true: set
    visited_bel: set
    degenerate_steps: int = 0


def wasserstein(belief: BeliefGrid, true_pose: CellPose) -> float:
    """Expected Manhattan pose distance between the belief and a point mass
    at the true pose (headings measured circularly)."""
    theta, n, m = belief.values.shape
    dt = np.abs(np.arange(theta) - true_pose.theta)
    dt = np.minimum(dt, theta - dt)
    dn = np.abs(np.arange(n) - true_pose.n)
    dm = np.abs(np.arange(m) - true_pose.m)
    dist = dt[:, None, None] + dn[None, :, None] + dm[None, None, :]
    return float((belief.values * dist).sum())


def manhattan(a: CellPose, b: CellPose, theta: int) -> int:
    dt = abs(a.theta - b.theta)
    return min(dt, theta - dt) + abs(a.n - b.n) + abs(a.m - b.m)


def compute_reward(kind: RewardKind, state: EpisodeState,
                   prev: EpisodeState) -> float:
    theta = state.belief.values.shape[0]
    believed = map_estimate(state.belief)
    err = manhattan(believed, state.true_cell, theta)
    if kind == RewardKind.BEL_GT:
        return float(state.belief.values[state.true_cell.as_tuple()])
    if kind == RewardKind.INFO_GAIN:
        return prev.entropy - state.entropy
    if kind == RewardKind.BEL_NEW:
        return 1.0 if believed.as_tuple() not in prev.visited_bel else 0.0
    if kind == RewardKind.EXPL:
        return 1.0 if state.true_cell.as_tuple() not in prev.visited_true else 0.0
    if kind == RewardKind.BEL_ENT:
        return -state.entropy
    if kind == RewardKind.HIT_RATE:
        return 1.0 if err == 0 else 0.0
    if kind == RewardKind.DIST:
        return -float(err)
    raise ParameterError(f"unknown reward kind {kind!r}")


class Episode:
    """One seedable localization episode on a fixed map.

    The simulator ray casts on the unperturbed map; the filter sees a
    (possibly perturbed) copy, and its scan matrix is built against that
    copy. A prebuilt scan matrix is honored only when the noise profile
    leaves the map untouched.
    """

    def __init__(self, sim_map: GridMap, config: EpisodeConfig | None = None,
                 scan_matrix: ScanMatrix | None = None):
        self.sim_map = sim_map
        self.config = config or EpisodeConfig()
        if self.config.hierarchy is None:
            crop = 3 * sim_map.geometry.cell_px
            hierarchy = HierarchyConfig(c=5, k=3, crop_px=crop)
            self.config = replace(self.config, hierarchy=hierarchy)
        self._premade_matrix = scan_matrix
        self.filter_map: GridMap | None = None
        self.scan_matrix: ScanMatrix | None = None
        self.state: EpisodeState | None = None
        self._done = True

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed=None) -> Observation:
        self.episode_seed = normalize_seed(seed)
        cfg = self.config
        noise = cfg.noise
        self._rng_dataset = child_rng(self.episode_seed, 20)  # spawn draws
        self._rng_motion = child_rng(self.episode_seed, 21)
        self._rng_sensor = child_rng(self.episode_seed, 22)

        perturbed = noise.map_flip_count > 0 or noise.map_morph is not None
        if perturbed:
            self.filter_map = perturb_map(
                self.sim_map, noise.map_flip_count, noise.map_morph,
                seed=self.episode_seed + [23])
        else:
            self.filter_map = self.sim_map
        if self._premade_matrix is not None and not perturbed:
            self.scan_matrix = self._premade_matrix
        else:
            self.scan_matrix = build_scan_matrix(
                self.filter_map, beams=cfg.beams, fov=cfg.fov,
                min_range=cfg.min_range, max_range=cfg.max_range)
        if cfg.likelihood_factory is not None:
            self.provider = cfg.likelihood_factory(self.filter_map,
                                                   self.scan_matrix)
        else:
            self.provider = ScanMatchingLikelihood(self.scan_matrix,
                                                   beta=noise.sm_beta)
        self.fine_provider = fine_scan_matching_provider(
            self.filter_map, cfg.hierarchy, beta=noise.sm_beta)

        true_pose = self._spawn()
        belief = uniform_belief(self.filter_map)
        scan = self._sense(true_pose)
        belief = measurement_update(belief, self.provider(self.filter_map,
                                                          scan))
        true_cell = self.sim_map.snap(true_pose)
        self.state = EpisodeState(
            true_pose=true_pose, true_cell=true_cell, belief=belief,
            entropy=entropy(belief), step=0, horizon=cfg.horizon,
            visited_true={true_cell.as_tuple()},
            visited_bel={map_estimate(belief).as_tuple()},
            degenerate_steps=int(belief.degenerate))
        self.current_scan = scan
        self._done = False
        return self._observation(scan)

    def step(self, action) -> tuple[Observation, float, bool, dict]:
        if self._done or self.state is None:
            raise EpisodeFinishedError("episode is finished; call reset()")
        action = Action(action)
        cfg = self.config
        state = self.state
        g = self.filter_map.geometry

        believed = map_estimate(state.belief)
        goal_cell, goal_heading = self._next_pose(believed, action)
        est = self._estimate_continuous(believed)

        # reference displacement in the frame the robot will face after
        # turning: body-frame control, so execution follows the robot's own
        # (unknown) heading rather than the believed one
        gx, gy = g.centroid_xy(goal_cell.n, goal_cell.m)
        d_heading = wrap_angle(goal_heading - est.heading)
        dx, dy = gx - est.x, gy - est.y
        cos_g, sin_g = math.cos(goal_heading), math.sin(goal_heading)
        body_disp = np.array([cos_g * dx + sin_g * dy,
                              -sin_g * dx + cos_g * dy])
        true_pose, bumped = self._advance_true(state.true_pose, body_disp,
                                               d_heading)

        if bumped:
            # wheel odometry reports no displacement: diffuse, don't shift,
            # and treat the bump itself as a measurement
            prior = transition_hold(state.belief, cfg.noise.filter_noise,
                                    self.filter_map)
            if action == Action.FORWARD:
                prior = bump_update(prior, self.filter_map)
        else:
            prior = transition(state.belief, action, cfg.noise.filter_noise,
                               self.filter_map)
        scan = self._sense(true_pose)
        belief = measurement_update(prior, self.provider(self.filter_map,
                                                         scan))
        true_cell = self.sim_map.snap(true_pose)
        new_state = EpisodeState(
            true_pose=true_pose, true_cell=true_cell, belief=belief,
            entropy=entropy(belief), step=state.step + 1,
            horizon=state.horizon,
            visited_true=state.visited_true, visited_bel=state.visited_bel,
            degenerate_steps=state.degenerate_steps + int(belief.degenerate))
        reward = compute_reward(cfg.reward, new_state, state)
        new_state.visited_true = state.visited_true | {true_cell.as_tuple()}
        new_state.visited_bel = \
            state.visited_bel | {map_estimate(belief).as_tuple()}

        self.state = new_state
        self.current_scan = scan
        self._done = new_state.step >= cfg.horizon
        info = self.metrics()
        return self._observation(scan), reward, self._done, info

    # -- internals ---------------------------------------------------------

    def metrics(self) -> dict:
        state = self.state
        g = self.filter_map.geometry
        believed = map_estimate(state.belief)
        err = manhattan(believed, state.true_cell, g.theta)
        return {
            "step": state.step,
            "wasserstein": wasserstein(state.belief, state.true_cell),
            "bel_gt": float(state.belief.values[state.true_cell.as_tuple()]),
            "hit": 1 if err == 0 else 0,
            "manhattan": err,
            "entropy": state.entropy,
            "degenerate": bool(state.belief.degenerate),
        }

    def _spawn(self) -> ContinuousPose:
        g = self.sim_map.geometry
        free = np.argwhere(self.sim_map.free_cells())
        if free.size == 0:
            raise ParameterError("map has no free cells to spawn in")
        noise = self.config.noise
        pick = free[int(self._rng_dataset.integers(free.shape[0]))]
        t = int(self._rng_dataset.integers(g.theta))
        cx, cy = g.centroid_xy(int(pick[0]), int(pick[1]))
        half = g.cell_size / 2.0
        if noise.pose_jitter_frac > 0:
            for _ in range(8):
                dx = float(self._rng_dataset.uniform(-1, 1)) * \
                    noise.pose_jitter_frac * half
                dy = float(self._rng_dataset.uniform(-1, 1)) * \
                    noise.pose_jitter_frac * half
                if self.sim_map.is_free_xy(cx + dx, cy + dy):
                    return ContinuousPose(cx + dx, cy + dy,
                                          g.heading_angle(t))
        return ContinuousPose(cx, cy, g.heading_angle(t))

    def _sense(self, pose: ContinuousPose) -> Scan:
        cfg = self.config
        scan = raycast(self.sim_map, pose, beams=cfg.beams, fov=cfg.fov,
                       min_range=cfg.min_range, max_range=cfg.max_range)
        noise = cfg.noise
        corrupt_seed = int(self._rng_sensor.integers(2 ** 63))
        return corrupt_scan(scan, sigma=noise.scan_sigma,
                            dropout_prob=noise.scan_dropout,
                            rot_jitter=noise.scan_rot_jitter,
                            seed=corrupt_seed)

    def _next_pose(self, believed: CellPose, action: Action):
        g = self.filter_map.geometry
        if action == Action.LEFT:
            t = (believed.theta + 1) % g.theta
            return CellPose(t, believed.n, believed.m), g.heading_angle(t)
        if action == Action.RIGHT:
            t = (believed.theta - 1) % g.theta
            return CellPose(t, believed.n, believed.m), g.heading_angle(t)
        dn, dm = heading_unit_step(believed.theta, g.theta)
        return (CellPose(believed.theta, believed.n + dn, believed.m + dm),
                g.heading_angle(believed.theta))

    def _estimate_continuous(self, believed: CellPose) -> ContinuousPose:
        """Believed centroid refined by the fine model's within-cell offset
        (the closed-loop drift correction)."""
        g = self.filter_map.geometry
        cx, cy = g.centroid_xy(believed.n, believed.m)
        period = self.config.drift_correction_period
        if period > 0 and self.state.step % period == 0:
            offset = self._fine_offset(believed)
            cx, cy = cx + offset[0], cy + offset[1]
        return ContinuousPose(cx, cy, g.heading_angle(believed.theta))

    def _fine_offset(self, believed: CellPose) -> tuple[float, float]:
        g = self.filter_map.geometry
        cfg = self.config.hierarchy
        center = g.centroid_px(believed.n, believed.m)
        map_crop = crop_centered(self.filter_map.occupancy, center,
                                 cfg.crop_px)
        query = FineQuery(cell=(believed.n, believed.m),
                          theta=believed.theta, map_crop=map_crop,
                          scan_crop=np.zeros_like(map_crop),
                          scan=self.current_scan)
        block = self.fine_provider(query)
        a, b = np.unravel_index(int(np.argmax(block)), block.shape)
        sub = g.cell_size / cfg.k
        dx = (b + 0.5) * sub - g.cell_size / 2.0
        dy = (a + 0.5) * sub - g.cell_size / 2.0
        return (dx, dy)

    def _advance_true(self, pose: ContinuousPose, body_disp: np.ndarray,
                      d_heading: float) -> tuple[ContinuousPose, bool]:
        """Rotate, then translate the body-frame displacement along the
        robot's actual heading. The translation is refused outright when it
        would make obstacle contact (bump-and-stay), which the caller learns
        from the returned flag."""
        noise = self.config.noise
        jitter = float(self._rng_motion.normal(
            0.0, math.radians(noise.motion_heading_sigma)))
        eps = float(self._rng_motion.normal(0.0, noise.motion_scale_sigma))
        heading = (pose.heading + d_heading + jitter) % TWO_PI
        scaled = body_disp * (1.0 + eps)
        d_cmd = float(np.hypot(scaled[0], scaled[1]))
        if d_cmd == 0.0:
            return ContinuousPose(pose.x, pose.y, heading), False
        cos_h, sin_h = math.cos(heading), math.sin(heading)
        wx = cos_h * scaled[0] - sin_h * scaled[1]
        wy = sin_h * scaled[0] + cos_h * scaled[1]
        ang = math.atan2(wy, wx)
        res = self.sim_map.resolution
        d_hit = cast_single(self.sim_map, pose.x, pose.y, ang,
                            max_range=d_cmd + 2 * res)
        if d_hit - 0.5 * res < d_cmd:
            return ContinuousPose(pose.x, pose.y, heading), True
        return ContinuousPose(pose.x + wx, pose.y + wy, heading), False

    def _observation(self, scan: Scan) -> Observation:
        g = self.filter_map.geometry
        img = scan_to_image(scan, g).raster
        return Observation(belief=self.state.belief.values.copy(),
                           map_l=self.filter_map.low_res(),
                           scan_l=pool_to_grid(img, g))


def uniform_baseline_wasserstein(grid_map: GridMap,
                                 true_pose: CellPose) -> float:
    """Expected W of the uninformed uniform belief; the bar an episode must
    beat to have localized at all."""
    return wasserstein(uniform_belief(grid_map), true_pose)
