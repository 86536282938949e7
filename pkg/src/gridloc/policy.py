"""Action selection: the provider interface learned policies fill, plus
classical baselines (uniform random, one-step entropy lookahead, greedy
follower, constant action)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bayes import ACTIONS, Action, BeliefGrid, MotionNoise, entropy, \
    map_estimate, measurement_update, transition
from .grids import GridMap, heading_unit_step
from .lidar import ScanMatrix
from .likelihood import LikelihoodProvider

# (belief, low-res map, low-res scan image) -> probabilities over ACTIONS
PolicyProvider = Callable[[BeliefGrid, np.ndarray, np.ndarray], np.ndarray]


class ConfigurationError(ValueError):
    pass


def random_policy() -> PolicyProvider:
    """Uniform distribution over the three actions."""
    probs = np.full(3, 1.0 / 3.0)

    def provider(belief, map_l, scan_l):
        return probs.copy()

    return provider


def constant_policy(action: Action) -> PolicyProvider:
    """Degenerate baseline: probability one on a fixed action."""
    probs = np.zeros(3)
    probs[int(action)] = 1.0

    def provider(belief, map_l, scan_l):
        return probs.copy()

    return provider


@dataclass
class LookaheadConfig:
    """One-step lookahead budget: hypotheses evaluated per action, and the
    models used to simulate the outcome of each."""

    scan_matrix: ScanMatrix
    likelihood: LikelihoodProvider
    grid_map: GridMap
    noise: MotionNoise = MotionNoise()
    top_h: int = 16

    def __post_init__(self):
        if self.scan_matrix is None:
            raise ConfigurationError("lookahead requires a scan matrix")
        if self.top_h < 1:
            raise ConfigurationError("top_h must be >= 1")


def expected_posterior_entropy(belief: BeliefGrid, action: Action,
                               cfg: LookaheadConfig) -> float:
    """Expected entropy after taking an action: transition the belief, then
    for the top-h most probable poses simulate the scan the robot would see
    there, update, and weight the posterior entropies by the (renormalized)
    prior mass of the evaluated hypotheses."""
    prior = transition(belief, action, cfg.noise, cfg.grid_map)
    flat = prior.values.reshape(-1)
    order = np.argsort(-flat, kind="stable")
    hyps = []
    for idx in order[:cfg.top_h]:
        if flat[idx] <= 0.0:
            break
        t, n, m = np.unravel_index(int(idx), prior.values.shape)
        if cfg.scan_matrix.valid[n, m]:
            hyps.append((float(flat[idx]), int(t), int(n), int(m)))
    if not hyps:
        return entropy(prior)
    total_w = sum(w for w, *_ in hyps)
    expected = 0.0
    for w, t, n, m in hyps:
        scan = cfg.scan_matrix.scan_at(t, n, m)
        lik = cfg.likelihood(cfg.grid_map, scan)
        post = measurement_update(prior, lik)
        expected += (w / total_w) * entropy(post)
    return expected


def aml_policy(cfg: LookaheadConfig) -> PolicyProvider:
    """Entropy-lookahead baseline: pick the action whose simulated
    posterior has the lowest expected entropy (i.e. the largest expected
    entropy decrease). Ties resolve in Left < Right < Forward order."""

    def provider(belief, map_l, scan_l):
        best_action = None
        best_h = np.inf
        for action in ACTIONS:
            h = expected_posterior_entropy(belief, action, cfg)
            if h < best_h:
                best_h = h
                best_action = action
        probs = np.zeros(3)
        probs[int(best_action)] = 1.0
        return probs

    return provider


def greedy_follow_policy(grid_map: GridMap) -> PolicyProvider:
    """Debugging baseline: go forward from the believed pose unless the
    move ahead is blocked, else turn left."""
    g = grid_map.geometry

    def provider(belief, map_l, scan_l):
        pose = map_estimate(belief)
        dn, dm = heading_unit_step(pose.theta, g.theta)
        passable = grid_map.passable_step(dn, dm)[pose.n, pose.m]
        probs = np.zeros(3)
        probs[int(Action.FORWARD if passable else Action.LEFT)] = 1.0
        return probs

    return provider
