"""Independent brute-force references used by the unit and acceptance
suites. These deliberately use naive full enumeration, not the engine's
optimized paths."""

import math

import numpy as np

from gridloc.bayes import ACTIONS, BeliefGrid, transition
from gridloc.likelihood import cosine_scores, tempered_softmax


def entropy_of(values: np.ndarray) -> float:
    p = values[values > 0]
    return float(-(p * np.log(p)).sum())


def brute_force_expected_entropies(belief: BeliefGrid, grid_map, matrix,
                                   beta: float, noise) -> list[float]:
    """Expected posterior entropy per action, enumerating every nonzero
    pose hypothesis exhaustively."""
    theta, n, m = belief.values.shape
    out = []
    for action in ACTIONS:
        prior = transition(belief, action, noise, grid_map)
        pv = prior.values
        total = 0.0
        acc = 0.0
        for t in range(theta):
            for i in range(n):
                for j in range(m):
                    w = pv[t, i, j]
                    if w <= 0.0 or not matrix.valid[i, j]:
                        continue
                    scan = matrix.scan_at(t, i, j)
                    lik = tempered_softmax(cosine_scores(matrix, scan), beta)
                    post = pv * lik.values
                    post = post / post.sum()
                    acc += w * entropy_of(post)
                    total += w
        out.append(acc / total if total > 0 else entropy_of(pv))
    return out


def brute_force_aml_action(belief, grid_map, matrix, beta, noise) -> int:
    hs = brute_force_expected_entropies(belief, grid_map, matrix, beta, noise)
    best = 0
    for i in range(1, 3):
        if hs[i] < hs[best]:
            best = i
    return best


def wasserstein_double_loop(belief: BeliefGrid, true_pose) -> float:
    """Literal sum over every pose of mass times Manhattan distance."""
    theta, n, m = belief.values.shape
    acc = 0.0
    for t in range(theta):
        dt = min(abs(t - true_pose.theta), theta - abs(t - true_pose.theta))
        for i in range(n):
            for j in range(m):
                d = dt + abs(i - true_pose.n) + abs(j - true_pose.m)
                acc += belief.values[t, i, j] * d
    return acc


def exhaustive_argmax(values: np.ndarray):
    best = None
    best_val = -math.inf
    theta, n, m = values.shape
    for t in range(theta):
        for i in range(n):
            for j in range(m):
                if values[t, i, j] > best_val:
                    best_val = values[t, i, j]
                    best = (t, i, j)
    return best
