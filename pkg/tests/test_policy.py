import numpy as np
import pytest

from gridloc.bayes import Action, BeliefGrid, MotionNoise, map_estimate, \
    measurement_update, uniform_belief
from gridloc.grids import GridGeometry
from gridloc.lidar import build_scan_matrix
from gridloc.likelihood import ScanMatchingLikelihood
from gridloc.mapgen import TextureConfig, generate_maze, rasterize
from gridloc.policy import ConfigurationError, LookaheadConfig, aml_policy, \
    constant_policy, greedy_follow_policy, random_policy

from conftest import make_map
from oracles import brute_force_aml_action, brute_force_expected_entropies

ZERO = MotionNoise()


def maze_stack(n=5, seed=7, beta=50.0):
    maze = generate_maze(n, n, 0.25, seed=seed)
    g = GridGeometry(n=n, m=n, theta=4, cell_px=7, resolution=0.04)
    gm = rasterize(maze, g, TextureConfig.clean(), seed=seed)
    matrix = build_scan_matrix(gm)
    provider = ScanMatchingLikelihood(matrix, beta=beta)
    return gm, matrix, provider


def one_hot(gm, t, n, m):
    g = gm.geometry
    vals = np.zeros((g.theta, g.n, g.m))
    vals[t, n, m] = 1.0
    return BeliefGrid(vals)


def corridor_fixture():
    """1 x 5 corridor with a widening on the north wall at cell 3: moving
    forward reveals the notch for one hypothesis only."""
    occ = np.zeros((7, 35), dtype=np.uint8)
    occ[2:5, 1:34] = 1          # 3 px corridor
    occ[1, 22:27] = 1           # the notch beside cell 3
    gm = make_map(occ, cell_px=7, theta=4, resolution=0.05)
    matrix = build_scan_matrix(gm, min_range=0.01)
    provider = ScanMatchingLikelihood(matrix, beta=50.0)
    return gm, matrix, provider


class TestRandomPolicy:
    def test_uniform_probabilities(self):
        gm, _, _ = maze_stack()
        policy = random_policy()
        probs = policy(uniform_belief(gm), gm.low_res(), gm.low_res() * 0)
        assert probs == pytest.approx([1 / 3] * 3)

    def test_sample_counts_binomial_bound(self):
        policy = random_policy()
        rng = np.random.default_rng(123)
        gm, _, _ = maze_stack()
        bel = uniform_belief(gm)
        counts = np.zeros(3, dtype=int)
        for _ in range(3000):
            counts[rng.choice(3, p=policy(bel, None, None))] += 1
        assert ((counts >= 900) & (counts <= 1100)).all()

    def test_seeded_sampling_reproducible(self):
        policy = random_policy()
        gm, _, _ = maze_stack()
        bel = uniform_belief(gm)
        draws = []
        for _ in range(2):
            rng = np.random.default_rng(7)
            draws.append([int(rng.choice(3, p=policy(bel, None, None)))
                          for _ in range(50)])
        assert draws[0] == draws[1]


class TestAmlPolicy:
    def test_one_hot_belief_returns_left_by_tie_rule(self):
        gm, matrix, provider = maze_stack()
        cfg = LookaheadConfig(scan_matrix=matrix, likelihood=provider,
                              grid_map=gm, noise=ZERO,
                              top_h=gm.geometry.n * gm.geometry.m * 4)
        policy = aml_policy(cfg)
        # noiseless one-hot: every action keeps entropy 0, ties -> Left
        probs = policy(one_hot(gm, 0, 2, 2), None, None)
        assert probs[int(Action.LEFT)] == 1.0

    def test_corridor_forward_reveals_junction(self):
        gm, matrix, provider = corridor_fixture()
        vals = np.zeros((4, 1, 5))
        vals[0, 0, 1] = 0.5
        vals[0, 0, 2] = 0.5
        belief = BeliefGrid(vals)
        oracle_h = brute_force_expected_entropies(belief, gm, matrix, 50.0,
                                                  ZERO)
        assert int(np.argmin(oracle_h)) == int(Action.FORWARD)
        cfg = LookaheadConfig(scan_matrix=matrix, likelihood=provider,
                              grid_map=gm, noise=ZERO, top_h=20)
        probs = aml_policy(cfg)(belief, None, None)
        assert probs[int(Action.FORWARD)] == 1.0

    def test_exhaustive_matches_brute_force_oracle(self):
        gm, matrix, provider = maze_stack(n=5, seed=19)
        n_poses = 4 * 25
        cfg = LookaheadConfig(scan_matrix=matrix, likelihood=provider,
                              grid_map=gm, noise=ZERO, top_h=n_poses)
        policy = aml_policy(cfg)
        free = np.argwhere(gm.free_cells())
        for cell in free[:6]:
            scan = matrix.scan_at(1, int(cell[0]), int(cell[1]))
            belief = measurement_update(uniform_belief(gm),
                                        provider(gm, scan))
            choice = int(np.argmax(policy(belief, None, None)))
            oracle = brute_force_aml_action(belief, gm, matrix, 50.0, ZERO)
            assert choice == oracle

    def test_deterministic(self):
        gm, matrix, provider = maze_stack()
        cfg = LookaheadConfig(scan_matrix=matrix, likelihood=provider,
                              grid_map=gm, noise=MotionNoise.default_smoothing())
        policy = aml_policy(cfg)
        scan = matrix.scan_at(0, 1, 1)
        belief = measurement_update(uniform_belief(gm), provider(gm, scan))
        a = policy(belief, None, None)
        b = policy(belief, None, None)
        assert np.array_equal(a, b)

    def test_missing_scan_matrix_rejected(self):
        gm, matrix, provider = maze_stack()
        with pytest.raises(ConfigurationError):
            LookaheadConfig(scan_matrix=None, likelihood=provider,
                            grid_map=gm)
        with pytest.raises(ConfigurationError):
            LookaheadConfig(scan_matrix=matrix, likelihood=provider,
                            grid_map=gm, top_h=0)


class TestGreedyPolicy:
    def test_facing_open_cell_goes_forward(self):
        occ = np.ones((15, 15), dtype=np.uint8)
        occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = 0
        gm = make_map(occ, cell_px=5)
        policy = greedy_follow_policy(gm)
        probs = policy(one_hot(gm, 0, 1, 1), None, None)
        assert probs[int(Action.FORWARD)] == 1.0

    def test_facing_wall_turns_left(self):
        occ = np.ones((15, 15), dtype=np.uint8)
        occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = 0
        gm = make_map(occ, cell_px=5)
        policy = greedy_follow_policy(gm)
        probs = policy(one_hot(gm, 0, 1, 2), None, None)  # east at last col
        assert probs[int(Action.LEFT)] == 1.0

    def test_uniform_belief_uses_argmax_tie_pose(self):
        gm, _, _ = maze_stack()
        bel = uniform_belief(gm)
        pose = map_estimate(bel)
        dn, dm = 0, 1  # pose.theta == 0 under the lexicographic tie rule
        assert pose.theta == 0
        expected = Action.FORWARD if \
            gm.passable_step(dn, dm)[pose.n, pose.m] else Action.LEFT
        probs = greedy_follow_policy(gm)(bel, None, None)
        assert probs[int(expected)] == 1.0


class TestConstantPolicy:
    def test_always_left(self):
        policy = constant_policy(Action.LEFT)
        assert policy(None, None, None)[0] == 1.0


class TestProviderDistributions:
    def test_fuzz_all_providers_return_distributions(self):
        gm, matrix, provider = maze_stack(n=5, seed=23)
        cfg = LookaheadConfig(scan_matrix=matrix, likelihood=provider,
                              grid_map=gm,
                              noise=MotionNoise.default_smoothing(), top_h=8)
        providers = [random_policy(), aml_policy(cfg),
                     greedy_follow_policy(gm), constant_policy(Action.RIGHT)]
        rng = np.random.default_rng(1)
        belief = uniform_belief(gm)
        from gridloc.bayes import Action as A, transition
        for step in range(60):
            for policy in providers:
                probs = policy(belief, None, None)
                assert probs.shape == (3,)
                assert (probs >= 0).all()
                assert probs.sum() == pytest.approx(1.0, abs=1e-9)
            belief = transition(belief, A(rng.integers(3)),
                                MotionNoise.default_smoothing(), gm)
            cell = np.argwhere(matrix.valid)[rng.integers(matrix.valid.sum())]
            scan = matrix.scan_at(int(rng.integers(4)), int(cell[0]),
                                  int(cell[1]))
            belief = measurement_update(belief, provider(gm, scan))
