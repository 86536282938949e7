"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s to see them inline)."""

import hashlib

import numpy as np
import pytest

import gridloc as gl
from gridloc.bayes import ACTIONS, Action, BeliefGrid, MotionNoise, \
    measurement_update, transition, uniform_belief
from gridloc.bench import run_benchmark
from gridloc.cli import main as cli_main
from gridloc.dataset import generate_dataset
from gridloc.env import Episode, EpisodeConfig, NoiseProfile, \
    uniform_baseline_wasserstein, wasserstein
from gridloc.grids import CellPose, GridGeometry
from gridloc.lidar import build_scan_matrix
from gridloc.likelihood import HierarchyConfig, LikelihoodGrid, \
    ScanMatchingLikelihood, fine_scan_matching_provider, \
    refine_hierarchical, tempered_softmax
from gridloc.mapgen import TextureConfig, generate_maze, rasterize
from gridloc.policy import LookaheadConfig, aml_policy, constant_policy, \
    random_policy

from oracles import brute_force_aml_action, exhaustive_argmax, \
    wasserstein_double_loop

GEOM_11 = GridGeometry(n=11, m=11, theta=4, cell_px=7, resolution=0.04)


def report(name: str, ok: bool, detail: str):
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


def make_maze_map(n, seed, geometry=None):
    geometry = geometry or GridGeometry(n=n, m=n, theta=4, cell_px=7,
                                        resolution=0.04)
    maze = generate_maze(geometry.n, geometry.m, 0.25, seed=seed)
    return rasterize(maze, geometry, TextureConfig.clean(), seed=seed)


def run_episode(gm, profile, policy_name, episode_seed, action_seed,
                horizon=11, top_h=16, scan_matrix=None):
    ep = Episode(gm, EpisodeConfig(horizon=horizon, noise=profile),
                 scan_matrix=scan_matrix)
    obs = ep.reset(seed=episode_seed)
    if policy_name == "aml":
        policy = aml_policy(LookaheadConfig(
            scan_matrix=ep.scan_matrix, likelihood=ep.provider,
            grid_map=ep.filter_map, noise=profile.filter_noise, top_h=top_h))
    elif policy_name == "random":
        policy = random_policy()
    elif policy_name == "left":
        policy = constant_policy(Action.LEFT)
    else:
        raise ValueError(policy_name)
    rng = np.random.default_rng(action_seed)
    info = None
    for _ in range(horizon):
        probs = policy(ep.state.belief, obs.map_l, obs.scan_l)
        obs, _, done, info = ep.step(int(rng.choice(3, p=probs)))
    return info, ep


def test_scaling_trend_table():
    """SM evaluation time strictly increases over the four grid sizes and
    the 8x33x33 / 4x33x33 ratio lies in [1.5, 2.5]."""
    grids = [(4, 11, 11), (4, 33, 33), (8, 33, 33), (24, 33, 33)]
    table = run_benchmark(grids, reps=25, seed=0)
    times = [row["sm_mean_s"] for row in table]
    increasing = all(times[i] < times[i + 1] for i in range(3))
    ratio = times[2] / times[1]
    detail = ("sm_ms=" + ",".join(f"{t * 1000:.3f}" for t in times) +
              f" ratio={ratio:.3f}")
    report("scaling-trend", increasing and 1.5 <= ratio <= 2.5, detail)


def test_noiseless_convergence():
    """20 seeded episodes on 20 distinct 11x11 mazes, SM + lookahead, zero
    noise: mean hit rate at step 10 >= 0.9 and mean W at step 10 <= 0.5."""
    hits, ws = [], []
    for e in range(20):
        gm = make_maze_map(11, seed=[100, e], geometry=GEOM_11)
        matrix = build_scan_matrix(gm)
        info, _ = run_episode(gm, NoiseProfile.none(), "aml",
                              episode_seed=[200, e], action_seed=[250, e],
                              horizon=10, scan_matrix=matrix)
        hits.append(info["hit"])
        ws.append(info["wasserstein"])
    mean_hit, mean_w = float(np.mean(hits)), float(np.mean(ws))
    report("noiseless-convergence", mean_hit >= 0.9 and mean_w <= 0.5,
           f"hit@10={mean_hit:.3f} W@10={mean_w:.4f}")


def test_policy_ordering():
    """50 paired moderate-noise episodes: lookahead beats random, and
    random is no worse than the degenerate always-Left policy, on mean
    final-step Wasserstein."""
    profile = NoiseProfile.moderate()
    finals = {"aml": [], "random": [], "left": []}
    for e in range(50):
        gm = make_maze_map(11, seed=[300, e], geometry=GEOM_11)
        matrix = build_scan_matrix(gm)
        for name in finals:
            info, _ = run_episode(gm, profile, name, episode_seed=[400, e],
                                  action_seed=[500, e], scan_matrix=matrix)
            finals[name].append(info["wasserstein"])
    w_aml = float(np.mean(finals["aml"]))
    w_rand = float(np.mean(finals["random"]))
    w_left = float(np.mean(finals["left"]))
    report("policy-ordering", w_aml < w_rand <= w_left,
           f"W aml={w_aml:.3f} < random={w_rand:.3f} <= left={w_left:.3f}")


def test_oracle_equivalence_suite():
    """(a) exhaustive lookahead equals brute-force expected-entropy
    minimization on all free states of three 5x5 fixtures; (b) wasserstein
    equals the double loop on 100 random beliefs at 1e-9; (c) map_estimate
    equals exhaustive argmax on 100 random beliefs."""
    mismatches = 0
    states = 0
    for fixture_seed in (19, 29, 37):
        gm = make_maze_map(5, seed=fixture_seed)
        matrix = build_scan_matrix(gm)
        provider = ScanMatchingLikelihood(matrix, beta=50.0)
        cfg = LookaheadConfig(scan_matrix=matrix, likelihood=provider,
                              grid_map=gm, noise=MotionNoise(),
                              top_h=4 * 25)
        policy = aml_policy(cfg)
        for n, m in np.argwhere(matrix.valid):
            for t in range(4):
                scan = matrix.scan_at(t, int(n), int(m))
                belief = measurement_update(uniform_belief(gm),
                                            provider(gm, scan))
                chosen = int(np.argmax(policy(belief, None, None)))
                oracle = brute_force_aml_action(belief, gm, matrix, 50.0,
                                                MotionNoise())
                states += 1
                if chosen != oracle:
                    mismatches += 1
    ok_a = mismatches == 0

    rng = np.random.default_rng(77)
    max_err = 0.0
    argmax_ok = True
    for _ in range(100):
        vals = rng.random((4, 7, 6))
        bel = BeliefGrid(vals / vals.sum())
        true = CellPose(int(rng.integers(4)), int(rng.integers(7)),
                        int(rng.integers(6)))
        err = abs(wasserstein(bel, true) - wasserstein_double_loop(bel, true))
        max_err = max(max_err, err)
        if gl.map_estimate(bel).as_tuple() != exhaustive_argmax(bel.values):
            argmax_ok = False
    ok_b = max_err <= 1e-9

    report("oracle-equivalence",
           ok_a and ok_b and argmax_ok,
           f"aml {states - mismatches}/{states} states, "
           f"W max err={max_err:.2e}, argmax={'ok' if argmax_ok else 'bad'}")


def test_filter_invariant_suite():
    """Mass conservation over 1e4 fuzzed transition/update calls (1e-9),
    Left-Right identity, blocked-forward fixture, tempered-softmax argmax
    preservation, hierarchical refinement mass checks."""
    gm = make_maze_map(5, seed=4)
    rng = np.random.default_rng(0)
    bel = uniform_belief(gm)
    worst = 0.0
    for i in range(10_000):
        if i % 2 == 0:
            noise = MotionNoise(sigma_heading=float(rng.uniform(0, 0.6)),
                                sigma_row=float(rng.uniform(0, 1.0)),
                                sigma_col=float(rng.uniform(0, 1.0)),
                                slip_prob=float(rng.uniform(0, 0.3)))
            bel = transition(bel, Action(int(rng.integers(3))), noise, gm)
        else:
            vals = rng.random(bel.values.shape)
            bel = measurement_update(bel, LikelihoodGrid(vals / vals.sum()))
        worst = max(worst, abs(bel.values.sum() - 1.0))
        if rng.random() < 0.01:
            bel = uniform_belief(gm)
    mass_ok = worst <= 1e-9

    lr_ok = True
    for seed in range(20):
        vals = np.random.default_rng(seed).random((4, 5, 5))
        vals[:, ~gm.free_cells()] = 0
        b = BeliefGrid(vals / vals.sum())
        back = transition(transition(b, Action.LEFT, MotionNoise(), gm),
                          Action.RIGHT, MotionNoise(), gm)
        if not np.allclose(back.values, b.values, atol=1e-9):
            lr_ok = False

    maze = generate_maze(3, 3, 0.0, seed=5)
    g3 = GridGeometry(n=3, m=3, theta=4, cell_px=7, resolution=0.04)
    gm3 = rasterize(maze, g3, TextureConfig.clean(), seed=5)
    walled = np.argwhere(maze.v_walls)
    r, c = int(walled[0][0]), int(walled[0][1])
    vals = np.zeros((4, 3, 3))
    vals[0, r, c] = 1.0
    blocked = transition(BeliefGrid(vals), Action.FORWARD, MotionNoise(), gm3)
    blocked_ok = blocked.values[0, r, c] == pytest.approx(1.0, abs=1e-12)

    argmax_ok = True
    srng = np.random.default_rng(3)
    for beta in (0.1, 1.0, 10.0, 1000.0):
        for _ in range(25):
            scores = srng.uniform(-1, 1, size=(4, 5, 5))
            if tempered_softmax(scores, beta).values.argmax() != \
                    scores.argmax():
                argmax_ok = False

    cfg = HierarchyConfig(c=3, k=3, crop_px=21)
    provider = fine_scan_matching_provider(gm, cfg)
    x, y = gm.geometry.centroid_xy(2, 2)
    scan = gl.raycast(gm, gl.ContinuousPose(x, y, 0.0))
    coarse_vals = np.random.default_rng(9).random((4, 5, 5))
    coarse = LikelihoodGrid(coarse_vals / coarse_vals.sum())
    fine = refine_hierarchical(coarse, gm, scan, cfg, provider)
    refine_mass_ok = abs(fine.values.sum() - 1.0) <= 1e-9
    flat = coarse.values.reshape(-1)
    top = set(int(i) for i in np.argsort(-flat, kind="stable")[:cfg.c])
    block_ok = True
    for idx in range(flat.size):
        if idx in top:
            continue
        t, n, m = np.unravel_index(idx, coarse.values.shape)
        block = fine.values[t, n * 3:(n + 1) * 3, m * 3:(m + 1) * 3]
        if abs(block.sum() - coarse.values[t, n, m]) > 1e-9:
            block_ok = False

    ok = mass_ok and lr_ok and blocked_ok and argmax_ok and \
        refine_mass_ok and block_ok
    report("filter-invariants", ok,
           f"mass_err={worst:.2e} lr={lr_ok} blocked={blocked_ok} "
           f"softmax_argmax={argmax_ok} refine={refine_mass_ok and block_ok}")


def _tree_hash(root) -> str:
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest.update(path.relative_to(root).as_posix().encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def test_dataset_determinism(tmp_path):
    """Two identically seeded gen-dataset runs are byte-identical, and the
    exported likelihood argmax equals the spawn pose in >= 95% of 200
    noiseless samples."""
    args = ["gen-dataset", "--maps", "3", "--poses", "3",
            "--geometry", "11,11,4", "--seed", "12"]
    assert cli_main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli_main(args + ["--out", str(tmp_path / "b")]) == 0
    identical = _tree_hash(tmp_path / "a") == _tree_hash(tmp_path / "b")

    rows = generate_dataset(20, 10, NoiseProfile.none(), tmp_path / "gt",
                            seed=21, geometry=GEOM_11)
    assert len(rows) == 200
    matches = 0
    for row in rows:
        lik = np.fromfile(tmp_path / "gt" / row["lik_file"], dtype="<f4")
        lik = lik.reshape(GEOM_11.theta, GEOM_11.n, GEOM_11.m)
        if list(np.unravel_index(lik.argmax(), lik.shape)) == row["cell"]:
            matches += 1
    rate = matches / len(rows)
    report("dataset-determinism", identical and rate >= 0.95,
           f"byte-identical={identical} gt-argmax={rate:.3f}")


def test_domain_randomization_degradation():
    """Under the scan-rotation + map-flip + range-noise profile, episodes
    still beat the uniform-belief baseline W in >= 80% of 50 runs."""
    profile = NoiseProfile.transfer()
    beat = 0
    for e in range(50):
        gm = make_maze_map(11, seed=[300, e], geometry=GEOM_11)
        info, ep = run_episode(gm, profile, "aml", episode_seed=[400, e],
                               action_seed=[500, e])
        baseline = uniform_baseline_wasserstein(ep.filter_map,
                                                ep.state.true_cell)
        if info["wasserstein"] < baseline:
            beat += 1
    report("dr-degradation", beat >= 40, f"beat baseline in {beat}/50")
