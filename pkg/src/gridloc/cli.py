"""Command-line front end: map/dataset generation, episode runs with
summary tables, timing benchmarks, and the wire-protocol server.

Option precedence is flags > config file > defaults; the config file uses
the same JSON schema as the map sidecars plus per-command keys.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .bayes import Action, MotionNoise
from .bench import run_benchmark
from .dataset import generate_dataset
from .env import Episode, EpisodeConfig, NOISE_PROFILES, RewardKind
from .grids import GridGeometry, child_rng
from .lidar import build_scan_matrix, load_scan_matrix, \
    save_scan_matrix
from .mapgen import TextureConfig, generate_maze, rasterize
from .mapio import read_map, write_map
from .policy import LookaheadConfig, aml_policy, constant_policy, \
    greedy_follow_policy, random_policy
from .trace import write_trace
from .wire import EngineServer, ExternalLikelihoodClient, \
    ExternalPolicyClient, MapSource

DEFAULTS = {
    "geometry": "11,11,4",
    "cell_px": 7,
    "resolution": 0.04,
    "prune_prob": 0.25,
    "texture": "clean",
    "policy": "aml",
    "likelihood": "sm",
    "reward": "belgt",
    "episodes": 10,
    "horizon": 11,
    "seed": 0,
    "noise_profile": "none",
    "count": 10,
    "maps": 10,
    "poses": 10,
    "reps": 10,
    "grids": "4x11x11,4x33x33,8x33x33,24x33x33",
    "serve_addr": "127.0.0.1:7860",
    "top_h": 16,
}

TEXTURES = {
    "clean": TextureConfig.clean,
    "default": TextureConfig,
}


def _merge(args: argparse.Namespace, key: str):
    val = getattr(args, key, None)
    if val is not None:
        return val
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as f:
            cfg = json.load(f)
        if key in cfg:
            return cfg[key]
    return DEFAULTS[key]


def _parse_geometry(spec: str, cell_px: int, resolution: float) -> GridGeometry:
    parts = [int(p) for p in str(spec).replace("x", ",").split(",")]
    if len(parts) != 3:
        raise SystemExit(f"--geometry wants N,M,THETA, got {spec!r}")
    n, m, theta = parts
    return GridGeometry(n=n, m=m, theta=theta, cell_px=cell_px,
                        resolution=resolution)


def _parse_grids(spec: str):
    grids = []
    for token in str(spec).split(","):
        t, n, m = (int(p) for p in token.strip().split("x"))
        grids.append((t, n, m))
    return grids


def _make_policy(name: str, grid_map, matrix, provider, noise, top_h):
    if name == "random":
        return random_policy()
    if name == "aml":
        cfg = LookaheadConfig(scan_matrix=matrix, likelihood=provider,
                              grid_map=grid_map, noise=noise, top_h=top_h)
        return aml_policy(cfg)
    if name == "greedy":
        return greedy_follow_policy(grid_map)
    if name == "left":
        return constant_policy(Action.LEFT)
    if name.startswith("external:"):
        return ExternalPolicyClient(name.split(":", 1)[1])
    raise SystemExit(f"unknown policy {name!r}")


def cmd_gen_maps(args) -> int:
    count = int(_merge(args, "count"))
    cell_px = int(_merge(args, "cell_px"))
    resolution = float(_merge(args, "resolution"))
    geometry = _parse_geometry(_merge(args, "geometry"), cell_px, resolution)
    prune = float(_merge(args, "prune_prob"))
    texture = TEXTURES[str(_merge(args, "texture"))]()
    seed = int(_merge(args, "seed"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i in range(count):
        maze = generate_maze(geometry.n, geometry.m, prune, seed=[seed, 50, i])
        grid_map = rasterize(maze, geometry, texture, seed=[seed, 51, i])
        path = write_map(grid_map, out / f"map-{i:05d}.pgm", seed=seed)
        row = {"id": i, "pgm": path.name, "seed": seed}
        if args.with_matrices:
            matrix = build_scan_matrix(grid_map)
            save_scan_matrix(matrix, path.with_suffix(".scmx"))
            row["scan_matrix"] = path.with_suffix(".scmx").name
        manifest.append(row)
    with open(out / "maps_manifest.jsonl", "w", encoding="utf-8") as f:
        for row in manifest:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"wrote {count} maps to {out}")
    return 0


def cmd_gen_dataset(args) -> int:
    cell_px = int(_merge(args, "cell_px"))
    resolution = float(_merge(args, "resolution"))
    geometry = _parse_geometry(_merge(args, "geometry"), cell_px, resolution)
    profile = NOISE_PROFILES[str(_merge(args, "noise_profile"))]()
    texture = TEXTURES[str(_merge(args, "texture"))]()
    try:
        rows = generate_dataset(
            n_maps=int(_merge(args, "maps")),
            poses_per_map=int(_merge(args, "poses")), dr=profile,
            out=args.out, seed=int(_merge(args, "seed")), geometry=geometry,
            texture=texture, prune_prob=float(_merge(args, "prune_prob")))
    except OSError as exc:
        print(f"dataset generation failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(rows)} samples to {args.out}")
    return 0


def _run_one_episode(episode: Episode, policy, seed, rng):
    obs = episode.reset(seed=seed)
    records = [dict(episode.metrics(), action=-1, reward=0.0)]
    beliefs = [episode.state.belief]
    done = False
    while not done:
        probs = policy(episode.state.belief, obs.map_l, obs.scan_l)
        action = int(rng.choice(3, p=probs))
        obs, reward, done, info = episode.step(action)
        records.append(dict(info, action=action, reward=float(reward)))
        beliefs.append(episode.state.belief)
    return records, beliefs


def cmd_run(args) -> int:
    cell_px = int(_merge(args, "cell_px"))
    resolution = float(_merge(args, "resolution"))
    geometry = _parse_geometry(_merge(args, "geometry"), cell_px, resolution)
    episodes = int(_merge(args, "episodes"))
    horizon = int(_merge(args, "horizon"))
    seed = int(_merge(args, "seed"))
    prune = float(_merge(args, "prune_prob"))
    texture = TEXTURES[str(_merge(args, "texture"))]()
    profile = NOISE_PROFILES[str(_merge(args, "noise_profile"))]()
    reward = RewardKind(str(_merge(args, "reward")))
    policy_name = str(_merge(args, "policy"))
    lik_name = str(_merge(args, "likelihood"))
    top_h = int(_merge(args, "top_h"))
    out = Path(args.out) if args.out else None

    factory = None
    if lik_name.startswith("external:"):
        client = ExternalLikelihoodClient(lik_name.split(":", 1)[1])
        factory = lambda grid_map, matrix: client  # noqa: E731
    config = EpisodeConfig(horizon=horizon, reward=reward, noise=profile,
                           likelihood_factory=factory)
    action_rng = child_rng(seed, 60)

    all_records = []
    for e in range(episodes):
        cached_matrix = None
        if args.map:
            grid_map, _ = read_map(args.map)
            cache = Path(args.map).with_suffix(".scmx")
            if cache.exists():
                cached_matrix = load_scan_matrix(cache)
        else:
            maze = generate_maze(geometry.n, geometry.m, prune,
                                 seed=[seed, 61, e])
            grid_map = rasterize(maze, geometry, texture, seed=[seed, 62, e])
        matrix = None
        if profile.map_flip_count == 0 and profile.map_morph is None:
            matrix = cached_matrix or build_scan_matrix(grid_map)
        episode = Episode(grid_map, config, scan_matrix=matrix)
        episode.reset(seed=[seed, 63, e])
        provider = episode.provider
        policy = _make_policy(policy_name, episode.filter_map,
                              episode.scan_matrix, provider,
                              profile.filter_noise, top_h)
        records, beliefs = _run_one_episode(episode, policy, [seed, 63, e],
                                            action_rng)
        all_records.append(records)
        if out:
            meta = {"episode": e, "seed": seed, "policy": policy_name,
                    "reward": reward.value, "horizon": horizon,
                    "noise_profile": profile.name}
            write_trace(out / "traces" / f"ep-{e:04d}.trace", meta, records,
                        beliefs)

    table = _summarize(all_records, horizon)
    text = _format_csv(table)
    print(text, end="")
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.csv").write_text(text, encoding="utf-8")
    return 0


def _summarize(all_records, horizon: int):
    """Mean and std per step (1..horizon) across episodes for the three
    localization metrics."""
    rows = []
    for step in range(1, horizon + 1):
        picks = [rec[step] for rec in all_records if len(rec) > step]
        if not picks:
            break
        row = {"step": step}
        for key in ("wasserstein", "bel_gt", "hit"):
            vals = np.array([p[key] for p in picks], dtype=np.float64)
            row[f"{key}_mean"] = float(vals.mean())
            row[f"{key}_std"] = float(vals.std())
        rows.append(row)
    return rows


def _format_csv(rows) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()),
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v)
                         for k, v in row.items()})
    return buf.getvalue()


def cmd_bench(args) -> int:
    grids = _parse_grids(_merge(args, "grids"))
    results = run_benchmark(
        grids, reps=int(_merge(args, "reps")),
        seed=int(_merge(args, "seed")),
        cell_px=int(_merge(args, "cell_px")),
        resolution=float(_merge(args, "resolution")),
        top_h=int(_merge(args, "top_h")))
    text = json.dumps(results, indent=2)
    print(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_serve(args) -> int:
    cell_px = int(_merge(args, "cell_px"))
    resolution = float(_merge(args, "resolution"))
    geometry = _parse_geometry(_merge(args, "geometry"), cell_px, resolution)
    profile = NOISE_PROFILES[str(_merge(args, "noise_profile"))]()
    config = EpisodeConfig(horizon=int(_merge(args, "horizon")),
                           reward=RewardKind(str(_merge(args, "reward"))),
                           noise=profile)
    source = MapSource(geometry=geometry, maps_dir=args.maps_dir,
                       map_file=args.map,
                       texture=TEXTURES[str(_merge(args, "texture"))](),
                       prune_prob=float(_merge(args, "prune_prob")),
                       seed=int(_merge(args, "seed")))
    server = EngineServer(source, config)
    addr = str(_merge(args, "serve_addr"))
    if addr == "stdio":
        server.serve_stdio()
        return 0
    host, _, port = addr.rpartition(":")
    print(f"serving on {host}:{port}", flush=True)
    server.serve_tcp(host or "127.0.0.1", int(port),
                     max_connections=args.max_connections)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridloc",
        description="2-D active localization engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--geometry", help="N,M,THETA")
        p.add_argument("--cell-px", dest="cell_px", type=int)
        p.add_argument("--resolution", type=float)
        p.add_argument("--prune-prob", dest="prune_prob", type=float)
        p.add_argument("--texture", choices=sorted(TEXTURES))

    p = sub.add_parser("gen-maps", help="generate PGM maps")
    common(p)
    p.add_argument("--count", type=int)
    p.add_argument("--with-matrices", dest="with_matrices",
                   action="store_true",
                   help="also precompute .scmx scan-matrix caches")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_maps)

    p = sub.add_parser("gen-dataset", help="export (map, scan, likelihood) triplets")
    common(p)
    p.add_argument("--maps", type=int)
    p.add_argument("--poses", type=int)
    p.add_argument("--noise-profile", dest="noise_profile",
                   choices=sorted(NOISE_PROFILES))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("run", help="run episodes, write traces and a summary")
    common(p)
    p.add_argument("--map", help="PGM map file (otherwise maps are generated)")
    p.add_argument("--policy")
    p.add_argument("--likelihood")
    p.add_argument("--reward", choices=[k.value for k in RewardKind])
    p.add_argument("--episodes", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--noise-profile", dest="noise_profile",
                   choices=sorted(NOISE_PROFILES))
    p.add_argument("--top-h", dest="top_h", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="time likelihood and lookahead scaling")
    common(p)
    p.add_argument("--grids", help="comma list like 4x11x11,8x33x33")
    p.add_argument("--reps", type=int)
    p.add_argument("--top-h", dest="top_h", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="wire-protocol episode server")
    common(p)
    p.add_argument("--serve-addr", dest="serve_addr",
                   help="host:port or 'stdio'")
    p.add_argument("--map", help="serve a fixed PGM map")
    p.add_argument("--maps-dir", dest="maps_dir",
                   help="serve maps from a directory")
    p.add_argument("--horizon", type=int)
    p.add_argument("--reward", choices=[k.value for k in RewardKind])
    p.add_argument("--noise-profile", dest="noise_profile",
                   choices=sorted(NOISE_PROFILES))
    p.add_argument("--max-connections", dest="max_connections", type=int,
                   help="stop after N client connections (testing)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
