"""Newline-delimited JSON wire protocol.

Serve mode exposes reset/step/close episodes to external trainers; the
same framing carries "policy_query" and "likelihood_query" messages so
learned models can plug in as providers without linking an ML runtime
into the engine. Tensors travel as base64 float32 little-endian with an
explicit shape array. Actions encode 0=Left, 1=Right, 2=Forward.
"""

from __future__ import annotations

import base64
import json
import socket
import sys

import numpy as np

from .env import Episode, EpisodeConfig
from .grids import GridGeometry, GridMap
from .lidar import Scan
from .likelihood import LikelihoodGrid
from .mapgen import TextureConfig, generate_maze, rasterize
from .mapio import read_map

PROTOCOL_VERSION = 1


class ProtocolError(RuntimeError):
    pass


def encode_tensor(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    return {
        "shape": list(arr.shape),
        "dtype": "float32",
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def decode_tensor(obj: dict) -> np.ndarray:
    if obj.get("dtype") != "float32":
        raise ProtocolError(f"unsupported tensor dtype {obj.get('dtype')!r}")
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype="<f4")
    return arr.reshape(obj["shape"]).copy()


def send_msg(wfile, obj: dict):
    wfile.write((json.dumps(obj) + "\n").encode("utf-8"))
    wfile.flush()


def recv_msg(rfile) -> dict | None:
    line = rfile.readline()
    if not line:
        return None
    return json.loads(line.decode("utf-8"))


class MapSource:
    """Resolves a reset's map_id to a GridMap: either files from a
    directory (sorted PGM order) or mazes generated on demand."""

    def __init__(self, geometry: GridGeometry | None = None,
                 maps_dir=None, map_file=None, texture=None,
                 prune_prob: float = 0.25, seed: int = 0):
        self.geometry = geometry
        self.maps_dir = maps_dir
        self.map_file = map_file
        self.texture = texture or TextureConfig.clean()
        self.prune_prob = prune_prob
        self.seed = seed
        self._cache: dict[int, GridMap] = {}

    def get(self, map_id: int) -> GridMap:
        if map_id in self._cache:
            return self._cache[map_id]
        if self.map_file is not None:
            grid_map, _ = read_map(self.map_file)
        elif self.maps_dir is not None:
            from pathlib import Path
            files = sorted(Path(self.maps_dir).glob("*.pgm"))
            if not files:
                raise ProtocolError(f"no PGM maps in {self.maps_dir}")
            grid_map, _ = read_map(files[map_id % len(files)])
        else:
            g = self.geometry
            maze = generate_maze(g.n, g.m, self.prune_prob,
                                 seed=[self.seed, 40, map_id])
            grid_map = rasterize(maze, g, self.texture,
                                 seed=[self.seed, 41, map_id])
        self._cache[map_id] = grid_map
        return grid_map


class EngineServer:
    """Single-connection episodic server speaking the wire protocol."""

    def __init__(self, map_source: MapSource,
                 config: EpisodeConfig | None = None):
        self.map_source = map_source
        self.config = config or EpisodeConfig()
        self._episodes: dict[int, Episode] = {}
        self._current: Episode | None = None

    def _obs_payload(self, obs) -> dict:
        return {
            "belief": encode_tensor(obs.belief),
            "map": encode_tensor(obs.map_l),
            "scan": encode_tensor(obs.scan_l),
        }

    def handle_request(self, msg: dict) -> dict:
        try:
            cmd = msg.get("cmd")
            if cmd == "hello":
                if msg.get("protocol") != PROTOCOL_VERSION:
                    return {"ok": False,
                            "error": f"protocol mismatch: server speaks "
                                     f"{PROTOCOL_VERSION}",
                            "protocol": PROTOCOL_VERSION}
                g = self.map_source.get(0).geometry
                return {"ok": True, "protocol": PROTOCOL_VERSION,
                        "geometry": {"theta": g.theta, "n": g.n, "m": g.m},
                        "horizon": self.config.horizon}
            if cmd == "reset":
                map_id = int(msg.get("map_id", 0))
                episode = self._episodes.get(map_id)
                if episode is None:
                    episode = Episode(self.map_source.get(map_id),
                                      self.config)
                    self._episodes[map_id] = episode
                self._current = episode
                obs = episode.reset(seed=msg.get("seed"))
                return {"ok": True, **self._obs_payload(obs)}
            if cmd == "step":
                if self._current is None:
                    return {"ok": False, "error": "step before reset"}
                action = int(msg.get("action", -1))
                if action not in (0, 1, 2):
                    return {"ok": False,
                            "error": f"invalid action {action}"}
                try:
                    obs, reward, done, info = self._current.step(action)
                except Exception as exc:  # finished episode, etc.
                    return {"ok": False, "error": str(exc)}
                return {"ok": True, **self._obs_payload(obs),
                        "reward": reward, "done": done, "info": info}
            if cmd == "close":
                return {"ok": True, "closed": True}
            return {"ok": False, "error": f"unknown command {cmd!r}"}
        except Exception as exc:
            return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}

    def serve_connection(self, rfile, wfile):
        while True:
            msg = recv_msg(rfile)
            if msg is None:
                return
            reply = self.handle_request(msg)
            send_msg(wfile, reply)
            if msg.get("cmd") == "close":
                return

    def serve_tcp(self, host: str, port: int, ready_callback=None,
                  max_connections=None):
        """One client at a time; episodes are stateful and sequential."""
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as server:
            server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            server.bind((host, port))
            server.listen(1)
            if ready_callback is not None:
                ready_callback(server.getsockname())
            served = 0
            while max_connections is None or served < max_connections:
                conn, _ = server.accept()
                with conn:
                    rfile = conn.makefile("rb")
                    wfile = conn.makefile("wb")
                    self.serve_connection(rfile, wfile)
                served += 1

    def serve_stdio(self):
        self.serve_connection(sys.stdin.buffer, sys.stdout.buffer)


class _WireClient:
    """Blocking request/reply client over TCP."""

    def __init__(self, address: str, timeout: float = 30.0):
        host, _, port = address.rpartition(":")
        self._sock = socket.create_connection((host or "127.0.0.1",
                                               int(port)), timeout=timeout)
        self._rfile = self._sock.makefile("rb")
        self._wfile = self._sock.makefile("wb")

    def request(self, msg: dict) -> dict:
        send_msg(self._wfile, msg)
        reply = recv_msg(self._rfile)
        if reply is None:
            raise ProtocolError("connection closed by peer")
        return reply

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


class ExternalPolicyClient(_WireClient):
    """Policy provider backed by an external process; sends the belief,
    downsampled map, and downsampled scan, expects action probabilities."""

    def __call__(self, belief, map_l, scan_l) -> np.ndarray:
        reply = self.request({
            "kind": "policy_query",
            "belief": encode_tensor(belief.values),
            "map": encode_tensor(map_l),
            "scan": encode_tensor(scan_l),
        })
        if not reply.get("ok"):
            raise ProtocolError(reply.get("error", "policy query failed"))
        probs = np.asarray(reply["probs"], dtype=np.float64)
        if probs.shape != (3,) or probs.min() < 0:
            raise ProtocolError(f"invalid action distribution {probs}")
        return probs / probs.sum()


class ExternalLikelihoodClient(_WireClient):
    """Coarse likelihood provider backed by an external process."""

    def __call__(self, grid_map: GridMap, scan: Scan) -> LikelihoodGrid:
        g = grid_map.geometry
        reply = self.request({
            "kind": "likelihood_query",
            "level": 0,
            "map": encode_tensor(grid_map.occupancy.astype(np.float32)),
            "scan": encode_tensor(np.asarray(scan.ranges)),
            "beams": scan.beams,
            "fov": scan.fov,
        })
        if not reply.get("ok"):
            raise ProtocolError(reply.get("error", "likelihood query failed"))
        block = decode_tensor(reply["block"]).astype(np.float64)
        values = block.reshape(g.theta, g.n, g.m)
        values = np.clip(values, 0.0, None)
        total = values.sum()
        if total <= 0:
            raise ProtocolError("external likelihood sums to zero")
        return LikelihoodGrid(values / total, level=0)


class ExternalFineClient(_WireClient):
    """Fine-level refinement provider backed by an external process: sends
    the map/scan crops around one cell, expects a flat k x k block."""

    def __init__(self, address: str, k: int, timeout: float = 30.0):
        super().__init__(address, timeout=timeout)
        self.k = k

    def __call__(self, query) -> np.ndarray:
        reply = self.request({
            "kind": "likelihood_query",
            "level": 1,
            "map_crop": encode_tensor(query.map_crop.astype(np.float32)),
            "scan_crop": encode_tensor(query.scan_crop.astype(np.float32)),
            "cell": list(query.cell),
            "theta": query.theta,
            "scan": encode_tensor(np.asarray(query.scan.ranges)),
        })
        if not reply.get("ok"):
            raise ProtocolError(reply.get("error", "fine query failed"))
        block = decode_tensor(reply["block"]).astype(np.float64)
        return np.clip(block.reshape(self.k, self.k), 0.0, None)
