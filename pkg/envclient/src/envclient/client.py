"""Thin episodic-environment client for the engine's serve-mode protocol.

Speaks newline-delimited JSON over TCP: blocking, synchronous, one
connection per environment. Tensors travel as base64 float32
little-endian with explicit shapes; actions encode 0=Left, 1=Right,
2=Forward. Every request gets exactly one reply or a timeout error, so
callers never deadlock on server-side failures.
"""

from __future__ import annotations

import base64
import json
import socket
from pathlib import Path

import numpy as np

PROTOCOL_VERSION = 1
ACTIONS = (0, 1, 2)


class ProtocolError(RuntimeError):
    pass


class ProtocolMismatchError(ProtocolError):
    pass


class EpisodeFinished(RuntimeError):
    """step() after done; reset() starts the next episode."""


def decode_tensor(obj: dict) -> np.ndarray:
    if obj.get("dtype") != "float32":
        raise ProtocolError(f"unexpected tensor dtype {obj.get('dtype')!r}")
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f4").reshape(obj["shape"]).copy()


def encode_tensor(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    return {"shape": list(arr.shape), "dtype": "float32",
            "data": base64.b64encode(arr.tobytes()).decode("ascii")}


class RemoteEnv:
    """One live connection to a serve-mode engine."""

    def __init__(self, sock: socket.socket, geometry: dict, horizon: int):
        self._sock = sock
        self._rfile = sock.makefile("rb")
        self._wfile = sock.makefile("wb")
        self.geometry = geometry
        self.horizon = horizon
        self.last_observation = None
        self._done = True

    # -- protocol plumbing --------------------------------------------------

    def _request(self, msg: dict) -> dict:
        self._wfile.write((json.dumps(msg) + "\n").encode("utf-8"))
        self._wfile.flush()
        line = self._rfile.readline()
        if not line:
            raise ProtocolError("server closed the connection")
        return json.loads(line.decode("utf-8"))

    def _decode_observation(self, reply: dict) -> dict:
        t, n, m = (self.geometry[k] for k in ("theta", "n", "m"))
        obs = {
            "belief": decode_tensor(reply["belief"]),
            "map": decode_tensor(reply["map"]),
            "scan": decode_tensor(reply["scan"]),
        }
        if obs["belief"].shape != (t, n, m):
            raise ProtocolError(
                f"belief shape {obs['belief'].shape} does not match "
                f"advertised geometry {(t, n, m)}")
        for key in ("map", "scan"):
            if obs[key].shape != (n, m):
                raise ProtocolError(f"{key} shape {obs[key].shape} does not "
                                    f"match advertised geometry {(n, m)}")
        self.last_observation = obs
        return obs

    # -- episodic API --------------------------------------------------------

    def reset(self, seed=None, map_id: int = 0) -> dict:
        msg = {"cmd": "reset", "map_id": map_id}
        if seed is not None:
            msg["seed"] = int(seed)
        reply = self._request(msg)
        if not reply.get("ok"):
            raise ProtocolError(reply.get("error", "reset failed"))
        self._done = False
        return self._decode_observation(reply)

    def step(self, action: int):
        if action not in ACTIONS:
            raise ValueError(f"action must be one of {ACTIONS}, got {action}")
        if self._done:
            raise EpisodeFinished("episode is done; call reset() first")
        reply = self._request({"cmd": "step", "action": int(action)})
        if not reply.get("ok"):
            raise ProtocolError(reply.get("error", "step failed"))
        obs = self._decode_observation(reply)
        self._done = bool(reply["done"])
        return obs, float(reply["reward"]), self._done, reply.get("info", {})

    def close(self):
        try:
            self._request({"cmd": "close"})
        except (ProtocolError, OSError):
            pass
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- convenience ---------------------------------------------------------

    def record_rollout(self, policy, episodes: int, out,
                       seed: int = 0) -> list[Path]:
        """Run `episodes` full episodes with `policy(obs) -> action` and
        write one JSONL trace per episode; returns the trace paths."""
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for e in range(episodes):
            obs = self.reset(seed=seed + e, map_id=e)
            rows = []
            done = False
            step = 0
            while not done:
                action = int(policy(obs))
                obs, reward, done, info = self.step(action)
                step += 1
                rows.append({"step": step, "action": action,
                             "reward": reward, "done": done, "info": info})
            path = out / f"rollout-{e:04d}.jsonl"
            with open(path, "w", encoding="utf-8") as f:
                for row in rows:
                    f.write(json.dumps(row, sort_keys=True) + "\n")
            paths.append(path)
        return paths


def connect(address: str, timeout: float = 30.0) -> RemoteEnv:
    """Open a connection, check protocol versions, and fetch the grid
    geometry. Raises ConnectionError when nothing is listening and
    ProtocolMismatchError on version skew."""
    host, _, port = address.rpartition(":")
    try:
        sock = socket.create_connection((host or "127.0.0.1", int(port)),
                                        timeout=timeout)
    except OSError as exc:
        raise ConnectionError(f"cannot connect to {address}: {exc}") from exc
    env = RemoteEnv(sock, geometry={}, horizon=0)
    reply = env._request({"cmd": "hello", "protocol": PROTOCOL_VERSION})
    if not reply.get("ok"):
        server_version = reply.get("protocol")
        env.close()
        if server_version is not None and server_version != PROTOCOL_VERSION:
            raise ProtocolMismatchError(
                f"client speaks {PROTOCOL_VERSION}, server {server_version}")
        raise ProtocolError(reply.get("error", "handshake failed"))
    env.geometry = reply["geometry"]
    env.horizon = int(reply.get("horizon", 0))
    return env
