import socket
import subprocess
import sys
import time

import pytest


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="session")
def server_address():
    """A live engine server (separate process, generated 5x5 maps)."""
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "gridloc.cli", "serve",
         "--serve-addr", f"127.0.0.1:{port}", "--geometry", "5,5,4",
         "--horizon", "11", "--seed", "0"],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT)
    deadline = time.monotonic() + 20.0
    last_err = None
    while time.monotonic() < deadline:
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.5):
                break
        except OSError as exc:
            last_err = exc
            if proc.poll() is not None:
                out = proc.stdout.read().decode()
                raise RuntimeError(f"server died at startup:\n{out}")
            time.sleep(0.1)
    else:
        proc.terminate()
        raise RuntimeError(f"server never came up: {last_err}")
    yield f"127.0.0.1:{port}"
    proc.terminate()
    proc.wait(timeout=10)
