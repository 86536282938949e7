import numpy as np
import pytest

from gridloc.bayes import BeliefGrid
from gridloc.trace import read_trace, write_trace


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    beliefs = []
    records = []
    for step in range(3):
        vals = rng.random((2, 3, 3))
        beliefs.append(BeliefGrid(vals / vals.sum()))
        records.append({"step": step, "action": step % 3,
                        "reward": float(step), "wasserstein": 0.5 * step})
    path = tmp_path / "ep.trace"
    write_trace(path, {"seed": 7, "horizon": 2}, records, beliefs)

    meta, steps, loaded = read_trace(path)
    assert meta == {"seed": 7, "horizon": 2}
    assert [s["action"] for s in steps] == [0, 1, 2]
    assert len(loaded) == 3
    for orig, back in zip(beliefs, loaded):
        assert back.values == pytest.approx(orig.values, abs=1e-7)


def test_record_belief_mismatch_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_trace(tmp_path / "x.trace", {}, [{"step": 0}], [])


def test_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.trace"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ValueError):
        read_trace(path)
