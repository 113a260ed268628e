import numpy as np
import pytest

from amenet.checkpoint import load_checkpoint, save_checkpoint
from amenet.model import PredictionSet
from amenet.predfile import read_predictions, write_predictions


def _sets(n_windows=3, n=4, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_windows):
        out.append(
            PredictionSet(
                window_id=f"scene:a{k}:0",
                target=f"a{k}",
                samples=rng.normal(0, 5, (n, 12, 2)),
                z=rng.normal(0, 1, (n, 2)),
                scores=rng.uniform(0, 3, n),
            )
        )
    return out


class TestPredictionFile:
    def test_roundtrip(self, tmp_path):
        preds = _sets()
        path = tmp_path / "pred.txt"
        write_predictions(path, preds)
        back = read_predictions(path)
        assert set(back) == {p.window_id for p in preds}
        for p in preds:
            q = back[p.window_id]
            np.testing.assert_array_equal(q.samples, p.samples)
            np.testing.assert_array_equal(q.z, p.z)
            np.testing.assert_array_equal(q.scores, p.scores)
            assert q.target == p.target

    def test_record_count(self, tmp_path):
        preds = _sets(n_windows=5, n=7)
        path = tmp_path / "pred.txt"
        write_predictions(path, preds)
        records = [l for l in path.read_text().splitlines() if not l.startswith("#")]
        assert len(records) == 5 * 7

    def test_deterministic_bytes(self, tmp_path):
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        write_predictions(p1, _sets(seed=3))
        write_predictions(p2, _sets(seed=3))
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bogus.txt"
        path.write_text("not a prediction file\n")
        with pytest.raises(ValueError):
            read_predictions(path)


class TestCheckpointContainer:
    def test_roundtrip_arrays_and_config(self, tmp_path):
        rng = np.random.default_rng(1)
        params = {
            "weights.a": rng.normal(0, 1, (3, 4)).astype(np.float32),
            "bias": rng.normal(0, 1, 7),
            "counter": np.array(3, dtype=np.int64),
        }
        config = {"variant": "ENet", "beta": 0.75}
        path = tmp_path / "ckpt.bin"
        save_checkpoint(path, params, config)
        back, cfg = load_checkpoint(path)
        assert cfg == config
        assert set(back) == set(params)
        for k in params:
            np.testing.assert_array_equal(back[k], params[k])
            assert back[k].dtype == params[k].dtype

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"\x00" * 64)
        with pytest.raises(ValueError, match="bad magic"):
            load_checkpoint(path)
