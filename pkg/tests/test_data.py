import numpy as np
import pytest

from amenet.data import (
    ParseError,
    classify_linearity,
    downsample,
    linearity_residual,
    load_table,
    make_windows,
    save_table,
    split_windows,
    window_linearity,
)
from amenet.geometry import Scene, Trajectory, rotate_scene

from conftest import random_scene


def _write(tmp_path, text, name="scene.txt"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadTable:
    def test_two_rows(self, tmp_path):
        scene = load_table(_write(tmp_path, "0 1 0.0 0.0\n1 1 1.0 0.0\n"))
        assert len(scene) == 1
        assert len(scene.trajectories[0]) == 2

    def test_empty_file(self, tmp_path):
        scene = load_table(_write(tmp_path, "# only a comment\n\n"))
        assert len(scene) == 0

    def test_gap_split(self, tmp_path):
        rows = "\n".join(f"{f} 7 {f}.0 0.0" for f in (0, 1, 5, 6))
        scene = load_table(_write(tmp_path, rows))
        assert len(scene) == 2
        assert all(t.agent == "7" for t in scene.trajectories)
        assert [t.start_frame for t in scene.trajectories] == [0, 5]

    def test_unsorted_rows(self, tmp_path):
        scene = load_table(_write(tmp_path, "1 a 1.0 0.0\n0 a 0.0 0.0\n"))
        np.testing.assert_array_equal(scene.trajectories[0].xy, [[0, 0], [1, 0]])

    def test_malformed_line_reports_lineno(self, tmp_path):
        with pytest.raises(ParseError, match=":2:"):
            load_table(_write(tmp_path, "0 a 0.0 0.0\n1 a 1.0\n"))

    def test_nonfinite_rejected(self, tmp_path):
        with pytest.raises(ParseError, match="non-finite"):
            load_table(_write(tmp_path, "0 a nan 0.0\n"))

    def test_roundtrip(self, tmp_path):
        scene = random_scene(3)
        path = tmp_path / "out.txt"
        save_table(path, scene)
        back = load_table(path)
        for t0, t1 in zip(scene.trajectories, back.trajectories):
            np.testing.assert_array_equal(t0.xy, t1.xy)
            assert t0.start_frame == t1.start_frame


class TestDownsample:
    def test_factor_10(self):
        traj = Trajectory("a", 0, np.stack([np.arange(25.0), np.zeros(25)], axis=1))
        scene = Scene((traj,), frame_rate_hz=25.0)
        out = downsample(scene, 10)
        assert out.frame_rate_hz == 2.5
        assert [t.start_frame for t in out.trajectories] == [0]
        assert len(out.trajectories[0]) == 3  # frames 0, 10, 20 -> 0, 1, 2
        np.testing.assert_array_equal(out.trajectories[0].xy, traj.xy[[0, 10, 20]])

    def test_identity(self, two_agent_scene):
        assert downsample(two_agent_scene, 1) is two_agent_scene

    def test_50_frames(self):
        traj = Trajectory("a", 0, np.zeros((50, 2)))
        out = downsample(Scene((traj,), frame_rate_hz=25.0), 10)
        assert len(out.trajectories[0]) == 5

    def test_compose(self):
        scene = random_scene(9, frames=60)
        once = downsample(scene, 6)
        twice = downsample(downsample(scene, 2), 3)
        assert len(once) == len(twice)
        for t0, t1 in zip(once.trajectories, twice.trajectories):
            assert t0.start_frame == t1.start_frame
            np.testing.assert_array_equal(t0.xy, t1.xy)

    def test_bad_factor(self, two_agent_scene):
        with pytest.raises(ValueError):
            downsample(two_agent_scene, 0)


class TestMakeWindows:
    def test_exact_fit(self):
        scene = Scene((Trajectory("a", 0, np.zeros((20, 2))),))
        assert len(make_windows(scene, 8, 12)) == 1

    def test_too_short(self):
        scene = Scene((Trajectory("a", 0, np.zeros((19, 2))),))
        assert make_windows(scene, 8, 12) == []

    def test_two_starts(self):
        scene = Scene((Trajectory("a", 0, np.zeros((21, 2))),))
        wins = make_windows(scene, 8, 12, stride=1)
        assert [w.start_frame for w in wins] == [0, 1]

    def test_stride_subset(self):
        scene = random_scene(5, n_agents=3, frames=30)
        all_ids = {w.window_id for w in make_windows(scene, 8, 12, stride=1)}
        strided = {w.window_id for w in make_windows(scene, 8, 12, stride=3)}
        assert strided <= all_ids

    def test_target_positions_are_slices(self, two_agent_scene):
        wins = make_windows(two_agent_scene, 8, 12)
        by_agent = {t.agent: t for t in two_agent_scene.trajectories}
        for w in wins:
            traj = by_agent[w.target]
            lo = w.start_frame - traj.start_frame
            np.testing.assert_array_equal(w.obs, traj.xy[lo : lo + 8])
            np.testing.assert_array_equal(w.fut, traj.xy[lo + 8 : lo + 20])

    def test_neighbors_exclude_target(self, two_agent_scene):
        for w in make_windows(two_agent_scene, 8, 12):
            for frame_nbrs in w.neighbors:
                assert all(nb.agent != w.target for nb in frame_nbrs)

    def test_neighbor_offsets_are_backward_differences(self, two_agent_scene):
        wins = make_windows(two_agent_scene, 8, 12)
        w = next(x for x in wins if x.target == "a")
        nb = w.neighbors[5][0]  # agent b at frame 5
        traj_b = two_agent_scene.trajectories[1]
        np.testing.assert_array_equal(nb.offset, traj_b.xy[5] - traj_b.xy[4])
        first = w.neighbors[0][0]
        np.testing.assert_array_equal(first.offset, [0.0, 0.0])

    def test_observation_view_has_no_future(self, two_agent_scene):
        w = make_windows(two_agent_scene, 8, 12)[0]
        view = w.observation()
        assert view.obs.shape == (8, 2)
        assert len(view.neighbors) == 8
        assert not hasattr(view, "fut")


class TestSplitWindows:
    def _windows(self):
        scenes = [random_scene(s, n_agents=2, frames=25) for s in range(5)]
        wins = []
        for sc in scenes:
            wins.extend(make_windows(sc, 8, 12, stride=2))
        return wins

    def test_extremes(self):
        wins = self._windows()
        train, test = split_windows(wins, 0.0, seed=1)
        assert len(train) == len(wins) and not test
        train, test = split_windows(wins, 1.0, seed=1)
        assert len(test) == len(wins) and not train

    def test_deterministic(self):
        wins = self._windows()
        a = split_windows(wins, 0.25, seed=42)
        b = split_windows(wins, 0.25, seed=42)
        assert [w.window_id for w in a[0]] == [w.window_id for w in b[0]]
        assert [w.window_id for w in a[1]] == [w.window_id for w in b[1]]
        assert len(a[1]) == round(len(wins) * 0.25)

    def test_scene_keyed(self):
        wins = self._windows()
        train, test = split_windows(wins, 0.4, seed=7, by_scene=True)
        assert {w.scene for w in train}.isdisjoint({w.scene for w in test})
        assert len(train) + len(test) == len(wins)


class TestLinearity:
    def test_constant_velocity_is_linear(self):
        line = np.stack([np.arange(20) * 0.4, np.arange(20) * 0.1], axis=1)
        assert classify_linearity(line) == "linear"
        assert linearity_residual(line) < 1e-18

    def test_stationary_is_linear(self):
        assert classify_linearity(np.ones((12, 2))) == "linear"

    def test_zigzag_is_nonlinear(self):
        t = np.arange(12)
        zig = np.stack([t * 0.4, np.where(t % 2 == 0, 1.0, -1.0)], axis=1)
        assert linearity_residual(zig) > 0.1
        assert classify_linearity(zig) == "nonlinear"

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            classify_linearity([[0, 0], [1, 1]])

    def test_rotation_translation_invariant(self):
        rng = np.random.default_rng(17)
        for seed in range(10):
            scene = random_scene(seed, n_agents=1, frames=20)
            xy = scene.trajectories[0].xy + rng.normal(0, 0.3, (20, 2))
            base = linearity_residual(xy)
            angle = rng.uniform(0, 2 * np.pi)
            rot = rotate_scene(Scene((Trajectory("a", 0, xy),)), angle)
            shifted = rot.trajectories[0].xy + rng.uniform(-100, 100, 2)
            np.testing.assert_allclose(linearity_residual(shifted), base, rtol=1e-6, atol=1e-9)
