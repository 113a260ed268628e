"""Dataset ingestion and windowing.

The on-disk format is plain whitespace-separated text, one observation per
row: ``frame agent x y`` (frame is an integer sample index, coordinates are
decimal meters, ``#`` starts a comment line).  Grid y follows world +y;
there is no image-style axis flip anywhere in the pipeline.

A scene is cut into prediction instances ("windows"): T observed positions
followed by T' future positions of one target agent, together with the
neighbors that share each of those frames.  Per-frame offsets attached to
windows are backward differences (position[t] - position[t-1], zero at a
trajectory's first frame) so that the observation part of a window never
depends on frames after it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .geometry import Scene, Trajectory

DEFAULT_T_OBS = 8
DEFAULT_T_PRED = 12
LINEARITY_THRESHOLD_M2 = 0.1


class ParseError(ValueError):
    """Raised for malformed dataset rows; carries the 1-based line number."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class NeighborState(NamedTuple):
    agent: str
    pos: np.ndarray  # (2,)
    offset: np.ndarray  # (2,) backward difference at this frame


@dataclass(frozen=True)
class ObservationView:
    """The inference-time slice of a window: no future positions, no future
    neighbor states.  Prediction code receives only this."""

    scene: str
    target: str
    start_frame: int
    obs: np.ndarray  # (T, 2)
    obs_offsets: np.ndarray  # (T, 2) target backward differences
    neighbors: tuple[tuple[NeighborState, ...], ...]  # length T
    dt: float

    @property
    def window_id(self) -> str:
        return f"{self.scene}:{self.target}:{self.start_frame}"

    @property
    def t_obs(self) -> int:
        return self.obs.shape[0]

    @property
    def last_pos(self) -> np.ndarray:
        return self.obs[-1]

    @property
    def frames(self) -> np.ndarray:
        return np.arange(self.start_frame, self.start_frame + self.t_obs)


@dataclass(frozen=True)
class Window:
    """One prediction instance: target agent, T observed + T' future
    positions, and per-frame neighbor states over all T + T' frames."""

    scene: str
    target: str
    start_frame: int
    obs: np.ndarray  # (T, 2)
    fut: np.ndarray  # (T', 2)
    target_offsets: np.ndarray  # (T + T', 2) backward differences
    neighbors: tuple[tuple[NeighborState, ...], ...]  # length T + T'
    dt: float

    @property
    def window_id(self) -> str:
        return f"{self.scene}:{self.target}:{self.start_frame}"

    @property
    def t_obs(self) -> int:
        return self.obs.shape[0]

    @property
    def t_pred(self) -> int:
        return self.fut.shape[0]

    @property
    def frames(self) -> np.ndarray:
        return np.arange(self.start_frame, self.start_frame + self.t_obs + self.t_pred)

    @property
    def fut_frames(self) -> np.ndarray:
        return self.frames[self.t_obs :]

    def future_offsets(self) -> np.ndarray:
        """(T', 2) increments the model must predict, anchored at the last
        observed position."""
        anchored = np.vstack([self.obs[-1:], self.fut])
        return np.diff(anchored, axis=0)

    def observation(self) -> ObservationView:
        t = self.t_obs
        return ObservationView(
            scene=self.scene,
            target=self.target,
            start_frame=self.start_frame,
            obs=self.obs,
            obs_offsets=self.target_offsets[:t],
            neighbors=self.neighbors[:t],
            dt=self.dt,
        )


def _split_consecutive(agent: str, rows: list[tuple[int, float, float]]) -> list[Trajectory]:
    """Sort one agent's rows by frame and cut at every frame gap."""
    rows = sorted(rows)
    out: list[Trajectory] = []
    run: list[tuple[int, float, float]] = []
    for row in rows:
        if run and row[0] != run[-1][0] + 1:
            out.append(Trajectory(agent, run[0][0], np.array([(x, y) for _, x, y in run])))
            run = []
        run.append(row)
    if run:
        out.append(Trajectory(agent, run[0][0], np.array([(x, y) for _, x, y in run])))
    return out


def load_table(path, frame_rate_hz: float = 2.5, name: str | None = None) -> Scene:
    """Read a ``frame agent x y`` table into a Scene.

    Rows may appear in any order.  An agent observed over non-consecutive
    frames is split into one trajectory per consecutive run; nothing is
    interpolated.
    """
    by_agent: dict[str, list[tuple[int, float, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            fields = body.split()
            if len(fields) != 4:
                raise ParseError(path, lineno, f"expected 4 fields, got {len(fields)}")
            try:
                frame = int(fields[0])
                x = float(fields[2])
                y = float(fields[3])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if frame < 0:
                raise ParseError(path, lineno, f"negative frame {frame}")
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ParseError(path, lineno, f"non-finite coordinate ({x}, {y})")
            if ":" in fields[1]:
                raise ParseError(path, lineno, "agent ids must not contain ':'")
            by_agent.setdefault(fields[1], []).append((frame, x, y))

    trajectories: list[Trajectory] = []
    for agent in sorted(by_agent):
        trajectories.extend(_split_consecutive(agent, by_agent[agent]))
    if name is None:
        name = _stem(path)
    return Scene(tuple(trajectories), frame_rate_hz=frame_rate_hz, name=name)


def _stem(path) -> str:
    import os

    base = os.path.basename(str(path))
    return os.path.splitext(base)[0] or "scene"


def save_table(path, scene: Scene) -> None:
    """Write a Scene back out in the row format read by :func:`load_table`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# frame agent x y\n")
        for traj in scene.trajectories:
            for k in range(len(traj)):
                x, y = float(traj.xy[k, 0]), float(traj.xy[k, 1])
                fh.write(f"{traj.start_frame + k} {traj.agent} {x!r} {y!r}\n")


def downsample(scene: Scene, factor: int) -> Scene:
    """Keep frames with ``frame % factor == 0`` and renumber them by
    ``frame // factor``; the frame rate drops by the same factor.

    Kept frames that were not adjacent before may become adjacent after,
    and agents missing some multiple of `factor` get gap-split again.
    """
    if factor < 1:
        raise ValueError(f"downsample factor must be >= 1, got {factor}")
    if factor == 1:
        return scene
    by_agent: dict[str, list[tuple[int, float, float]]] = {}
    for traj in scene.trajectories:
        for k in range(len(traj)):
            f = traj.start_frame + k
            if f % factor == 0:
                by_agent.setdefault(traj.agent, []).append(
                    (f // factor, float(traj.xy[k, 0]), float(traj.xy[k, 1]))
                )
    trajectories: list[Trajectory] = []
    for agent in sorted(by_agent):
        trajectories.extend(_split_consecutive(agent, by_agent[agent]))
    return Scene(
        tuple(trajectories),
        frame_rate_hz=scene.frame_rate_hz / factor,
        name=scene.name,
    )


def _frame_index(scene: Scene) -> dict[int, list[tuple[str, np.ndarray, np.ndarray]]]:
    """frame -> [(agent, position, backward-difference offset)], sorted by
    agent id for deterministic neighbor ordering."""
    index: dict[int, list[tuple[str, np.ndarray, np.ndarray]]] = {}
    zero = np.zeros(2)
    for traj in scene.trajectories:
        offs = np.vstack([zero[None, :], np.diff(traj.xy, axis=0)])
        for k in range(len(traj)):
            index.setdefault(traj.start_frame + k, []).append(
                (traj.agent, traj.xy[k], offs[k])
            )
    for entries in index.values():
        entries.sort(key=lambda e: e[0])
    return index


def make_windows(
    scene: Scene,
    t_obs: int = DEFAULT_T_OBS,
    t_pred: int = DEFAULT_T_PRED,
    stride: int = 1,
) -> list[Window]:
    """Cut every trajectory into observation/prediction windows.

    A window starts at each local offset 0, stride, 2*stride, ... of a
    trajectory that still leaves room for t_obs + t_pred consecutive
    frames.  Windows are ordered by (agent, start frame).
    """
    if t_obs < 2:
        raise ValueError("t_obs must be >= 2")
    if t_pred < 1:
        raise ValueError("t_pred must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    span = t_obs + t_pred
    index = _frame_index(scene)
    windows: list[Window] = []
    for traj in sorted(scene.trajectories, key=lambda t: (t.agent, t.start_frame)):
        offs = np.vstack([np.zeros((1, 2)), np.diff(traj.xy, axis=0)])
        for local in range(0, len(traj) - span + 1, stride):
            start = traj.start_frame + local
            neighbors = []
            for f in range(start, start + span):
                entries = tuple(
                    NeighborState(a, p, o)
                    for a, p, o in index[f]
                    if a != traj.agent
                )
                neighbors.append(entries)
            windows.append(
                Window(
                    scene=scene.name,
                    target=traj.agent,
                    start_frame=start,
                    obs=traj.xy[local : local + t_obs],
                    fut=traj.xy[local + t_obs : local + span],
                    target_offsets=offs[local : local + span],
                    neighbors=tuple(neighbors),
                    dt=scene.dt,
                )
            )
    return windows


def split_windows(
    windows: Sequence[Window],
    test_fraction: float,
    seed: int,
    by_scene: bool = False,
) -> tuple[list[Window], list[Window]]:
    """Deterministic (train, test) partition.

    With ``by_scene=True`` whole scenes go to one side or the other, so no
    scene contributes windows to both parts.
    """
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError("test_fraction must be in [0, 1]")
    rng = np.random.default_rng(seed)
    if by_scene:
        scenes = sorted({w.scene for w in windows})
        order = rng.permutation(len(scenes))
        n_test = round(len(scenes) * test_fraction)
        test_scenes = {scenes[i] for i in order[:n_test]}
        train = [w for w in windows if w.scene not in test_scenes]
        test = [w for w in windows if w.scene in test_scenes]
        return train, test
    order = rng.permutation(len(windows))
    n_test = round(len(windows) * test_fraction)
    test_idx = set(order[:n_test].tolist())
    train = [w for i, w in enumerate(windows) if i not in test_idx]
    test = [w for i, w in enumerate(windows) if i in test_idx]
    return train, test


def linearity_residual(positions) -> float:
    """Total squared residual of separate degree-2 least-squares fits of
    x(k) and y(k) over the step index k."""
    xy = np.asarray(positions, dtype=np.float64)
    if xy.ndim != 2 or xy.shape[1] != 2 or xy.shape[0] < 3:
        raise ValueError("need at least 3 (x, y) positions")
    t = np.arange(xy.shape[0], dtype=np.float64)
    design = np.vander(t, 3)
    _, res, rank, _ = np.linalg.lstsq(design, xy, rcond=None)
    if rank < 3 or res.size == 0:
        # degenerate design cannot happen for >= 3 distinct steps
        fit = design @ np.linalg.pinv(design) @ xy
        return float(((xy - fit) ** 2).sum())
    return float(res.sum())


def classify_linearity(positions, threshold: float = LINEARITY_THRESHOLD_M2) -> str:
    """Label a track 'linear' when a degree-2 polynomial explains it to
    within `threshold` total squared residual, else 'nonlinear'."""
    return "linear" if linearity_residual(positions) <= threshold else "nonlinear"


def window_linearity(window: Window, threshold: float = LINEARITY_THRESHOLD_M2) -> str:
    """Linearity of the target's full (observed + future) track."""
    return classify_linearity(np.vstack([window.obs, window.fut]), threshold)
