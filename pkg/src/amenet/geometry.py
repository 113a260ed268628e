"""Trajectory geometry: positions, offsets, headings, scene rotation.

Coordinates are planar (x, y) in meters on a shared frame clock with a
constant step duration (0.4 s at the default rate of 2.5 Hz).  All values
are stored as float64; everything here is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

DEFAULT_FRAME_RATE_HZ = 2.5


class TrackPoint(NamedTuple):
    frame: int
    agent: str
    x: float
    y: float


@dataclass(frozen=True)
class Trajectory:
    """A run of consecutive frames for one agent.

    Frames are implicit: point k sits at ``start_frame + k``.  Gaps in an
    agent's observations must be represented as separate trajectories.
    """

    agent: str
    start_frame: int
    xy: np.ndarray  # (L, 2) float64

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=np.float64)
        if xy.ndim != 2 or xy.shape[1] != 2 or xy.shape[0] < 1:
            raise ValueError(f"trajectory needs an (L, 2) array, got {xy.shape}")
        if not np.all(np.isfinite(xy)):
            raise ValueError(f"non-finite coordinate for agent {self.agent!r}")
        if self.start_frame < 0:
            raise ValueError("start_frame must be >= 0")
        xy = xy.copy()
        xy.flags.writeable = False
        object.__setattr__(self, "xy", xy)

    def __len__(self) -> int:
        return self.xy.shape[0]

    @property
    def frames(self) -> np.ndarray:
        return np.arange(self.start_frame, self.start_frame + len(self))

    @property
    def end_frame(self) -> int:
        """Last frame index (inclusive)."""
        return self.start_frame + len(self) - 1

    def points(self) -> list[TrackPoint]:
        return [
            TrackPoint(self.start_frame + k, self.agent, float(p[0]), float(p[1]))
            for k, p in enumerate(self.xy)
        ]

    @classmethod
    def from_points(cls, points: Iterable[TrackPoint]) -> "Trajectory":
        pts = list(points)
        if not pts:
            raise ValueError("empty point list")
        agents = {p.agent for p in pts}
        if len(agents) != 1:
            raise ValueError(f"mixed agents in one trajectory: {sorted(agents)}")
        frames = [p.frame for p in pts]
        if any(b - a != 1 for a, b in zip(frames, frames[1:])):
            raise ValueError("frames must be strictly increasing and consecutive")
        xy = np.array([[p.x, p.y] for p in pts], dtype=np.float64)
        return cls(pts[0].agent, frames[0], xy)


@dataclass(frozen=True)
class Scene:
    """A set of trajectories on one frame clock.

    The same agent id may appear in several trajectories (gap splits) as
    long as their frame ranges are disjoint, so each (agent, frame) pair
    is unique.
    """

    trajectories: tuple[Trajectory, ...]
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ
    name: str = "scene"

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        if self.frame_rate_hz <= 0:
            raise ValueError("frame_rate_hz must be positive")
        seen: set[tuple[str, int]] = set()
        for traj in self.trajectories:
            for f in range(traj.start_frame, traj.end_frame + 1):
                key = (traj.agent, f)
                if key in seen:
                    raise ValueError(f"agent {traj.agent!r} duplicated at frame {f}")
                seen.add(key)

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate_hz

    def __len__(self) -> int:
        return len(self.trajectories)


@dataclass(frozen=True)
class OffsetSeq:
    """Origin position plus per-step (dx, dy) increments."""

    origin: np.ndarray  # (2,)
    deltas: np.ndarray  # (L-1, 2)

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(2)
        deltas = np.asarray(self.deltas, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "deltas", deltas)


def to_offsets(traj: Trajectory) -> OffsetSeq:
    """Differences between consecutive positions, keeping the first position
    as the anchor.  A single-point trajectory yields an empty delta list."""
    return OffsetSeq(origin=traj.xy[0], deltas=np.diff(traj.xy, axis=0))


def from_offsets(offs: OffsetSeq) -> np.ndarray:
    """Rebuild absolute positions by cumulatively summing the increments.

    Inverse of :func:`to_offsets` up to rounding.
    """
    out = np.empty((len(offs.deltas) + 1, 2), dtype=np.float64)
    out[0] = offs.origin
    if len(offs.deltas):
        np.cumsum(offs.deltas, axis=0, out=out[1:])
        out[1:] += offs.origin
    return out


def heading_deg(delta) -> float:
    """Heading of a (dx, dy) step as degrees in [0, 360).

    A zero step maps to 0 by convention so stationary agents get a
    well-defined orientation value.
    """
    dx, dy = float(delta[0]), float(delta[1])
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return math.degrees(math.atan2(dy, dx)) % 360.0


def rotate_scene(scene: Scene, angle: float) -> Scene:
    """Rotate every trajectory about the global origin by `angle` radians.

    The frame structure is untouched, so all relative geometry (per-frame
    distances, per-step speeds) is preserved.
    """
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]], dtype=np.float64)
    rotated = tuple(
        Trajectory(t.agent, t.start_frame, t.xy @ rot.T) for t in scene.trajectories
    )
    return Scene(rotated, frame_rate_hz=scene.frame_rate_hz, name=scene.name)
