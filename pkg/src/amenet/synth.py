"""Synthetic scene generator with known ground truth.

Five families:

* ``still``     stationary agents.
* ``straight``  constant-velocity lanes; agent 0 moves along +x at `speed`.
* ``crossing``  pairs of agents on perpendicular straight paths that meet
                (distance zero, noise permitting) at a known frame; each
                pair lives in its own spatial region.
* ``fork``      episodes with bit-identical observation prefixes followed
                by a left or right turn, drawn with ``branch_prior``
                probability for the left branch; each episode occupies its
                own frame block so episodes never interact.
* ``arc``       constant-speed circular arcs (strongly non-linear tracks).

Everything is a deterministic function of the spec, including the noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .geometry import Scene, Trajectory

KINDS = ("straight", "crossing", "fork", "arc", "still")

# frame where a noise-free crossing pair reaches distance zero
CROSSING_MEET_FRAME = 10


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    agent_count: int = 2
    noise_std: float = 0.0
    seed: int = 0
    frames: int = 20
    speed: float = 1.0
    branch_prior: float = 0.5
    turn_deg: float = 45.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}; choose from {KINDS}")
        if self.agent_count < 1:
            raise ValueError("agent_count must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.frames < 3:
            raise ValueError("frames must be >= 3")
        if not 0.0 <= self.branch_prior <= 1.0:
            raise ValueError("branch_prior must be in [0, 1]")
        if not self.name:
            object.__setattr__(self, "name", f"{self.kind}-{self.seed}")


def parse_synth_spec(path) -> SynthSpec:
    """Read a flat key=value spec file (keys: kind, agents, noise_std, seed,
    and the optional extras frames, speed, branch_prior, turn_deg, name)."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {body!r}")
            key, _, value = body.partition("=")
            values[key.strip()] = value.strip()
    kwargs: dict[str, Any] = {}
    converters = {
        "kind": str,
        "agents": ("agent_count", int),
        "agent_count": int,
        "noise_std": float,
        "seed": int,
        "frames": int,
        "speed": float,
        "branch_prior": float,
        "turn_deg": float,
        "name": str,
    }
    for key, value in values.items():
        if key not in converters:
            raise ValueError(f"unknown synth spec key {key!r}")
        conv = converters[key]
        if isinstance(conv, tuple):
            kwargs[conv[0]] = conv[1](value)
        else:
            kwargs[key] = conv(value)
    if "kind" not in kwargs:
        raise ValueError(f"{path}: synth spec needs a 'kind' entry")
    return SynthSpec(**kwargs)


def _straight_path(start, direction_rad, speed, frames, dt) -> np.ndarray:
    steps = np.arange(frames, dtype=np.float64)[:, None]
    vel = speed * np.array([math.cos(direction_rad), math.sin(direction_rad)])
    return np.asarray(start, dtype=np.float64)[None, :] + steps * (vel * dt)[None, :]


def synth_scene(spec: SynthSpec, frame_rate_hz: float = 2.5) -> tuple[Scene, dict]:
    """Build a scene plus a ground-truth info dict.

    Info keys: ``crossing`` scenes get ``crossing_frame`` and ``pairs``;
    ``fork`` scenes get per-agent ``branches`` and the two noise-free
    ``branch_offsets`` arrays (T'-step increments from the last observed
    position).
    """
    rng = np.random.default_rng(spec.seed)
    dt = 1.0 / frame_rate_hz
    paths: list[tuple[str, int, np.ndarray]] = []  # (agent, start_frame, xy)
    info: dict[str, Any] = {"kind": spec.kind}

    if spec.kind == "still":
        centers = rng.uniform(-10.0, 10.0, size=(spec.agent_count, 2))
        for k in range(spec.agent_count):
            xy = np.repeat(centers[k][None, :], spec.frames, axis=0)
            paths.append((f"a{k}", 0, xy))

    elif spec.kind == "straight":
        for k in range(spec.agent_count):
            angle = 2.0 * math.pi * k / spec.agent_count
            start = np.array([0.0, 10.0 * k])
            paths.append((f"a{k}", 0, _straight_path(start, angle, spec.speed, spec.frames, dt)))

    elif spec.kind == "crossing":
        pairs = []
        n_pairs = spec.agent_count // 2
        # each pair covers 4 m per leg and meets at CROSSING_MEET_FRAME
        leg_speed = 4.0 / (CROSSING_MEET_FRAME * 2 * dt)
        for p in range(n_pairs):
            theta = rng.uniform(0.0, 2.0 * math.pi)
            shift = np.array([60.0 * p, 0.0]) + rng.uniform(-5.0, 5.0, size=2)
            rot = np.array(
                [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
            )
            a = _straight_path((0.0, 0.0), 0.0, leg_speed, spec.frames, dt)
            b = _straight_path((2.0, -2.0), math.pi / 2.0, leg_speed, spec.frames, dt)
            ida, idb = f"a{2 * p}", f"a{2 * p + 1}"
            paths.append((ida, 0, a @ rot.T + shift))
            paths.append((idb, 0, b @ rot.T + shift))
            pairs.append((ida, idb))
        if spec.agent_count % 2:
            k = spec.agent_count - 1
            start = np.array([60.0 * n_pairs, 0.0])
            paths.append((f"a{k}", 0, _straight_path(start, 0.0, spec.speed, spec.frames, dt)))
        info["crossing_frame"] = CROSSING_MEET_FRAME
        info["pairs"] = pairs

    elif spec.kind == "fork":
        t_obs = 8
        if spec.frames <= t_obs:
            raise ValueError("fork scenes need frames > 8")
        t_fut = spec.frames - t_obs
        turn = math.radians(spec.turn_deg)
        step = spec.speed * dt
        branch_offsets = {
            "left": np.tile(step * np.array([math.cos(turn), math.sin(turn)]), (t_fut, 1)),
            "right": np.tile(step * np.array([math.cos(-turn), math.sin(-turn)]), (t_fut, 1)),
        }
        draws = rng.random(spec.agent_count)
        branches: dict[str, str] = {}
        for k in range(spec.agent_count):
            branch = "left" if draws[k] < spec.branch_prior else "right"
            obs = _straight_path((0.0, 0.0), 0.0, spec.speed, t_obs, dt)
            fut = obs[-1][None, :] + np.cumsum(branch_offsets[branch], axis=0)
            agent = f"a{k}"
            paths.append((agent, k * spec.frames, np.vstack([obs, fut])))
            branches[agent] = branch
        info["branches"] = branches
        info["branch_offsets"] = branch_offsets
        info["t_obs"] = t_obs

    elif spec.kind == "arc":
        for k in range(spec.agent_count):
            radius = rng.uniform(3.0, 6.0)
            center = rng.uniform(-10.0, 10.0, size=2)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            sign = 1.0 if rng.random() < 0.5 else -1.0
            omega = sign * spec.speed / radius
            t = np.arange(spec.frames) * dt
            ang = phase + omega * t
            xy = center[None, :] + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
            paths.append((f"a{k}", 0, xy))

    if spec.noise_std > 0:
        paths = [
            (agent, start, xy + rng.normal(0.0, spec.noise_std, size=xy.shape))
            for agent, start, xy in paths
        ]

    trajectories = tuple(Trajectory(agent, start, xy) for agent, start, xy in paths)
    return Scene(trajectories, frame_rate_hz=frame_rate_hz, name=spec.name), info


def fork_branch_endpoints(view_last_pos, info: dict) -> dict[str, np.ndarray]:
    """Noise-free endpoints of both fork branches, anchored at a window's
    last observed position."""
    return {
        branch: np.asarray(view_last_pos) + offs.sum(axis=0)
        for branch, offs in info["branch_offsets"].items()
    }
