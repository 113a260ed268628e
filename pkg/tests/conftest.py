import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from amenet.geometry import Scene, Trajectory


@pytest.fixture
def two_agent_scene():
    """Two agents sharing frames 0..19: one along +x, one along +y."""
    a = Trajectory("a", 0, np.stack([np.arange(20) * 0.4, np.zeros(20)], axis=1))
    b = Trajectory("b", 0, np.stack([np.full(20, 2.0), np.arange(20) * 0.3 - 2.0], axis=1))
    return Scene((a, b))


def random_scene(seed, n_agents=4, frames=20, box=12.0):
    """Agents on random constant-velocity tracks, all sharing the clock."""
    rng = np.random.default_rng(seed)
    trajs = []
    for k in range(n_agents):
        start = rng.uniform(-box, box, 2)
        vel = rng.uniform(-1.0, 1.0, 2)
        xy = start[None, :] + np.arange(frames)[:, None] * vel[None, :] * 0.4
        trajs.append(Trajectory(f"a{k}", 0, xy))
    return Scene(tuple(trajs), name=f"rand-{seed}")
