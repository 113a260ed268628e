"""Target-centered interaction grids.

At every time step, each neighbor of the target agent is binned into a
square grid centered on the target.  The bin is chosen from the neighbor's
relative position shifted by its relative offset (its motion during the
step), ``cell_w = floor(W/2 + (x_j - x_i) + (dx_j - dx_i))`` and the same
for h.  Three layers are filled per cell:

* orientation: the neighbor's heading in degrees scaled to [0, 1]; cells
  holding several neighbors store the circular mean of their headings
  (mean of unit vectors), which avoids the 359-vs-1 degree wrap artifact
  of a plain average.
* speed: mean |offset| / dt of the cell's occupants, min-max normalized
  across occupied cells; a layer whose occupied cells all share one
  nonzero speed normalizes to 1.0, and an all-zero layer stays zero.
* position: 1.0 for occupied cells (or, with ``position_layer='density'``,
  the occupant count over the number of co-present neighbors that step).

The occupancy grid used as an ablation baseline bins by relative position
alone and marks cells with a bare flag.

Out-of-range neighbors are dropped.  The target never appears in its own
grid.  Grid y follows world +y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..data import ObservationView, Window
from ._accum import accumulate_dynamic, accumulate_occupancy, active_backend

__all__ = [
    "MapConfig",
    "DynamicMap",
    "OccupancyGrid",
    "FrameState",
    "map_cell",
    "build_dynamic_map",
    "build_occupancy_grid",
    "map_sequence",
    "occupancy_sequence",
    "dump_dynamic_map",
    "load_dynamic_map_dump",
    "active_backend",
]

LAYER_ORIENTATION, LAYER_SPEED, LAYER_POSITION = 0, 1, 2


@dataclass(frozen=True)
class MapConfig:
    extent_m: float = 32.0
    cell_m: float = 1.0
    position_layer: str = "binary"  # or "density"

    def __post_init__(self):
        if self.extent_m <= 0 or self.cell_m <= 0:
            raise ValueError("extent_m and cell_m must be positive")
        ratio = self.extent_m / self.cell_m
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(f"extent_m/cell_m must be an integer, got {ratio}")
        if self.position_layer not in ("binary", "density"):
            raise ValueError("position_layer must be 'binary' or 'density'")

    @property
    def width(self) -> int:
        return int(round(self.extent_m / self.cell_m))

    @property
    def height(self) -> int:
        return self.width


@dataclass(frozen=True)
class DynamicMap:
    grid: np.ndarray  # (W, H, 3) float64, values in [0, 1]
    frame: int
    target: str


@dataclass(frozen=True)
class OccupancyGrid:
    grid: np.ndarray  # (W, H) float64, binary
    frame: int
    target: str


@dataclass(frozen=True)
class FrameState:
    """All co-present agents at one frame: ids, positions, per-frame
    offsets.  Rows are sorted by agent id."""

    agents: tuple[str, ...]
    pos: np.ndarray  # (M, 2)
    off: np.ndarray  # (M, 2)
    frame: int = 0

    def row(self, agent: str) -> int:
        try:
            return self.agents.index(agent)
        except ValueError:
            raise KeyError(f"agent {agent!r} not present in frame {self.frame}") from None


def map_cell(target_pos, target_delta, nbr_pos, nbr_delta, cfg: MapConfig):
    """Grid cell a neighbor falls into, or None when it lands outside.

    Cell coordinates are in cells; positions stay in meters and are divided
    by the cell size first.
    """
    # term-by-term scaling mirrors the accumulation kernels bit for bit
    u = (float(nbr_pos[0]) - float(target_pos[0])) / cfg.cell_m + (
        float(nbr_delta[0]) - float(target_delta[0])
    ) / cfg.cell_m
    v = (float(nbr_pos[1]) - float(target_pos[1])) / cfg.cell_m + (
        float(nbr_delta[1]) - float(target_delta[1])
    ) / cfg.cell_m
    w = math.floor(0.5 * cfg.width + u)
    h = math.floor(0.5 * cfg.height + v)
    if 0 <= w < cfg.width and 0 <= h < cfg.height:
        return (w, h)
    return None


def _finalize_dynamic(sin_sum, cos_sum, speed_sum, count, total_neighbors, cfg: MapConfig):
    W, H = count.shape
    grid = np.zeros((W, H, 3), dtype=np.float64)
    occupied = np.argwhere(count > 0)
    if occupied.size == 0:
        return grid
    # orientation: per-cell circular mean, scalar math for bit-stable trig
    for w, h in occupied:
        deg = math.degrees(math.atan2(sin_sum[w, h], cos_sum[w, h])) % 360.0
        grid[w, h, LAYER_ORIENTATION] = deg / 360.0
    occ_mask = count > 0
    means = speed_sum[occ_mask] / count[occ_mask]
    mn = means.min()
    mx = means.max()
    if mx > mn:
        grid[occ_mask, LAYER_SPEED] = (means - mn) / (mx - mn)
    elif mx > 0.0:
        grid[occ_mask, LAYER_SPEED] = 1.0
    if cfg.position_layer == "binary":
        grid[occ_mask, LAYER_POSITION] = 1.0
    else:
        grid[occ_mask, LAYER_POSITION] = count[occ_mask] / float(total_neighbors)
    return grid


def _dynamic_layers(rel_pos, rel_off, nbr_off, dt, total_neighbors, cfg: MapConfig):
    W, H = cfg.width, cfg.height
    sin_sum = np.zeros((W, H))
    cos_sum = np.zeros((W, H))
    speed_sum = np.zeros((W, H))
    count = np.zeros((W, H))
    if rel_pos.shape[0]:
        accumulate_dynamic(
            np.ascontiguousarray(rel_pos / cfg.cell_m),
            np.ascontiguousarray(rel_off / cfg.cell_m),
            np.ascontiguousarray(nbr_off),
            dt,
            sin_sum,
            cos_sum,
            speed_sum,
            count,
        )
    return _finalize_dynamic(sin_sum, cos_sum, speed_sum, count, total_neighbors, cfg)


def _occupancy_layer(rel_pos, cfg: MapConfig):
    W, H = cfg.width, cfg.height
    occ = np.zeros((W, H))
    if rel_pos.shape[0]:
        accumulate_occupancy(np.ascontiguousarray(rel_pos / cfg.cell_m), occ)
    return (occ > 0).astype(np.float64)


def build_dynamic_map(state: FrameState, target: str, cfg: MapConfig, dt: float = 0.4) -> DynamicMap:
    i = state.row(target)
    keep = np.arange(len(state.agents)) != i
    rel_pos = state.pos[keep] - state.pos[i]
    rel_off = state.off[keep] - state.off[i]
    nbr_off = state.off[keep]
    grid = _dynamic_layers(rel_pos, rel_off, nbr_off, dt, int(keep.sum()), cfg)
    return DynamicMap(grid=grid, frame=state.frame, target=target)


def build_occupancy_grid(state: FrameState, target: str, cfg: MapConfig) -> OccupancyGrid:
    i = state.row(target)
    keep = np.arange(len(state.agents)) != i
    rel_pos = state.pos[keep] - state.pos[i]
    grid = _occupancy_layer(rel_pos, cfg)
    return OccupancyGrid(grid=grid, frame=state.frame, target=target)


def _window_frame_arrays(window: Window | ObservationView, span: str):
    """Yield (frame_idx, target_pos, target_off, nbr_pos, nbr_off, n_nbrs)
    for each frame of the requested span."""
    if isinstance(window, ObservationView):
        if span != "obs":
            raise ValueError("an observation view only has the 'obs' span")
        positions = window.obs
        offsets = window.obs_offsets
        neighbor_sets = window.neighbors
        base = 0
    elif span == "obs":
        positions = window.obs
        offsets = window.target_offsets[: window.t_obs]
        neighbor_sets = window.neighbors[: window.t_obs]
        base = 0
    elif span == "fut":
        positions = window.fut
        offsets = window.target_offsets[window.t_obs :]
        neighbor_sets = window.neighbors[window.t_obs :]
        base = window.t_obs
    else:
        raise ValueError(f"span must be 'obs' or 'fut', got {span!r}")
    for k in range(positions.shape[0]):
        nbrs = neighbor_sets[k]
        if nbrs:
            nbr_pos = np.stack([n.pos for n in nbrs])
            nbr_off = np.stack([n.offset for n in nbrs])
        else:
            nbr_pos = np.zeros((0, 2))
            nbr_off = np.zeros((0, 2))
        yield base + k, positions[k], offsets[k], nbr_pos, nbr_off, len(nbrs)


def map_sequence(window: Window | ObservationView, span: str, cfg: MapConfig) -> np.ndarray:
    """(L, W, H, 3) dynamic maps for every frame of the span, each centered
    on the target's position at that frame."""
    out = np.zeros((0, cfg.width, cfg.height, 3))
    frames = []
    for _, tpos, toff, nbr_pos, nbr_off, n in _window_frame_arrays(window, span):
        frames.append(
            _dynamic_layers(nbr_pos - tpos, nbr_off - toff, nbr_off, window.dt, n, cfg)
        )
    if frames:
        out = np.stack(frames)
    return out


def occupancy_sequence(window: Window | ObservationView, span: str, cfg: MapConfig) -> np.ndarray:
    """(L, W, H) occupancy grids for every frame of the span."""
    frames = []
    for _, tpos, _toff, nbr_pos, _nbr_off, _n in _window_frame_arrays(window, span):
        frames.append(_occupancy_layer(nbr_pos - tpos, cfg))
    if frames:
        return np.stack(frames)
    return np.zeros((0, cfg.width, cfg.height))


_DUMP_HEADER = "# dynamic-map v1"
_LAYER_NAMES = ("orientation", "speed", "position")


def dump_dynamic_map(fh, dmap: DynamicMap, cfg: MapConfig) -> None:
    """Write one map as text: a header line plus three row-major W x H
    blocks of fixed-precision decimals (for diffing against oracles)."""
    fh.write(f"{_DUMP_HEADER}\n")
    fh.write(
        f"frame={dmap.frame} target={dmap.target} W={cfg.width} H={cfg.height} cell_m={cfg.cell_m!r}\n"
    )
    for layer, name in enumerate(_LAYER_NAMES):
        fh.write(f"# layer {name}\n")
        for w in range(cfg.width):
            fh.write(" ".join(f"{v:.12f}" for v in dmap.grid[w, :, layer]))
            fh.write("\n")


def load_dynamic_map_dump(fh) -> DynamicMap:
    header = fh.readline().strip()
    if header != _DUMP_HEADER:
        raise ValueError(f"not a dynamic-map dump (header {header!r})")
    meta = dict(kv.split("=", 1) for kv in fh.readline().split())
    W, H = int(meta["W"]), int(meta["H"])
    grid = np.zeros((W, H, 3))
    for layer in range(3):
        line = fh.readline()  # layer comment
        if not line.startswith("# layer"):
            raise ValueError("malformed dump: missing layer marker")
        for w in range(W):
            row = np.fromstring(fh.readline(), sep=" ")
            if row.shape[0] != H:
                raise ValueError(f"malformed dump row (expected {H} values)")
            grid[w, :, layer] = row
    return DynamicMap(grid=grid, frame=int(meta["frame"]), target=meta["target"])
