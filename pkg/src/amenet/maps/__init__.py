from .builder import (
    DynamicMap,
    FrameState,
    MapConfig,
    OccupancyGrid,
    active_backend,
    build_dynamic_map,
    build_occupancy_grid,
    dump_dynamic_map,
    load_dynamic_map_dump,
    map_cell,
    map_sequence,
    occupancy_sequence,
)

__all__ = [
    "DynamicMap",
    "FrameState",
    "MapConfig",
    "OccupancyGrid",
    "active_backend",
    "build_dynamic_map",
    "build_occupancy_grid",
    "dump_dynamic_map",
    "load_dynamic_map_dump",
    "map_cell",
    "map_sequence",
    "occupancy_sequence",
]
