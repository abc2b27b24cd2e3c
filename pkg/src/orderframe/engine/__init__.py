"""Physical execution layer: partitioned storage, grid frames, the cache,
and the mode-driven executor."""

from .cache import DEFAULT_BUDGET, CacheEntry, MaterializationCache
from .executor import Engine, Handle, MODES, demand_prefix
from .gridframe import GridFrame
from .partition import (
    DEFAULT_BLOCK_SHAPE,
    PartitionGrid,
    grid_from_columns,
    partition,
    repartition,
    transpose_grid,
)

__all__ = [
    "DEFAULT_BLOCK_SHAPE",
    "DEFAULT_BUDGET",
    "CacheEntry",
    "Engine",
    "GridFrame",
    "Handle",
    "MODES",
    "MaterializationCache",
    "PartitionGrid",
    "demand_prefix",
    "grid_from_columns",
    "partition",
    "repartition",
    "transpose_grid",
]
