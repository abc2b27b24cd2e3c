"""Block-partitioned cell storage.

A PartitionGrid tiles a physical m x n cell grid into rectangular blocks.
Blocks are immutable once built. Transposing the grid transposes each
block in place (an array view, no element moves) and swaps the tiling
metadata, so no cell ever changes blocks; the counters prove it.
"""

from __future__ import annotations

import bisect
from typing import Optional, Sequence

import numpy as np

from ..stats import GLOBAL_STATS, EngineStats

DEFAULT_BLOCK_SHAPE = (4096, 64)


def _splits(total: int, step: int) -> list[int]:
    if step <= 0:
        raise ValueError("block dimension must be positive")
    out = list(range(0, total, step)) or [0]
    out.append(total)
    return out


def _column_cells(arr) -> list:
    """Array column as plain python cells; unicode scalars decay to str."""
    if isinstance(arr, np.ndarray) and arr.dtype.kind == "U":
        return arr.tolist()
    return [v.item() if isinstance(v, np.generic) else v for v in arr]


def _make_block(rows: list[list], width: int) -> np.ndarray:
    """Build one block; unicode storage when every cell is a plain string."""
    height = len(rows)
    if height == 0 or width == 0:
        return np.empty((height, width), dtype=object)
    if all(type(c) is str for row in rows for c in row):
        return np.array(rows, dtype=np.str_)
    arr = np.empty((height, width), dtype=object)
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            arr[i, j] = cell
    return arr


class PartitionGrid:
    """p x q tiling of a physical cell grid; blocks tile exactly, no overlap."""

    __slots__ = ("blocks", "row_splits", "col_splits", "transposed")

    def __init__(self, blocks, row_splits, col_splits, transposed=False):
        self.blocks = blocks
        self.row_splits = list(row_splits)
        self.col_splits = list(col_splits)
        self.transposed = transposed

    @property
    def m(self) -> int:
        return self.row_splits[-1]

    @property
    def n(self) -> int:
        return self.col_splits[-1]

    @property
    def grid_shape(self) -> tuple:
        return len(self.row_splits) - 1, len(self.col_splits) - 1

    def locate(self, pi: int, pj: int) -> tuple:
        """(block_row, block_col, local_i, local_j) for a physical cell."""
        bi = bisect.bisect_right(self.row_splits, pi) - 1
        bj = bisect.bisect_right(self.col_splits, pj) - 1
        return bi, bj, pi - self.row_splits[bi], pj - self.col_splits[bj]

    def cell(self, pi: int, pj: int):
        bi, bj, li, lj = self.locate(pi, pj)
        value = self.blocks[bi][bj][li, lj]
        if isinstance(value, np.str_):
            return str(value)
        return value

    def row_band(self, bi: int) -> tuple:
        """Physical row range [start, stop) covered by block row bi."""
        return self.row_splits[bi], self.row_splits[bi + 1]

    def physical_row(self, pi: int) -> list:
        bi = bisect.bisect_right(self.row_splits, pi) - 1
        li = pi - self.row_splits[bi]
        out = []
        for bj in range(len(self.col_splits) - 1):
            chunk = self.blocks[bi][bj][li, :]
            if chunk.dtype.kind == "U":
                out.extend(chunk.tolist())
            else:
                out.extend(chunk)
        return out

    def physical_column(self, pj: int) -> list:
        bj = bisect.bisect_right(self.col_splits, pj) - 1
        lj = pj - self.col_splits[bj]
        out = []
        for bi in range(len(self.row_splits) - 1):
            chunk = self.blocks[bi][bj][:, lj]
            if chunk.dtype.kind == "U":
                out.extend(chunk.tolist())
            else:
                out.extend(chunk)
        return out


def partition(
    df,
    scheme: str = "blocks",
    block_shape: Optional[tuple] = None,
    stats: EngineStats = GLOBAL_STATS,
) -> PartitionGrid:
    """Tile a frame's physical cells into a grid.

    rows: full-width horizontal bands; cols: full-height vertical bands;
    blocks: both. Writing cells into block storage counts as one copy per
    cell.
    """
    target_r, target_c = block_shape or DEFAULT_BLOCK_SHAPE
    m, n = df.physical_m, df.n
    if scheme == "rows":
        row_splits = _splits(m, target_r)
        col_splits = [0, n] if n else [0, 0]
    elif scheme == "cols":
        row_splits = [0, m] if m else [0, 0]
        col_splits = _splits(n, target_c)
    elif scheme == "blocks":
        row_splits = _splits(m, target_r)
        col_splits = _splits(n, target_c)
    else:
        raise ValueError(f"unknown partition scheme {scheme!r}")
    cols = [_column_cells(df.physical_column(j)) for j in range(n)]
    blocks = []
    for bi in range(len(row_splits) - 1):
        r0, r1 = row_splits[bi], row_splits[bi + 1]
        band = []
        for bj in range(len(col_splits) - 1):
            c0, c1 = col_splits[bj], col_splits[bj + 1]
            rows = [[cols[j][i] for j in range(c0, c1)] for i in range(r0, r1)]
            band.append(_make_block(rows, c1 - c0))
        blocks.append(band)
    stats.bump("cells_copied", m * n)
    return PartitionGrid(blocks, row_splits, col_splits)


def transpose_grid(grid: PartitionGrid, stats: EngineStats = GLOBAL_STATS) -> PartitionGrid:
    """Swap the grid axes; every block transposes in place as a view."""
    p, q = grid.grid_shape
    blocks = [[grid.blocks[bi][bj].T for bi in range(p)] for bj in range(q)]
    stats.bump("cross_block_moves", 0)
    return PartitionGrid(blocks, grid.col_splits, grid.row_splits,
                         transposed=not grid.transposed)


def repartition(
    grid: PartitionGrid,
    scheme: str = "blocks",
    block_shape: Optional[tuple] = None,
    stats: EngineStats = GLOBAL_STATS,
) -> PartitionGrid:
    """Re-tile under a new scheme; each cell is copied at most once."""
    target_r, target_c = block_shape or DEFAULT_BLOCK_SHAPE
    m, n = grid.m, grid.n
    if scheme == "rows":
        row_splits = _splits(m, target_r)
        col_splits = [0, n] if n else [0, 0]
    elif scheme == "cols":
        row_splits = [0, m] if m else [0, 0]
        col_splits = _splits(n, target_c)
    elif scheme == "blocks":
        row_splits = _splits(m, target_r)
        col_splits = _splits(n, target_c)
    else:
        raise ValueError(f"unknown partition scheme {scheme!r}")
    same_tiling = (row_splits == grid.row_splits and col_splits == grid.col_splits)
    if same_tiling:
        return grid
    cols = [grid.physical_column(j) for j in range(n)]
    blocks = []
    for bi in range(len(row_splits) - 1):
        r0, r1 = row_splits[bi], row_splits[bi + 1]
        band = []
        for bj in range(len(col_splits) - 1):
            c0, c1 = col_splits[bj], col_splits[bj + 1]
            rows = [[cols[j][i] for j in range(c0, c1)] for i in range(r0, r1)]
            band.append(_make_block(rows, c1 - c0))
        blocks.append(band)
    stats.bump("cells_copied", m * n)
    stats.bump("cross_block_moves", _moved_cells(grid, row_splits, col_splits))
    return PartitionGrid(blocks, row_splits, col_splits)


def _moved_cells(grid: PartitionGrid, row_splits, col_splits) -> int:
    """Cells whose block assignment differs between the two tilings."""
    stayed = 0
    old_r, old_c = grid.row_splits, grid.col_splits
    for bi in range(len(row_splits) - 1):
        r0, r1 = row_splits[bi], row_splits[bi + 1]
        if r0 in old_r and r1 in old_r and old_r.index(r1) == old_r.index(r0) + 1:
            for bj in range(len(col_splits) - 1):
                c0, c1 = col_splits[bj], col_splits[bj + 1]
                if (c0 in old_c and c1 in old_c
                        and old_c.index(c1) == old_c.index(c0) + 1):
                    stayed += (r1 - r0) * (c1 - c0)
    return grid.m * grid.n - stayed


def grid_from_columns(
    columns: Sequence[Sequence],
    m: int,
    block_shape: Optional[tuple] = None,
    stats: EngineStats = GLOBAL_STATS,
) -> PartitionGrid:
    """Blocks straight from freshly computed column lists."""
    target_r, target_c = block_shape or DEFAULT_BLOCK_SHAPE
    n = len(columns)
    row_splits = _splits(m, target_r)
    col_splits = _splits(n, target_c)
    blocks = []
    for bi in range(len(row_splits) - 1):
        r0, r1 = row_splits[bi], row_splits[bi + 1]
        band = []
        for bj in range(len(col_splits) - 1):
            c0, c1 = col_splits[bj], col_splits[bj + 1]
            rows = [[columns[j][i] for j in range(c0, c1)] for i in range(r0, r1)]
            band.append(_make_block(rows, c1 - c0))
        blocks.append(band)
    stats.bump("cells_copied", m * n)
    return PartitionGrid(blocks, row_splits, col_splits)


def reassemble(grid: PartitionGrid) -> list:
    """Physical columns back out of the blocks (copies, for verification)."""
    return [grid.physical_column(j) for j in range(grid.n)]
