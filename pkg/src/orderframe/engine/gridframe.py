"""Grid-backed frames: block storage plus order-vector metadata.

A GridFrame pairs an immutable PartitionGrid with row and column order
vectors, physical label arrays, and schema bookkeeping. It satisfies the
same read protocol as the value-model frame (column, col_positions,
effective_domain, induction), so predicate evaluation and the extracted
operator helpers run on it directly. Derivations share the grid; only
metadata changes hands.
"""

from __future__ import annotations

import threading
from typing import Optional, Sequence

import numpy as np

from ..model import Cell, Dataframe, Domain, induce_schema
from ..stats import GLOBAL_STATS, EngineStats
from .partition import PartitionGrid, partition, transpose_grid


def _object_array(values: Sequence) -> np.ndarray:
    arr = np.empty(len(values), dtype=object)
    for i, v in enumerate(values):
        arr[i] = v
    return arr


class GridFrame:
    __slots__ = (
        "grid", "_order", "_col_order", "_row_labels", "_col_labels",
        "_declared", "_induced", "_phys_cols", "_row_index", "_lock",
    )

    def __init__(self, grid: PartitionGrid, order, col_order,
                 row_labels, col_labels, declared: Optional[dict] = None,
                 phys_cols: Optional[dict] = None):
        self.grid = grid
        self._order = np.asarray(order, dtype=np.int64)
        self._col_order = np.asarray(col_order, dtype=np.int64)
        self._row_labels = row_labels
        self._col_labels = col_labels
        self._declared = dict(declared) if declared else {}
        self._induced = {}
        # physical column reads are cached per grid and shared by derivations
        self._phys_cols = phys_cols if phys_cols is not None else {}
        self._row_index = None
        self._lock = threading.Lock()

    # -- construction ----------------------------------------------------------

    @classmethod
    def from_dataframe(cls, df: Dataframe, block_shape=None,
                       stats: EngineStats = GLOBAL_STATS) -> "GridFrame":
        grid = partition(df, "blocks", block_shape, stats)
        # snapshot the source's effective schema, not just its declared one:
        # a downstream operator must see exactly the domains the frame would
        # report at hand-off time, induction memos included
        declared = {
            j: dom for j, dom in enumerate(df.effective_schema())
            if dom is not Domain.UNSPECIFIED
        }
        return cls(
            grid,
            np.array(df.order, dtype=np.int64),
            np.arange(df.n, dtype=np.int64),
            df.row_labels,
            df.col_labels,
            declared,
        )

    @classmethod
    def from_columns(cls, columns: Sequence[Sequence], m: int,
                     row_labels=None, col_labels=None, schema=None,
                     block_shape=None,
                     stats: EngineStats = GLOBAL_STATS) -> "GridFrame":
        """Fresh grid from computed logical columns (identity order)."""
        from .partition import grid_from_columns
        grid = grid_from_columns(columns, m, block_shape, stats)
        n = len(columns)
        if row_labels is None:
            row_labels = [str(i) for i in range(m)]
        if col_labels is None:
            col_labels = [str(j) for j in range(n)]
        declared = {}
        if schema is not None:
            declared = {
                j: dom for j, dom in enumerate(schema)
                if dom is not None and dom is not Domain.UNSPECIFIED
            }
        return cls(
            grid,
            np.arange(m, dtype=np.int64),
            np.arange(n, dtype=np.int64),
            _object_array([str(l) for l in row_labels]),
            _object_array([str(l) for l in col_labels]),
            declared,
        )

    def _known_domains(self) -> dict:
        known = dict(self._declared)
        with self._lock:
            known.update(self._induced)
        return known

    def _derive(self, order=None, col_order=None, row_labels=None,
                col_labels=None, declared=None) -> "GridFrame":
        # a derivation freezes what is known so far, exactly as the value
        # kernels bake effective schema into their outputs; later inductions
        # on the child stay local to the child
        return GridFrame(
            self.grid,
            self._order if order is None else order,
            self._col_order if col_order is None else col_order,
            self._row_labels if row_labels is None else row_labels,
            self._col_labels if col_labels is None else col_labels,
            self._known_domains() if declared is None else declared,
            phys_cols=self._phys_cols,
        )

    # -- shape and access ------------------------------------------------------

    @property
    def m(self) -> int:
        return len(self._order)

    @property
    def n(self) -> int:
        return len(self._col_order)

    @property
    def shape(self) -> tuple:
        return self.m, self.n

    @property
    def order(self) -> np.ndarray:
        return self._order

    @property
    def col_order(self) -> np.ndarray:
        return self._col_order

    @property
    def physical_m(self) -> int:
        return self.grid.m

    @property
    def row_labels(self) -> np.ndarray:
        return self._row_labels

    @property
    def col_labels(self) -> np.ndarray:
        return self._col_labels

    def _physical_column(self, pj: int) -> list:
        got = self._phys_cols.get(pj)
        if got is None:
            got = self.grid.physical_column(pj)
            self._phys_cols[pj] = got
        return got

    def physical_column(self, j: int) -> list:
        """Backing storage of logical column j, in physical row order."""
        return self._physical_column(int(self._col_order[j]))

    def cell(self, i: int, j: int) -> Cell:
        return self.grid.cell(self._order[i], self._col_order[j])

    def column(self, j: int) -> list:
        phys = self._physical_column(self._col_order[j])
        return [phys[p] for p in self._order]

    def column_slice(self, j: int, a: int, b: int) -> list:
        phys = self._physical_column(self._col_order[j])
        return [phys[p] for p in self._order[a:b]]

    def logical_row(self, i: int) -> list:
        p = self._order[i]
        return [self.grid.cell(p, pj) for pj in self._col_order]

    def rows(self) -> list:
        return [self.logical_row(i) for i in range(self.m)]

    def logical_row_label(self, i: int) -> str:
        return self._row_labels[self._order[i]]

    def row_label_list(self) -> list:
        return [self._row_labels[p] for p in self._order]

    def col_label_list(self) -> list:
        return [self._col_labels[pj] for pj in self._col_order]

    def col_positions(self, label: str) -> tuple:
        return tuple(
            j for j, pj in enumerate(self._col_order)
            if self._col_labels[pj] == label
        )

    def row_positions(self, label: str, stats: EngineStats = GLOBAL_STATS) -> tuple:
        with self._lock:
            if self._row_index is None:
                index: dict = {}
                for i, p in enumerate(self._order):
                    index.setdefault(self._row_labels[p], []).append(i)
                self._row_index = index
                stats.bump("label_index_builds")
        return tuple(self._row_index.get(label, ()))

    # -- schema ----------------------------------------------------------------

    def effective_domain(self, j: int) -> Domain:
        pj = self._col_order[j]
        dom = self._declared.get(pj)
        if dom is not None:
            return dom
        with self._lock:
            return self._induced.get(pj, Domain.UNSPECIFIED)

    def effective_schema(self) -> tuple:
        return tuple(self.effective_domain(j) for j in range(self.n))

    def _induce_column(self, j: int, stats: EngineStats) -> Domain:
        pj = int(self._col_order[j])
        dom = self._declared.get(pj)
        if dom is not None:
            return dom
        with self._lock:
            got = self._induced.get(pj)
            if got is not None:
                return got
            # induction sees logical rows only: filtered-out physical rows
            # must not influence the domain
            phys = self._physical_column(pj)
            induced = induce_schema(phys[p] for p in self._order)
            self._induced[pj] = induced
            stats.bump("s_invocations")
            stats.bump("scan_cell_visits", self.m)
            return induced

    def pin_domains(self, js: Sequence[int], stats: EngineStats) -> None:
        """Induce the named logical columns up front.

        Slices derived afterwards inherit the whole column's domain, so
        parallel workers never induce one from their own subset of rows.
        """
        for j in js:
            self._induce_column(j, stats)

    # -- column extension --------------------------------------------------------

    def append_columns(self, columns: Sequence[Sequence], labels: Sequence[str],
                       domains: Sequence[Optional[Domain]],
                       stats: EngineStats = GLOBAL_STATS) -> tuple:
        """Extend the grid with freshly computed logical columns.

        Existing blocks are shared untouched; only the new cells are
        written. Returns (frame, physical indices of the new columns); the
        caller decides where they sit in the logical column order.
        """
        k = len(columns)
        grid = self.grid
        big_m = grid.m
        phys_cols = []
        for values in columns:
            arr = [None] * big_m
            for i, p in enumerate(self._order):
                arr[p] = values[i]
            phys_cols.append(arr)
        from .partition import _make_block
        new_blocks = []
        for bi in range(len(grid.row_splits) - 1):
            r0, r1 = grid.row_splits[bi], grid.row_splits[bi + 1]
            rows = [[phys_cols[c][i] for c in range(k)] for i in range(r0, r1)]
            new_blocks.append(grid.blocks[bi] + [_make_block(rows, k)])
        n_phys = grid.n
        new_grid = PartitionGrid(
            new_blocks,
            grid.row_splits,
            grid.col_splits + [n_phys + k],
            transposed=grid.transposed,
        )
        stats.bump("cells_copied", self.m * k)
        new_labels = np.concatenate([
            self._col_labels,
            _object_array([str(l) for l in labels]),
        ]) if len(self._col_labels) else _object_array([str(l) for l in labels])
        declared = self._known_domains()
        for offset, dom in enumerate(domains):
            if dom is not None and dom is not Domain.UNSPECIFIED:
                declared[n_phys + offset] = dom
        # fresh physical-column cache: the new grid invalidates block identity
        out = GridFrame(
            new_grid, self._order, self._col_order,
            self._row_labels, new_labels, declared,
        )
        return out, list(range(n_phys, n_phys + k))

    # -- conversions -------------------------------------------------------------

    def transposed(self, declared_schema=None,
                   stats: EngineStats = GLOBAL_STATS) -> "GridFrame":
        """Swap axes: pure metadata, zero cell movement."""
        flipped = transpose_grid(self.grid, stats)
        declared = {}
        if declared_schema is not None:
            for j, dom in enumerate(declared_schema):
                if dom is not Domain.UNSPECIFIED:
                    declared[int(self._order[j])] = dom
        return GridFrame(
            flipped,
            np.array(self._col_order),
            np.array(self._order),
            self._col_labels,
            self._row_labels,
            declared,
        )

    def to_dataframe(self, stats: EngineStats = GLOBAL_STATS) -> Dataframe:
        """Materialize the logical view into a value-model frame."""
        cols = [_object_array(self.column(j)) for j in range(self.n)]
        stats.bump("cells_copied", self.m * self.n)
        return Dataframe(
            cols,
            row_labels=_object_array(self.row_label_list()),
            col_labels=_object_array(self.col_label_list()),
            schema=self.effective_schema(),
            m=self.m,
        )

    def __repr__(self) -> str:
        return f"GridFrame({self.m}x{self.n})"
