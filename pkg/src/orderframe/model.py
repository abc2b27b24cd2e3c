"""Value model: domains, cells, the immutable ordered frame, parsing, induction.

Cells are plain Python values. Raw text is str, typed scalars are int, float,
and bool, null is None, and a composite cell (produced by groupby-collect)
holds a nested Dataframe. The empty string is the null token in raw form, so
null checks treat "" and None alike.
"""

from __future__ import annotations

import enum
import itertools
import re
import threading
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    IndexOutOfBounds,
    LabelNotFound,
    ParseError,
)
from .stats import GLOBAL_STATS, EngineStats


class Domain(enum.Enum):
    STR = "Str"
    INT = "Int"
    FLOAT = "Float"
    BOOL = "Bool"
    CATEGORY = "Category"
    UNSPECIFIED = "Unspecified"

    def __repr__(self) -> str:
        return self.value


INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

_INT_RE = re.compile(r"[+-]?[0-9]+\Z")
# Deliberately narrower than float(): no nan/inf tokens, no underscores.
_FLOAT_RE = re.compile(r"[+-]?([0-9]+\.?[0-9]*|\.[0-9]+)([eE][+-]?[0-9]+)?\Z")
_BOOL_TOKENS = {"true": True, "false": False}

Cell = Union[str, int, float, bool, None, "Dataframe"]


def is_null(cell: Cell) -> bool:
    """Null in typed form is None; in raw form it is the empty string."""
    return cell is None or (isinstance(cell, str) and cell == "")


def cell_text(cell: Cell) -> str:
    """Canonical raw-text form of a cell, as written to CSV output."""
    if cell is None:
        return ""
    if isinstance(cell, str):
        return cell
    if isinstance(cell, bool):
        return "true" if cell else "false"
    if isinstance(cell, int):
        return str(cell)
    if isinstance(cell, float):
        return repr(cell)
    if isinstance(cell, Dataframe):
        return f"[{cell.m}x{cell.n} frame]"
    raise TypeError(f"not a cell value: {cell!r}")


def raw_form(cell: Cell):
    """Hashable comparison key under raw-value equality.

    Typed scalars compare equal to the raw text they print as, nulls compare
    equal to the empty string, and composites compare structurally.
    """
    if isinstance(cell, Dataframe):
        return cell.signature()
    return cell_text(cell)


def parse(cell: Cell, dom: Domain) -> Cell:
    """Interpret a raw or null cell as a member of dom.

    Typed cells already in dom pass through, so re-parsing a parsed column is
    harmless. Raises ParseError when the text is not a member of dom.
    """
    if is_null(cell):
        return None
    if isinstance(cell, Dataframe):
        if dom in (Domain.STR, Domain.CATEGORY, Domain.UNSPECIFIED):
            return cell
        raise ParseError(f"composite cell is not a member of {dom.value}")
    if dom in (Domain.STR, Domain.CATEGORY, Domain.UNSPECIFIED):
        return cell if isinstance(cell, str) else cell_text(cell)
    if dom is Domain.INT:
        if isinstance(cell, bool):
            raise ParseError(f"{cell!r} is not a member of Int")
        if isinstance(cell, int):
            return cell
        if isinstance(cell, str) and _INT_RE.match(cell):
            value = int(cell)
            if INT64_MIN <= value <= INT64_MAX:
                return value
        raise ParseError(f"{cell!r} is not a member of Int")
    if dom is Domain.FLOAT:
        if isinstance(cell, bool):
            raise ParseError(f"{cell!r} is not a member of Float")
        if isinstance(cell, (int, float)):
            return float(cell)
        if isinstance(cell, str) and _FLOAT_RE.match(cell):
            return float(cell)
        raise ParseError(f"{cell!r} is not a member of Float")
    if dom is Domain.BOOL:
        if isinstance(cell, bool):
            return cell
        if isinstance(cell, str) and cell.lower() in _BOOL_TOKENS:
            return _BOOL_TOKENS[cell.lower()]
        raise ParseError(f"{cell!r} is not a member of Bool")
    raise ParseError(f"unknown domain {dom!r}")


def _int_member(cell: Cell) -> bool:
    if isinstance(cell, bool) or isinstance(cell, (float, Dataframe)):
        return False
    if isinstance(cell, int):
        return True
    return bool(_INT_RE.match(cell)) and INT64_MIN <= int(cell) <= INT64_MAX


def _float_member(cell: Cell) -> bool:
    if isinstance(cell, bool) or isinstance(cell, Dataframe):
        return False
    if isinstance(cell, (int, float)):
        return True
    return bool(_FLOAT_RE.match(cell))


def _bool_member(cell: Cell) -> bool:
    if isinstance(cell, bool):
        return True
    return isinstance(cell, str) and cell.lower() in _BOOL_TOKENS


class DomainNarrower:
    """Incremental form of schema induction: feed cells one at a time.

    Exists so ingestion can run induction inside its own pass over the data
    instead of re-scanning columns afterwards. domain() may be read at any
    point; feeding more cells only ever narrows further.
    """

    __slots__ = ("_int", "_float", "_bool", "_saw_value")

    def __init__(self):
        self._int = self._float = self._bool = True
        self._saw_value = False

    def feed(self, cell: Cell) -> None:
        if is_null(cell):
            return
        self._saw_value = True
        if self._int:
            self._int = _int_member(cell)
        if self._float:
            self._float = _float_member(cell)
        if self._bool:
            self._bool = _bool_member(cell)

    def domain(self) -> Domain:
        # precedence: Int, then Float, then Bool, then Str; all-null is Str
        if not self._saw_value:
            return Domain.STR
        if self._int:
            return Domain.INT
        if self._float:
            return Domain.FLOAT
        if self._bool:
            return Domain.BOOL
        return Domain.STR


def induce_schema(column: Iterable[Cell]) -> Domain:
    """Assign a domain to a column of cells.

    Precedence: all non-null members of Int, else all of Float, else all of
    Bool, else Str. All-null columns induce Str. Never returns Unspecified or
    Category; Category is reachable only by explicit cast.
    """
    narrower = DomainNarrower()
    for cell in column:
        narrower.feed(cell)
        if not (narrower._int or narrower._float or narrower._bool):
            return Domain.STR
    return narrower.domain()


_uid_counter = itertools.count(1)


def _as_label_array(labels: Sequence[str], length: int, what: str) -> np.ndarray:
    if isinstance(labels, np.ndarray):
        arr = labels
    else:
        labels = list(labels)
        for item in labels:
            if not isinstance(item, str):
                raise TypeError(f"{what} labels must be strings, got {item!r}")
        arr = np.array(labels, dtype=object) if labels else np.empty(0, dtype=object)
    if arr.ndim != 1 or len(arr) != length:
        raise ValueError(f"expected {length} {what} labels, got {len(arr)}")
    arr = arr.copy() if arr.flags.writeable else arr
    arr.setflags(write=False)
    return arr


def default_labels(m: int) -> np.ndarray:
    """Positional labels "0".."m-1"."""
    if m == 0:
        return np.empty(0, dtype=object)
    arr = np.arange(m).astype(str)
    arr.setflags(write=False)
    return arr


def _as_column_array(values, m: int) -> np.ndarray:
    if isinstance(values, np.ndarray):
        if values.ndim != 1 or len(values) != m:
            raise ValueError(f"column must be 1-d of length {m}")
        arr = values
    else:
        values = list(values)
        if len(values) != m:
            raise ValueError(f"column must have {m} cells, got {len(values)}")
        if all(type(v) is str for v in values):
            arr = np.array(values, dtype=str) if values else np.empty(0, dtype="U1")
        else:
            arr = np.empty(m, dtype=object)
            for i, v in enumerate(values):
                if isinstance(v, np.generic):
                    v = v.item()
                arr[i] = v
    if arr.flags.writeable:
        arr = arr.copy() if arr.base is not None else arr
    arr.setflags(write=False)
    return arr


class Dataframe:
    """Immutable labeled cell grid with a logical row-order vector.

    The grid is stored as a tuple of column arrays. The order vector maps
    logical row position to physical storage position; it may reference a
    subset of physical rows, so filtering, deduplication, head/tail, and
    reordering are all metadata updates that never touch cells. The logical
    row count m is the length of the order vector, not of the storage. Row
    labels are stored in physical order alongside the columns and follow
    their rows through any reorder. Labels are strings and need not be
    unique. Operators return new frames; point updates share every untouched
    column with their input.
    """

    __slots__ = (
        "_cols", "_phys", "_row_labels", "_col_labels", "_schema", "_order",
        "uid", "_induced", "_row_index", "_lock",
    )

    def __init__(
        self,
        columns: Sequence,
        row_labels: Optional[Sequence[str]] = None,
        col_labels: Optional[Sequence[str]] = None,
        schema: Optional[Sequence[Domain]] = None,
        order: Optional[Sequence[int]] = None,
        m: Optional[int] = None,
    ):
        # m names the PHYSICAL storage length and is only needed for frames
        # with no columns; with columns present it is taken from them.
        cols = list(columns)
        if cols:
            phys = len(cols[0]) if not isinstance(cols[0], np.ndarray) else cols[0].shape[0]
        elif m is not None:
            phys = int(m)
        else:
            raise ValueError("m is required for a frame with no columns")
        self._phys = phys
        self._cols = tuple(_as_column_array(c, phys) for c in cols)
        n = len(self._cols)

        if row_labels is None:
            self._row_labels = default_labels(phys)
        else:
            self._row_labels = _as_label_array(row_labels, phys, "row")
        if col_labels is None:
            self._col_labels = default_labels(n)
        else:
            self._col_labels = _as_label_array(col_labels, n, "column")

        if schema is None:
            self._schema = (Domain.UNSPECIFIED,) * n
        else:
            self._schema = tuple(schema)
            if len(self._schema) != n:
                raise ValueError(f"schema must have {n} entries")
            for dom in self._schema:
                if not isinstance(dom, Domain):
                    raise TypeError(f"schema entries must be Domain, got {dom!r}")

        if order is None:
            self._order = np.arange(phys, dtype=np.int64)
        else:
            self._order = np.ascontiguousarray(order, dtype=np.int64)
            if self._order.ndim != 1:
                raise ValueError("order vector must be one-dimensional")
            if len(self._order):
                if self._order.min() < 0 or self._order.max() >= phys:
                    raise ValueError("order vector references rows outside storage")
                counts = np.bincount(self._order, minlength=phys)
                if (counts > 1).any():
                    raise ValueError("order vector must not repeat a physical row")
        self._order.setflags(write=False)

        self.uid = next(_uid_counter)
        self._induced: dict[int, Domain] = {}
        self._row_index: Optional[dict] = None
        self._lock = threading.Lock()

    # -- shape and metadata -------------------------------------------------

    @property
    def m(self) -> int:
        return len(self._order)

    @property
    def n(self) -> int:
        return len(self._cols)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self._order), len(self._cols))

    @property
    def physical_m(self) -> int:
        return self._phys

    @property
    def row_labels(self) -> np.ndarray:
        return self._row_labels

    @property
    def col_labels(self) -> np.ndarray:
        return self._col_labels

    @property
    def schema(self) -> tuple[Domain, ...]:
        return self._schema

    @property
    def order(self) -> np.ndarray:
        return self._order

    def order_is_identity(self) -> bool:
        return len(self._order) == self._phys and bool(
            (self._order == np.arange(self._phys)).all()
        )

    def physical_column(self, j: int) -> np.ndarray:
        """Backing array of column j, in physical storage order."""
        return self._cols[j]

    # -- cell access ---------------------------------------------------------

    @staticmethod
    def _item(value):
        return value.item() if isinstance(value, np.generic) else value

    def cell(self, i: int, j: int) -> Cell:
        """Cell at logical row i, column j."""
        return self._item(self._cols[j][self._order[i]])

    def column(self, j: int) -> list:
        """Cells of column j in logical row order."""
        arr = self._cols[j]
        return [self._item(arr[p]) for p in self._order]

    def logical_row(self, i: int) -> list:
        phys = self._order[i]
        return [self._item(col[phys]) for col in self._cols]

    def rows(self) -> list[list]:
        return [self.logical_row(i) for i in range(len(self._order))]

    def logical_row_label(self, i: int) -> str:
        # Row labels are stored in physical order, same as columns, so a sort
        # that only rewrites the order vector carries its labels for free.
        return self._item(self._row_labels[self._order[i]])

    def row_label_list(self) -> list[str]:
        return [self.logical_row_label(i) for i in range(len(self._order))]

    def col_label_list(self) -> list[str]:
        return [self._item(v) for v in self._col_labels]

    # -- label resolution ----------------------------------------------------

    def col_positions(self, label: str) -> tuple[int, ...]:
        return tuple(
            j for j in range(len(self._cols)) if self._item(self._col_labels[j]) == label
        )

    def row_positions(self, label: str, stats: EngineStats = GLOBAL_STATS) -> tuple[int, ...]:
        """Logical positions of rows labeled `label`, in logical order.

        The label index is built lazily on the first named lookup and cached;
        the build is visible through the label_index_builds counter.
        """
        with self._lock:
            if self._row_index is None:
                index: dict[str, list[int]] = {}
                for i, phys in enumerate(self._order):
                    index.setdefault(self._item(self._row_labels[phys]), []).append(i)
                self._row_index = {k: tuple(v) for k, v in index.items()}
                stats.bump("label_index_builds")
        return self._row_index.get(label, ())

    # -- schema bookkeeping ---------------------------------------------------

    def effective_schema(self) -> tuple[Domain, ...]:
        """Constructed schema overlaid with any domains induced since."""
        with self._lock:
            if not self._induced:
                return self._schema
            return tuple(
                self._induced.get(j, dom) if dom is Domain.UNSPECIFIED else dom
                for j, dom in enumerate(self._schema)
            )

    def effective_domain(self, j: int) -> Domain:
        dom = self._schema[j]
        if dom is not Domain.UNSPECIFIED:
            return dom
        with self._lock:
            return self._induced.get(j, Domain.UNSPECIFIED)

    def _induce_column(self, j: int, stats: EngineStats) -> Domain:
        with self._lock:
            dom = self._schema[j]
            if dom is not Domain.UNSPECIFIED:
                return dom
            if j in self._induced:
                return self._induced[j]
            # induction sees logical rows only: filtered-out physical rows
            # must not influence the domain
            arr = self._cols[j]
            induced = induce_schema(self._item(arr[p]) for p in self._order)
            self._induced[j] = induced
            stats.bump("s_invocations")
            stats.bump("scan_cell_visits", len(self._order))
            return induced

    def signature(self):
        """Structural identity under raw-value equality (labels included)."""
        return (
            tuple(self.col_label_list()),
            tuple(self.row_label_list()),
            tuple(tuple(raw_form(c) for c in row) for row in self.rows()),
        )

    def compact(self) -> "Dataframe":
        """Materialize the logical view into identity-order storage."""
        if self.order_is_identity():
            return self
        order = self._order
        cols = []
        for j in range(self.n):
            arr = self._cols[j][order] if len(order) else self._cols[j][:0]
            cols.append(arr)
        labels = self._row_labels[order] if len(order) else self._row_labels[:0]
        return Dataframe(
            cols,
            row_labels=labels,
            col_labels=self._col_labels,
            schema=self.effective_schema(),
            m=len(order),
        )

    def __repr__(self) -> str:
        return f"Dataframe({len(self._order)}x{len(self._cols)})"


def induce_all(
    df: Dataframe,
    cols: Optional[Iterable[int]] = None,
    stats: EngineStats = GLOBAL_STATS,
) -> Dataframe:
    """Fill in schema entries for the requested columns.

    Induction runs once per column per frame: results are cached on the frame,
    so repeated calls do not re-invoke S or bump its counter. Returns df
    unchanged when every requested column already has a domain.
    """
    targets = range(df.n) if cols is None else list(cols)
    changed = False
    for j in targets:
        if df.schema[j] is Domain.UNSPECIFIED:
            df._induce_column(j, stats)
            changed = True
    if not changed:
        return df
    return Dataframe(
        [df.physical_column(j) for j in range(df.n)],
        row_labels=df.row_labels,
        col_labels=df.col_labels,
        schema=df.effective_schema(),
        order=df.order,
        m=df.physical_m,
    )


def cell_equal(a: Cell, b: Cell) -> bool:
    """Exact typed equality: 1, 1.0, "1", and true are all distinct."""
    if isinstance(a, Dataframe) or isinstance(b, Dataframe):
        return (
            isinstance(a, Dataframe)
            and isinstance(b, Dataframe)
            and cells_equal(a, b)
        )
    if a is None or b is None:
        return a is None and b is None
    if type(a) is not type(b):
        return False
    if isinstance(a, float):
        return a == b or (a != a and b != b)
    return a == b


def cells_equal(a: Dataframe, b: Dataframe) -> bool:
    """Cellwise typed equality including labels and logical order."""
    if a.shape != b.shape:
        return False
    if a.col_label_list() != b.col_label_list():
        return False
    if a.row_label_list() != b.row_label_list():
        return False
    for i in range(a.m):
        ra, rb = a.logical_row(i), b.logical_row(i)
        for x, y in zip(ra, rb):
            if not cell_equal(x, y):
                return False
    return True


def _resolve_rows(df: Dataframe, sel, stats: EngineStats) -> list[int]:
    if isinstance(sel, bool):
        raise TypeError("row selector must be an int position or a str label")
    if isinstance(sel, int):
        if not 0 <= sel < df.m:
            raise IndexOutOfBounds(f"row {sel} out of range for {df.m} rows")
        return [sel]
    if isinstance(sel, str):
        positions = df.row_positions(sel, stats)
        if not positions:
            raise LabelNotFound(f"no row labeled {sel!r}")
        return list(positions)
    raise TypeError(f"row selector must be int or str, got {sel!r}")


def _resolve_cols(df: Dataframe, sel) -> list[int]:
    if isinstance(sel, bool):
        raise TypeError("column selector must be an int position or a str label")
    if isinstance(sel, int):
        if not 0 <= sel < df.n:
            raise IndexOutOfBounds(f"column {sel} out of range for {df.n} columns")
        return [sel]
    if isinstance(sel, str):
        positions = df.col_positions(sel)
        if not positions:
            raise LabelNotFound(f"no column labeled {sel!r}")
        return list(positions)
    raise TypeError(f"column selector must be int or str, got {sel!r}")


def point_get(df: Dataframe, row_sel, col_sel, stats: EngineStats = GLOBAL_STATS) -> Cell:
    """Read one cell; named selectors resolve to the first match in logical order."""
    i = _resolve_rows(df, row_sel, stats)[0]
    j = _resolve_cols(df, col_sel)[0]
    return df.cell(i, j)


def point_set(
    df: Dataframe, row_sel, col_sel, value: Cell, stats: EngineStats = GLOBAL_STATS
) -> Dataframe:
    """Write one address; named selectors update every match.

    Returns a new frame sharing all untouched columns. A touched column keeps
    its domain only if the new value parses under it; otherwise the column
    reverts to Unspecified.
    """
    if isinstance(value, np.generic):
        value = value.item()
    rows = _resolve_rows(df, row_sel, stats)
    cols = _resolve_cols(df, col_sel)
    schema = list(df.effective_schema())
    new_cols = list(df._cols)
    for j in cols:
        arr = np.array(df.physical_column(j), dtype=object)
        for i in rows:
            arr[df.order[i]] = value
        arr.setflags(write=False)
        new_cols[j] = arr
        if schema[j] is not Domain.UNSPECIFIED:
            try:
                parse(value, schema[j])
            except ParseError:
                schema[j] = Domain.UNSPECIFIED
    return Dataframe(
        new_cols,
        row_labels=df.row_labels,
        col_labels=df.col_labels,
        schema=schema,
        order=df.order,
        m=df.physical_m,
    )
