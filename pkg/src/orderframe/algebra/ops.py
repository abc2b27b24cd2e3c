"""Operator kernels over Dataframe values.

Each function implements one logical operator's full order and metadata
contract. These are the single source of truth for semantics: the engine
calls them on compacted frames for blocking work, and the reference
evaluator composes them directly. Metadata operators (selection, sort,
head/tail, drop_duplicates, difference, projection, rename) share all cell
storage with their input and only rewrite the order vector or label arrays.
"""

from __future__ import annotations

import ast
import math
from typing import Optional, Sequence

import numpy as np

from ..errors import (
    AmbiguousLabel,
    ArityMismatch,
    IncomparableDomains,
    IndexOutOfBounds,
    UdfArityViolation,
    UdfFailure,
    UnknownColumn,
)
from ..model import (
    Cell,
    Dataframe,
    Domain,
    cell_text,
    induce_schema,
    is_null,
    parse,
    raw_form,
)
from ..stats import GLOBAL_STATS, EngineStats
from .plan import And, Cmp, IsNull, Not, Or, Predicate, SortSpec, TruePred, UdfSpec, WindowSpec

NUMERIC = (Domain.INT, Domain.FLOAT)


# === column resolution and typed access ===


def resolve_col(df: Dataframe, ref) -> int:
    """Single column: labels resolve to the first match in column order."""
    if isinstance(ref, bool):
        raise TypeError("column reference must be a label or a position")
    if isinstance(ref, int):
        if not 0 <= ref < df.n:
            raise IndexOutOfBounds(f"column {ref} out of range for {df.n} columns")
        return ref
    positions = df.col_positions(ref)
    if not positions:
        raise UnknownColumn(f"no column labeled {ref!r}")
    return positions[0]


def resolve_cols_all(df: Dataframe, ref) -> list[int]:
    """All matches for a label, or the single position."""
    if isinstance(ref, bool):
        raise TypeError("column reference must be a label or a position")
    if isinstance(ref, int):
        if not 0 <= ref < df.n:
            raise IndexOutOfBounds(f"column {ref} out of range for {df.n} columns")
        return [ref]
    positions = df.col_positions(ref)
    if not positions:
        raise UnknownColumn(f"no column labeled {ref!r}")
    return list(positions)


def column_domain(df: Dataframe, j: int, stats: EngineStats) -> Domain:
    dom = df.effective_domain(j)
    if dom is Domain.UNSPECIFIED:
        dom = df._induce_column(j, stats)
    return dom


def typed_column(df: Dataframe, j: int, stats: EngineStats) -> tuple[list, Domain]:
    """Column j parsed into its (possibly just induced) domain, logical order."""
    dom = column_domain(df, j, stats)
    return [parse(c, dom) for c in df.column(j)], dom


def _share(df: Dataframe, order: np.ndarray) -> Dataframe:
    """New frame over the same storage with a different order vector."""
    return Dataframe(
        [df.physical_column(j) for j in range(df.n)],
        row_labels=df.row_labels,
        col_labels=df.col_labels,
        schema=df.effective_schema(),
        order=order,
        m=df.physical_m,
    )


def _object_column(values: Sequence) -> np.ndarray:
    arr = np.empty(len(values), dtype=object)
    for i, v in enumerate(values):
        arr[i] = v
    return arr


# === predicates ===


def _parse_literal(literal, dom: Domain):
    """Literal parsed into the column's domain; numeric domains widen."""
    try:
        return parse(literal, dom), dom
    except Exception:
        if dom is Domain.INT:
            try:
                return parse(literal, Domain.FLOAT), Domain.FLOAT
            except Exception:
                pass
        return None, None


def eval_predicate(df: Dataframe, pred: Predicate, stats: EngineStats) -> np.ndarray:
    """Boolean survival mask over logical rows.

    Null cells fail every comparison, including ne; isnull is the only
    predicate that selects them. Comparing against a literal outside the
    column's domain makes eq constantly false and ne true on non-null rows;
    ordering comparisons raise instead of guessing.
    """
    m = df.m
    if isinstance(pred, TruePred):
        return np.ones(m, dtype=bool)
    if isinstance(pred, IsNull):
        j = resolve_col(df, pred.col)
        return np.fromiter((is_null(c) for c in df.column(j)), dtype=bool, count=m)
    if isinstance(pred, Not):
        return ~eval_predicate(df, pred.inner, stats)
    if isinstance(pred, And):
        return eval_predicate(df, pred.left, stats) & eval_predicate(df, pred.right, stats)
    if isinstance(pred, Or):
        return eval_predicate(df, pred.left, stats) | eval_predicate(df, pred.right, stats)
    if isinstance(pred, Cmp):
        j = resolve_col(df, pred.col)
        values, dom = typed_column(df, j, stats)
        lit, lit_dom = _parse_literal(pred.literal, dom)
        out = np.zeros(m, dtype=bool)
        if lit is None:
            if pred.op == "ne":
                for i, v in enumerate(values):
                    out[i] = v is not None
            elif pred.op != "eq":
                raise IncomparableDomains(
                    f"cannot order-compare {pred.literal!r} against a {dom.value} column"
                )
            return out
        if lit_dom is Domain.FLOAT and dom is Domain.INT:
            values = [None if v is None else float(v) for v in values]
        if pred.op in ("lt", "le", "gt", "ge") and isinstance(lit, Dataframe):
            raise IncomparableDomains("composite cells admit no ordering")
        for i, v in enumerate(values):
            if v is None:
                continue
            if isinstance(v, Dataframe):
                if pred.op in ("eq", "ne"):
                    eq = isinstance(lit, Dataframe) and raw_form(v) == raw_form(lit)
                    out[i] = eq if pred.op == "eq" else not eq
                    continue
                raise IncomparableDomains("composite cells admit no ordering")
            if pred.op == "eq":
                out[i] = v == lit
            elif pred.op == "ne":
                out[i] = v != lit
            elif pred.op == "lt":
                out[i] = v < lit
            elif pred.op == "le":
                out[i] = v <= lit
            elif pred.op == "gt":
                out[i] = v > lit
            else:
                out[i] = v >= lit
        return out
    raise TypeError(f"unknown predicate {pred!r}")


# === row-axis metadata operators ===


def selection(df: Dataframe, pred: Predicate, stats: EngineStats = GLOBAL_STATS) -> Dataframe:
    """Keep rows satisfying pred, in parent relative order; storage shared."""
    mask = eval_predicate(df, pred, stats)
    return _share(df, df.order[mask])


def selection_index(m: int, positions: Sequence[int]) -> list[int]:
    """Validated positional row selection: in range, no repeats."""
    idx = []
    seen = set()
    for p in positions:
        if not 0 <= p < m:
            raise IndexOutOfBounds(f"row position {p} out of range for {m} rows")
        if p in seen:
            raise IndexOutOfBounds(f"row position {p} repeated in selection")
        seen.add(p)
        idx.append(p)
    return idx


def selection_positions(
    df: Dataframe, positions: Sequence[int], stats: EngineStats = GLOBAL_STATS
) -> Dataframe:
    """Keep rows at the given logical positions, in the given sequence."""
    idx = selection_index(df.m, positions)
    order = df.order[idx] if idx else df.order[:0]
    return _share(df, order)


def head(df: Dataframe, k: int, stats: EngineStats = GLOBAL_STATS) -> Dataframe:
    if k < 0:
        raise IndexOutOfBounds(f"head size must be non-negative, got {k}")
    return _share(df, df.order[: min(k, df.m)])


def tail(df: Dataframe, k: int, stats: EngineStats = GLOBAL_STATS) -> Dataframe:
    if k < 0:
        raise IndexOutOfBounds(f"tail size must be non-negative, got {k}")
    k = min(k, df.m)
    return _share(df, df.order[df.m - k :])


def dedup_keep(df: Dataframe) -> list[int]:
    """Logical positions of first-occurrence rows, raw-value equality."""
    seen = set()
    keep = []
    for i in range(df.m):
        key = tuple(raw_form(c) for c in df.logical_row(i))
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return keep


def drop_duplicates(df: Dataframe, stats: EngineStats = GLOBAL_STATS) -> Dataframe:
    """First occurrence wins; equality on raw data values, labels excluded."""
    keep = dedup_keep(df)
    return _share(df, df.order[keep] if keep else df.order[:0])


def difference_keep(a: Dataframe, b: Dataframe) -> list[int]:
    """Logical positions of a's rows whose raw tuple never occurs in b."""
    if a.n != b.n:
        raise ArityMismatch(f"difference needs equal arity, got {a.n} and {b.n}")
    drop = {tuple(raw_form(c) for c in b.logical_row(i)) for i in range(b.m)}
    return [
        i
        for i in range(a.m)
        if tuple(raw_form(c) for c in a.logical_row(i)) not in drop
    ]


def difference(
    a: Dataframe, b: Dataframe, stats: EngineStats = GLOBAL_STATS
) -> Dataframe:
    """Rows of a absent from b (full raw tuple), parent order; multiset: every
    copy of a row present in b is removed from a."""
    keep = difference_keep(a, b)
    return _share(a, a.order[keep] if keep else a.order[:0])


def sort_permutation(
    df: Dataframe, spec: SortSpec, stats: EngineStats = GLOBAL_STATS
) -> list[int]:
    """Logical-position permutation realizing the sort, ties in parent order."""
    perm = list(range(df.m))
    for col, asc in reversed(spec.keys):
        j = resolve_col(df, col)
        values, _dom = typed_column(df, j, stats)
        for v in values:
            if isinstance(v, Dataframe):
                raise IncomparableDomains("cannot sort by a composite column")
        def key(i, values=values):
            v = values[i]
            return (0, 0) if v is None else (1, v)
        perm = sorted(perm, key=key, reverse=not asc)
    return perm


def sort(df: Dataframe, spec: SortSpec, stats: EngineStats = GLOBAL_STATS) -> Dataframe:
    """Stable lexicographic sort realized as an order-vector update.

    Ties keep parent order; nulls sort before every value (after, when
    descending). The cell grid is shared, never copied.
    """
    perm = sort_permutation(df, spec, stats)
    return _share(df, df.order[perm] if perm else df.order[:0])


# === column-axis metadata operators ===


def projection(df: Dataframe, refs: Sequence, stats: EngineStats = GLOBAL_STATS) -> Dataframe:
    """Keep columns in request order; a duplicated label keeps all matches."""
    js: list[int] = []
    for ref in refs:
        js.extend(resolve_cols_all(df, ref))
    schema = df.effective_schema()
    return Dataframe(
        [df.physical_column(j) for j in js],
        row_labels=df.row_labels,
        col_labels=[df.col_label_list()[j] for j in js],
        schema=[schema[j] for j in js],
        order=df.order,
        m=df.physical_m,
    )


def rename(df: Dataframe, mapping: Sequence[tuple], stats: EngineStats = GLOBAL_STATS) -> Dataframe:
    """Relabel columns; every match of an old label is renamed. Metadata only."""
    table = dict(mapping)
    labels = df.col_label_list()
    for old in table:
        if old not in labels:
            raise UnknownColumn(f"no column labeled {old!r}")
    return Dataframe(
        [df.physical_column(j) for j in range(df.n)],
        row_labels=df.row_labels,
        col_labels=[table.get(l, l) for l in labels],
        schema=df.effective_schema(),
        order=df.order,
        m=df.physical_m,
    )


def relabel_rows(
    df: Dataframe, mapping: Sequence[tuple], stats: EngineStats = GLOBAL_STATS
) -> Dataframe:
    """Row-label twin of rename, used by the transpose pull-up rewrite."""
    table = dict(mapping)
    present = set(df.row_label_list())
    for old in table:
        if old not in present:
            raise UnknownColumn(f"no row labeled {old!r}")
    new_labels = _object_column(
        [table.get(Dataframe._item(l), Dataframe._item(l)) for l in df.row_labels]
    )
    return Dataframe(
        [df.physical_column(j) for j in range(df.n)],
        row_labels=new_labels,
        col_labels=df.col_labels,
        schema=df.effective_schema(),
        order=df.order,
        m=df.physical_m,
    )


def sort_columns_permutation(df: Dataframe, spec: SortSpec) -> list[int]:
    """Column permutation for sort_columns: keys name rows, cells order columns."""
    perm = list(range(df.n))
    labels_logical = df.row_label_list()
    for row_label, asc in reversed(spec.keys):
        target = None
        for i, lab in enumerate(labels_logical):
            if lab == row_label:
                target = i
                break
        if target is None:
            raise UnknownColumn(f"no row labeled {row_label!r}")
        cells = df.logical_row(target)
        dom = induce_schema(cells)
        values = [parse(c, dom) for c in cells]
        for v in values:
            if isinstance(v, Dataframe):
                raise IncomparableDomains("cannot sort by a composite row")
        def key(j, values=values):
            v = values[j]
            return (0, 0) if v is None else (1, v)
        perm = sorted(perm, key=key, reverse=not asc)
    return perm


def sort_columns(
    df: Dataframe, spec: SortSpec, stats: EngineStats = GLOBAL_STATS
) -> Dataframe:
    """Reorder columns by the values in the named rows; zero cell copies.

    This is the column twin of sort, produced by rewriting transpose-sort-
    transpose. Each key names a row label; the row's cells are read as one
    induced domain, exactly as the sort would have seen them post-transpose.
    """
    perm = sort_columns_permutation(df, spec)
    schema = df.effective_schema()
    labels = df.col_label_list()
    return Dataframe(
        [df.physical_column(j) for j in perm],
        row_labels=df.row_labels,
        col_labels=[labels[j] for j in perm],
        schema=[schema[j] for j in perm],
        order=df.order,
        m=df.physical_m,
    )


# === combining operators ===


def align_union_labels(
    a_labels: list[str], b_labels: list[str], strict: bool
) -> Optional[list[str]]:
    """Output label sequence for union: a's labels, then b's unseen ones.

    Returns None when the sequences already match (no padding needed).
    This is the metadata half of the two-pass alignment: it needs only the
    label sets, never cell data.
    """
    if a_labels == b_labels:
        return None
    if strict:
        raise ArityMismatch(
            f"union column labels differ: {a_labels!r} vs {b_labels!r}"
        )
    if len(set(a_labels)) != len(a_labels) or len(set(b_labels)) != len(b_labels):
        raise ArityMismatch("union alignment over duplicate labels is ambiguous")
    return a_labels + [l for l in b_labels if l not in a_labels]


def union_column_pairs(
    a: Dataframe, b: Dataframe, strict: bool
) -> tuple[list[str], list[tuple]]:
    """Aligned output labels and per-column (a position, b position) pairs.

    A None position means that side contributes null padding; with matching
    label sequences the pairing is positional.
    """
    a_labels = a.col_label_list()
    b_labels = b.col_label_list()
    out_labels = align_union_labels(a_labels, b_labels, strict)
    if out_labels is None:
        if a.n != b.n:
            raise ArityMismatch(f"union needs equal arity, got {a.n} and {b.n}")
        return a_labels, [(j, j) for j in range(a.n)]
    a_pos = {l: j for j, l in enumerate(a_labels)}
    b_pos = {l: j for j, l in enumerate(b_labels)}
    return out_labels, [(a_pos.get(l), b_pos.get(l)) for l in out_labels]


def union_parts(
    a: Dataframe, b: Dataframe, strict: bool, stats: EngineStats
) -> tuple[list[list], list[str], list[str], list[Domain]]:
    """Output columns for union as plain value lists, plus labels and schema."""
    out_labels, pairs = union_column_pairs(a, b, strict)
    a_schema, b_schema = a.effective_schema(), b.effective_schema()
    cols, schema = [], []
    for ja, jb in pairs:
        values = (a.column(ja) if ja is not None else [None] * a.m) + (
            b.column(jb) if jb is not None else [None] * b.m
        )
        cols.append(values)
        if ja is not None and jb is not None:
            da, db = a_schema[ja], b_schema[jb]
            schema.append(da if da is db else Domain.UNSPECIFIED)
        elif ja is not None:
            schema.append(a_schema[ja])
        else:
            schema.append(b_schema[jb])
    row_labels = a.row_label_list() + b.row_label_list()
    return cols, row_labels, out_labels, schema


def union(
    a: Dataframe, b: Dataframe, strict: bool = False, stats: EngineStats = GLOBAL_STATS
) -> Dataframe:
    """Concatenate rows of a then b; labels from a; no deduplication.

    Differing label sets are outer-aligned (absent columns null-padded)
    unless strict, which raises instead.
    """
    cols, row_labels, out_labels, schema = union_parts(a, b, strict, stats)
    return Dataframe(
        [_object_column(c) for c in cols],
        row_labels=_object_column(row_labels),
        col_labels=out_labels,
        schema=schema,
        m=a.m + b.m,
    )


def _join_keys(
    df: Dataframe, js: list[int], stats: EngineStats
) -> tuple[list, list[Domain]]:
    columns = []
    doms = []
    for j in js:
        values, dom = typed_column(df, j, stats)
        columns.append(values)
        doms.append(dom)
    keys = []
    for i in range(df.m):
        keys.append(tuple(col[i] for col in columns))
    return keys, doms


def _comparable(da: Domain, db: Domain) -> bool:
    if da is db:
        return True
    return da in NUMERIC and db in NUMERIC


def join_parts(
    a: Dataframe,
    b: Dataframe,
    kind: str,
    on: Sequence[tuple],
    stats: EngineStats,
) -> tuple[list[list], list[str], list[str], list[Domain]]:
    """Full join assembly, column-oriented: (columns, row labels, column
    labels, schema). Output row count is the length of the row-label list."""
    if kind not in ("cross", "inner", "left"):
        raise ValueError(f"unknown join kind {kind!r}")
    if kind == "cross":
        pairs_per_left = [list(range(b.m))] * a.m
        b_keep = list(range(b.n))
        pad = False
    else:
        if not on:
            raise ValueError("inner/left join needs at least one column pair")
        a_js = [resolve_col(a, l) for l, _ in on]
        b_js = [resolve_col(b, r) for _, r in on]
        a_keys, a_doms = _join_keys(a, a_js, stats)
        b_keys, b_doms = _join_keys(b, b_js, stats)
        for da, db in zip(a_doms, b_doms):
            if not _comparable(da, db):
                raise IncomparableDomains(
                    f"cannot join {da.value} against {db.value}"
                )
        widen = [
            (da is Domain.INT) != (db is Domain.INT)
            for da, db in zip(a_doms, b_doms)
        ]

        def norm(key):
            out = []
            for v, w in zip(key, widen):
                if v is None:
                    return None  # null keys never match
                if isinstance(v, Dataframe):
                    out.append(raw_form(v))
                else:
                    out.append(float(v) if w and isinstance(v, (int, float)) else v)
            return tuple(out)

        index: dict = {}
        for i in range(b.m):
            key = norm(b_keys[i])
            if key is not None:
                index.setdefault(key, []).append(i)
        pairs_per_left = []
        for i in range(a.m):
            key = norm(a_keys[i])
            pairs_per_left.append(index.get(key, []) if key is not None else [])
        b_keep = [j for j in range(b.n) if j not in set(b_js)]
        pad = kind == "left"

    a_rows = [a.logical_row(i) for i in range(a.m)]
    b_rows = [b.logical_row(i) for i in range(b.m)]
    out_rows = []
    out_labels_r = []
    for i in range(a.m):
        matches = pairs_per_left[i]
        if not matches and pad:
            out_rows.append(a_rows[i] + [None] * len(b_keep))
            out_labels_r.append(a.logical_row_label(i))
            continue
        for r in matches:
            out_rows.append(a_rows[i] + [b_rows[r][j] for j in b_keep])
            out_labels_r.append(a.logical_row_label(i))

    a_schema, b_schema = a.effective_schema(), b.effective_schema()
    out_labels_c = a.col_label_list() + [b.col_label_list()[j] for j in b_keep]
    out_schema = list(a_schema) + [b_schema[j] for j in b_keep]
    n_out = len(out_labels_c)
    cols = [[row[j] for row in out_rows] for j in range(n_out)]
    return cols, out_labels_r, out_labels_c, out_schema


def join(
    a: Dataframe,
    b: Dataframe,
    kind: str = "cross",
    on: Sequence[tuple] = (),
    stats: EngineStats = GLOBAL_STATS,
) -> Dataframe:
    """Pair rows of a and b in nested left-major order.

    cross ignores `on`; inner keeps matching pairs; left also keeps
    unmatched left rows padded with nulls. Output columns are a's followed
    by b's, minus b's join columns for inner/left. Null keys never match.
    """
    cols, row_labels, col_labels, schema = join_parts(a, b, kind, on, stats)
    return Dataframe(
        [_object_column(c) for c in cols],
        row_labels=_object_column(row_labels),
        col_labels=col_labels,
        schema=schema,
        m=len(row_labels),
    )


# === groupby ===

AGGS = ("collect", "count", "sum", "mean", "min", "max")


def resolve_group_cols(
    df: Dataframe, keys: Sequence, targets: Optional[Sequence]
) -> tuple[list[int], list[int]]:
    """Key and target column positions; targets default to every non-key."""
    key_js = [resolve_col(df, k) for k in keys]
    key_set = set(key_js)
    if targets is None:
        target_js = [j for j in range(df.n) if j not in key_set]
    else:
        target_js = [resolve_col(df, t) for t in targets]
    return key_js, target_js


def group_rows(
    df: Dataframe, key_js: Sequence[int], base: int = 0
) -> tuple[list[int], list[list[int]], list[tuple]]:
    """First-occurrence grouping of logical rows under raw key equality.

    Returns each group's first logical row, its member list, and its raw
    key, all in first-occurrence parent order. base offsets the reported
    positions, so a slice grouped on its own can be merged into the whole.
    """
    key_cols = [df.column(j) for j in key_js]
    groups: dict = {}
    group_order: list = []
    member_lists: list = []
    keys_out: list = []
    for i in range(df.m):
        key = tuple(raw_form(col[i]) for col in key_cols)
        members = groups.get(key)
        if members is None:
            groups[key] = members = []
            group_order.append(base + i)
            member_lists.append(members)
            keys_out.append(key)
        members.append(base + i)
    return group_order, member_lists, keys_out


def aggregate_groups(
    df: Dataframe,
    agg: str,
    key_js: Sequence[int],
    target_js: Sequence[int],
    group_order: Sequence[int],
    member_lists: Sequence[Sequence[int]],
    stats: EngineStats,
) -> tuple[list[list], list[str], list[Domain]]:
    """Output columns for groupby given a precomputed grouping structure.

    Returns plain value lists; collect cells are sub-frames sharing the
    parent's storage. Float sums go through exact summation, so the result
    does not depend on how the members were batched before this call.
    """
    labels = df.col_label_list()
    schema = df.effective_schema()
    key_set = set(key_js)
    key_cols = [df.column(j) for j in key_js]
    out_cols = [[col[first] for first in group_order] for col in key_cols]
    out_labels = [labels[j] for j in key_js]
    out_schema = [schema[j] for j in key_js]

    if agg == "collect":
        nonkey = [j for j in range(df.n) if j not in key_set]
        sub_labels = [labels[j] for j in nonkey]
        sub_schema = [schema[j] for j in nonkey]
        cells = []
        for members in member_lists:
            cells.append(
                Dataframe(
                    [df.physical_column(j) for j in nonkey],
                    row_labels=df.row_labels,
                    col_labels=sub_labels,
                    schema=sub_schema,
                    order=df.order[list(members)],
                    m=df.physical_m,
                )
            )
        out_cols.append(cells)
        out_labels.append("collect")
        out_schema.append(Domain.UNSPECIFIED)
    elif agg == "count":
        out_cols.append([len(ms) for ms in member_lists])
        out_labels.append("count")
        out_schema.append(Domain.INT)
    else:
        for j in target_js:
            values, dom = typed_column(df, j, stats)
            if agg in ("sum", "mean") and dom not in NUMERIC:
                raise IncomparableDomains(
                    f"{agg} needs a numeric column, {labels[j]!r} is {dom.value}"
                )
            if agg in ("min", "max") and dom not in (
                Domain.INT, Domain.FLOAT, Domain.STR, Domain.CATEGORY, Domain.BOOL,
            ):
                raise IncomparableDomains(
                    f"{agg} cannot order a {dom.value} column"
                )
            cells = []
            for members in member_lists:
                vals = [values[i] for i in members if values[i] is not None]
                if any(isinstance(v, Dataframe) for v in vals):
                    raise IncomparableDomains("cannot aggregate composite cells")
                if not vals:
                    cells.append(None)
                elif agg == "sum":
                    if dom is Domain.FLOAT:
                        cells.append(math.fsum(vals))
                    else:
                        cells.append(sum(vals))
                elif agg == "mean":
                    cells.append(math.fsum(vals) / len(vals))
                elif agg == "min":
                    cells.append(min(vals))
                else:
                    cells.append(max(vals))
            out_cols.append(cells)
            out_labels.append(labels[j])
            if agg == "mean":
                out_schema.append(Domain.FLOAT)
            else:
                out_schema.append(dom)
    return out_cols, out_labels, out_schema


def groupby(
    df: Dataframe,
    keys: Sequence,
    agg: str,
    targets: Optional[Sequence] = None,
    stats: EngineStats = GLOBAL_STATS,
) -> Dataframe:
    """One row per distinct key tuple, in first-occurrence parent order.

    Key columns stay ordinary data columns. collect yields one composite
    cell per group holding the group's non-key columns in parent order with
    original row labels (the sub-frame shares the parent's storage). The
    numeric aggregates skip nulls; a group with no values yields null.
    count is the group's row count. Float sums use exact summation, so the
    result is independent of evaluation order.
    """
    if agg not in AGGS:
        raise ValueError(f"unknown aggregate {agg!r}")
    key_js, target_js = resolve_group_cols(df, keys, targets)
    group_order, member_lists, _keys = group_rows(df, key_js)
    out_cols, out_labels, out_schema = aggregate_groups(
        df, agg, key_js, target_js, group_order, member_lists, stats
    )
    return Dataframe(
        [_object_column(c) for c in out_cols],
        col_labels=out_labels,
        schema=out_schema,
        m=len(group_order),
    )


# === window ===


def window(
    df: Dataframe,
    spec: WindowSpec,
    targets: Optional[Sequence] = None,
    stats: EngineStats = GLOBAL_STATS,
) -> Dataframe:
    """Apply a sliding-window builtin along logical row order.

    Shape, labels, and order are preserved. diff and shift yield null at
    positions with no neighbor; the cumulatives and rolling_sum produce
    partial-window results. Null inputs yield null outputs and do not
    disturb the accumulator. reverse runs the window bottom-up.
    """
    if targets is None:
        target_js = list(range(df.n))
    else:
        target_js = []
        for t in targets:
            target_js.extend(resolve_cols_all(df, t))
    target_set = set(target_js)

    out_cols = []
    out_schema = []
    schema = df.effective_schema()
    for j in range(df.n):
        if j not in target_set:
            out_cols.append(df.column(j))
            out_schema.append(schema[j])
            continue
        values, dom = typed_column(df, j, stats)
        if spec.func != "shift" and dom not in NUMERIC:
            raise IncomparableDomains(
                f"window {spec.func} needs a numeric column, got {dom.value}"
            )
        if spec.reverse:
            values = list(reversed(values))
        out = _window_values(values, spec, dom)
        if spec.reverse:
            out = list(reversed(out))
        out_cols.append(out)
        out_schema.append(dom)  # every builtin stays in the input domain

    return Dataframe(
        [_object_column(c) for c in out_cols],
        row_labels=_object_column(df.row_label_list()),
        col_labels=df.col_labels,
        schema=out_schema,
        m=df.m,
    )


def _window_values(values: list, spec: WindowSpec, dom: Domain) -> list:
    m = len(values)
    out: list = [None] * m
    if spec.func == "cumsum":
        # sequential accumulation: float results depend on order, so every
        # execution path must walk rows in this exact sequence
        running = None
        for i, v in enumerate(values):
            if v is None:
                continue
            running = v if running is None else running + v
            out[i] = running
    elif spec.func == "cummax":
        best = None
        for i, v in enumerate(values):
            if v is None:
                continue
            best = v if best is None else max(best, v)
            out[i] = best
    elif spec.func == "diff":
        lag = spec.param if spec.param else 1
        for i in range(m):
            if i - lag < 0:
                continue
            cur, prev = values[i], values[i - lag]
            if cur is None or prev is None:
                continue
            out[i] = cur - prev
    elif spec.func == "shift":
        off = spec.param
        for i in range(m):
            src = i - off
            if 0 <= src < m:
                out[i] = values[src]
    elif spec.func == "rolling_sum":
        w = spec.param
        for i in range(m):
            window_vals = [
                v for v in values[max(0, i - w + 1) : i + 1] if v is not None
            ]
            if not window_vals:
                continue
            if dom is Domain.FLOAT:
                out[i] = math.fsum(window_vals)
            else:
                out[i] = sum(window_vals)
    else:
        raise ValueError(f"unknown window function {spec.func!r}")
    return out


# === transpose ===


def transpose(
    df: Dataframe,
    declared_schema: Optional[Sequence[Domain]] = None,
    stats: EngineStats = GLOBAL_STATS,
) -> Dataframe:
    """Swap axes: rows become columns, labels trade places.

    The output schema is all Unspecified (domains rarely survive a flip)
    unless the caller declares one. Output row order is the input column
    order and vice versa.
    """
    m, n = df.shape
    rows = [df.logical_row(i) for i in range(m)]
    out_cols = [_object_column(rows[i]) for i in range(m)]
    if declared_schema is not None:
        out_schema = tuple(declared_schema)
        if len(out_schema) != m:
            raise ArityMismatch(
                f"declared schema has {len(out_schema)} entries for {m} columns"
            )
    else:
        out_schema = (Domain.UNSPECIFIED,) * m
    return Dataframe(
        out_cols,
        row_labels=_object_column(df.col_label_list()),
        col_labels=_object_column(df.row_label_list()),
        schema=out_schema,
        m=n,
    )


# === map ===


def _find_composite_col(df: Dataframe) -> int:
    for j in range(df.n):
        col = df.column(j)
        if any(isinstance(c, Dataframe) for c in col):
            return j
    raise UnknownColumn("flatten needs a column of collected groups")


class _ArithExpr:
    """Arithmetic over columns: +, -, *, / with numeric literals and parens."""

    def __init__(self, text: str):
        self.text = text
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise UdfFailure(f"bad arithmetic expression {text!r}: {exc}") from exc
        self.root = tree.body
        self.names = sorted(
            {node.id for node in ast.walk(self.root) if isinstance(node, ast.Name)}
        )
        for node in ast.walk(self.root):
            if not isinstance(
                node,
                (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Name, ast.Constant,
                 ast.Add, ast.Sub, ast.Mult, ast.Div, ast.USub, ast.UAdd,
                 ast.expr_context),
            ):
                raise UdfFailure(
                    f"unsupported construct in arithmetic expression {text!r}"
                )
            if isinstance(node, ast.Constant) and not isinstance(
                node.value, (int, float)
            ):
                raise UdfFailure(f"non-numeric literal in {text!r}")

    def has_division(self) -> bool:
        return any(isinstance(n, ast.Div) for n in ast.walk(self.root))

    def eval_row(self, env: dict):
        def rec(node):
            if isinstance(node, ast.Expression):
                return rec(node.body)
            if isinstance(node, ast.Constant):
                return node.value
            if isinstance(node, ast.Name):
                return env[node.id]
            if isinstance(node, ast.UnaryOp):
                v = rec(node.operand)
                if v is None:
                    return None
                return -v if isinstance(node.op, ast.USub) else +v
            left, right = rec(node.left), rec(node.right)
            if left is None or right is None:
                return None
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            if right == 0:
                return None  # division by zero yields null, not an error
            return left / right

        return rec(self.root)


def map_parts(
    df: Dataframe, udf: UdfSpec, stats: EngineStats = GLOBAL_STATS
) -> tuple[list[list], Optional[list[str]], Optional[list]]:
    """Computed map output before frame assembly: (columns, labels, schema).

    A None label list means the input's labels carry over unchanged.
    """
    if udf.fn is not None:
        return _map_custom(df, udf, stats)
    name = udf.name
    if name == "fillna":
        return _map_fillna(df, udf.args[0], stats)
    if name == "isnull":
        return _map_isnull(df, stats)
    if name == "str_upper":
        return _map_str_upper(df, stats)
    if name == "arith":
        return _map_arith(df, udf.args[0], stats)
    if name == "one_hot":
        return _map_one_hot(df, udf.args[0], stats)
    if name == "flatten":
        return _map_flatten(df, udf.args[0], udf.args[1], stats)
    raise ValueError(f"unknown map builtin {name!r}")


def map_rows(df: Dataframe, udf: UdfSpec, stats: EngineStats = GLOBAL_STATS) -> Dataframe:
    """Row-wise function application; the output replaces the frame's columns.

    Row count and labels never change. fillna/isnull/str_upper keep the
    input arity; arith yields one column; one_hot and flatten have
    data-dependent arity discovered in a first pass over the data.
    """
    cols, labels, schema = map_parts(df, udf, stats)
    return _logical_frame(df, cols, labels=labels, schema=schema)


def _logical_frame(df, cols, labels=None, schema=None) -> Dataframe:
    return Dataframe(
        [_object_column(c) for c in cols],
        row_labels=_object_column(df.row_label_list()),
        col_labels=df.col_labels if labels is None else labels,
        schema=schema,
        m=df.m,
    )


def fillna_column(values: list, fill, dom: Domain) -> tuple[list, Domain]:
    """Null cells replaced by fill; the column's domain drops to Unspecified
    when the fill value does not parse into it. No-null columns pass through."""
    if not any(is_null(c) for c in values):
        return values, dom
    out = [fill if is_null(c) else c for c in values]
    if dom is not Domain.UNSPECIFIED:
        try:
            parse(fill, dom)
        except Exception:
            dom = Domain.UNSPECIFIED
    return out, dom


def _map_fillna(df: Dataframe, value, stats: EngineStats):
    schema = list(df.effective_schema())
    cols = []
    for j in range(df.n):
        col, schema[j] = fillna_column(df.column(j), value, schema[j])
        cols.append(col)
    return cols, None, schema


def _map_isnull(df: Dataframe, stats: EngineStats):
    cols = [[is_null(c) for c in df.column(j)] for j in range(df.n)]
    return cols, None, [Domain.BOOL] * df.n


def _map_str_upper(df: Dataframe, stats: EngineStats):
    cols = []
    for j in range(df.n):
        cols.append([None if is_null(c) else cell_text(c).upper() for c in df.column(j)])
    return cols, None, [Domain.STR] * df.n


def _map_arith(df: Dataframe, text: str, stats: EngineStats):
    expr = _ArithExpr(text)
    envs: list[dict] = [{} for _ in range(df.m)]
    all_int = not expr.has_division()
    for name in expr.names:
        j = resolve_col(df, name)
        values, dom = typed_column(df, j, stats)
        if dom not in NUMERIC:
            raise IncomparableDomains(
                f"arithmetic needs numeric columns, {name!r} is {dom.value}"
            )
        if dom is not Domain.INT:
            all_int = False
        for i in range(df.m):
            envs[i][name] = values[i]
    try:
        out = [expr.eval_row(env) for env in envs]
    except UdfFailure:
        raise
    except Exception as exc:
        raise UdfFailure(f"arithmetic expression {text!r} failed: {exc}") from exc
    return [out], [text], [Domain.INT if all_int else Domain.FLOAT]


def _map_one_hot(df: Dataframe, col, stats: EngineStats):
    j = resolve_col(df, col)
    values = df.column(j)
    # pass 1: discover the category set in first-occurrence order
    seen: dict[str, None] = {}
    for c in values:
        if not is_null(c) and not isinstance(c, Dataframe):
            seen.setdefault(raw_form(c), None)
    cats = list(seen)
    raw = [None if is_null(c) else raw_form(c) for c in values]
    # pass 2: indicators; a null input row is false everywhere
    cols = [[r == cat for r in raw] for cat in cats]
    return cols, cats, [Domain.BOOL] * len(cats)


def _map_flatten(df: Dataframe, key_col: str, value_col: str, stats: EngineStats):
    comp_j = _find_composite_col(df)
    composites = df.column(comp_j)
    # pass 1: the global key set, first occurrence over groups in logical order
    key_order: dict[str, str] = {}
    for comp in composites:
        if not isinstance(comp, Dataframe):
            continue
        kj = resolve_col(comp, key_col)
        for c in comp.column(kj):
            form = raw_form(c)
            if form not in key_order and not is_null(c):
                key_order[form] = cell_text(c)
    keys = list(key_order)
    # pass 2: one output column per key; other input columns pass through
    passthrough = [j for j in range(df.n) if j != comp_j]
    schema = df.effective_schema()
    out_cols = [df.column(j) for j in passthrough]
    out_labels = [df.col_label_list()[j] for j in passthrough]
    out_schema = [schema[j] for j in passthrough]
    unset = object()
    per_key: dict[str, list] = {k: [unset] * df.m for k in keys}
    for i, comp in enumerate(composites):
        if not isinstance(comp, Dataframe):
            continue
        kj = resolve_col(comp, key_col)
        vj = resolve_col(comp, value_col)
        kcol, vcol = comp.column(kj), comp.column(vj)
        for k_cell, v_cell in zip(kcol, vcol):
            if is_null(k_cell):
                continue
            slot = per_key[raw_form(k_cell)]
            if slot[i] is unset:
                slot[i] = v_cell  # first match within the group wins
    for k in keys:
        out_cols.append([None if v is unset else v for v in per_key[k]])
        out_labels.append(key_order[k])
        out_schema.append(Domain.UNSPECIFIED)
    return out_cols, out_labels, out_schema


def _map_custom(df: Dataframe, udf: UdfSpec, stats: EngineStats):
    rows_out = []
    arity = None if udf.output_labels is None else len(udf.output_labels)
    for i in range(df.m):
        try:
            result = list(udf.fn(df.logical_row(i)))
        except Exception as exc:
            raise UdfFailure(f"map function failed on row {i}: {exc}") from exc
        if arity is None:
            arity = len(result)
        if len(result) != arity:
            raise UdfArityViolation(
                f"row {i} returned {len(result)} cells, expected {arity}"
            )
        rows_out.append(result)
    if arity is None:
        arity = 0
    labels = (
        list(udf.output_labels)
        if udf.output_labels is not None
        else [f"f{j}" for j in range(arity)]
    )
    cols = [[row[j] for row in rows_out] for j in range(arity)]
    return cols, labels, None


# === label/data fluidity ===


def unique_col(df: Dataframe, label: str) -> int:
    """Position of the single column carrying this label; anything else raises."""
    positions = df.col_positions(label)
    if not positions:
        raise UnknownColumn(f"no column labeled {label!r}")
    if len(positions) > 1:
        raise AmbiguousLabel(f"column label {label!r} matches {len(positions)} columns")
    return positions[0]


def to_labels(df: Dataframe, label: str, stats: EngineStats = GLOBAL_STATS) -> Dataframe:
    """Promote one column to row labels; the label index stays unbuilt."""
    j = unique_col(df, label)
    source = df.physical_column(j)
    new_labels = _object_column([cell_text(Dataframe._item(v)) for v in source])
    keep = [x for x in range(df.n) if x != j]
    schema = df.effective_schema()
    return Dataframe(
        [df.physical_column(x) for x in keep],
        row_labels=new_labels,
        col_labels=[df.col_label_list()[x] for x in keep],
        schema=[schema[x] for x in keep],
        order=df.order,
        m=df.physical_m,
    )


def from_labels(df: Dataframe, label: str, stats: EngineStats = GLOBAL_STATS) -> Dataframe:
    """Demote row labels to a data column at position 0; labels reset to
    positional defaults."""
    phys = df.physical_m
    new_labels = np.empty(phys, dtype=object)
    new_labels[:] = ""
    if df.m:
        new_labels[df.order] = [str(i) for i in range(df.m)]
    return Dataframe(
        [df.row_labels] + [df.physical_column(j) for j in range(df.n)],
        row_labels=new_labels,
        col_labels=[label] + df.col_label_list(),
        schema=[Domain.UNSPECIFIED] + list(df.effective_schema()),
        order=df.order,
        m=phys,
    )


# === pivot macro (reference composition) ===


def pivot(
    df: Dataframe,
    pivot_col: str,
    key_col: str,
    value_col: str,
    stats: EngineStats = GLOBAL_STATS,
) -> Dataframe:
    """Elevate pivot_col's values into column labels.

    Composition of the four primitive steps; the planner expands the same
    macro so rewrites see the primitives.
    """
    for c in (pivot_col, key_col, value_col):
        resolve_col(df, c)
    if len({pivot_col, key_col, value_col}) != 3:
        raise ValueError("pivot needs three distinct columns")
    grouped = groupby(df, [pivot_col], "collect", stats=stats)
    flat = map_rows(grouped, UdfSpec("flatten", (key_col, value_col)), stats=stats)
    labeled = to_labels(flat, pivot_col, stats=stats)
    return transpose(labeled, stats=stats)
