"""Plan execution over block-partitioned storage.

The engine evaluates logical plans against GridFrames. Metadata operators
(selection, sort, head, tail, projection, rename, drop_duplicates,
difference, transpose, to_labels, sort_columns) touch only order vectors
and label arrays; value kernels (union, join, groupby, window, map) build
fresh grids through the shared operator helpers, so their semantics are the
reference evaluator's by construction.

Three drive modes. eager evaluates the whole plan at submit and surfaces
errors there. lazy does nothing until the first observation, then does
only the work that observation demands: a plan whose every stage passes
the streaming gate is pulled batch by batch, so a prefix observation stops
after a bounded number of source partitions. opportunistic is lazy plus a
background worker that fills in results while the caller is idle, yielding
to demanding threads between batches.

A pipeline streams only when its output labels and schema are computable
without touching cell data and every stage is a transducer; anything else
falls back to whole-plan materialization, which is exactly the reference
semantics. There is no mixed mode: a half-streamed plan could pin down
induced domains differently from the kernels and silently change typed
results, so the gate is all or nothing.

Evaluated subplans land in a digest-keyed cache shared across statements;
an identical subexpression submitted later reuses the stored grid instead
of re-running its kernel. Scan conversions are pinned per source frame for
the engine's lifetime and never evicted, so cache pressure cannot force a
re-partition of an input.
"""

from __future__ import annotations

import math
import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from time import perf_counter
from typing import Optional, Sequence

import numpy as np

from ..algebra import ops
from ..algebra.plan import (
    And,
    Cmp,
    IsNull,
    Not,
    Or,
    Plan,
    TruePred,
    UdfSpec,
)
from ..errors import (
    ArityMismatch,
    IncomparableDomains,
    IndexOutOfBounds,
    UnknownColumn,
)
from ..model import Dataframe, Domain, cell_text, is_null, parse, raw_form
from ..stats import EngineStats
from .cache import DEFAULT_BUDGET, MaterializationCache
from .gridframe import GridFrame
from .partition import DEFAULT_BLOCK_SHAPE, PartitionGrid

MODES = ("eager", "lazy", "opportunistic")


def _order_unique(gf: GridFrame) -> bool:
    # duplicated projection refs can put the same physical row into the
    # logical order twice; positional writes would then collapse
    return len(np.unique(gf.order)) == len(gf.order)


def _chunk_frame(rows, rlabels, labels, schema) -> Dataframe:
    """One stream batch as a throwaway frame for the operator helpers."""
    cols = [
        ops._object_column([row[j] for row in rows])
        for j in range(len(labels))
    ]
    return Dataframe(
        cols,
        row_labels=ops._object_column([str(l) for l in rlabels]),
        col_labels=list(labels),
        schema=list(schema),
        m=len(rows),
    )


class _StreamSpec:
    """A statically checked streamable pipeline.

    labels and schema are fixed before any cell is read; factory() starts a
    fresh pass yielding (rows, row_labels) batches in logical order.
    """

    __slots__ = ("labels", "schema", "factory")

    def __init__(self, labels, schema, factory):
        self.labels = list(labels)
        self.schema = list(schema)
        self.factory = factory


class _WindowChannel:
    """One column's window state carried across stream batches.

    Performs the same arithmetic in the same order as the whole-column
    kernel, so batch boundaries are invisible in the output; only the last
    few values needed by positional lookback are retained.
    """

    __slots__ = ("_func", "_dom", "_acc", "_back", "_tail")

    def __init__(self, spec, dom: Domain):
        self._func = spec.func
        self._dom = dom
        self._acc = None
        if spec.func == "diff":
            self._back = spec.param if spec.param else 1
        elif spec.func == "shift":
            self._back = spec.param
        elif spec.func == "rolling_sum":
            self._back = spec.param - 1
        else:
            self._back = 0
        self._tail: list = []

    def feed(self, values: list) -> list:
        func = self._func
        if func == "cumsum":
            out = []
            for v in values:
                if v is None:
                    out.append(None)
                    continue
                self._acc = v if self._acc is None else self._acc + v
                out.append(self._acc)
            return out
        if func == "cummax":
            out = []
            for v in values:
                if v is None:
                    out.append(None)
                    continue
                self._acc = v if self._acc is None else max(self._acc, v)
                out.append(self._acc)
            return out
        # positional lookback: while fewer than _back values have streamed
        # past, the buffer is shorter and local indexes equal absolute ones,
        # so a negative lookback index means "before the start" in both
        # regimes
        ext = self._tail + list(values)
        base = len(self._tail)
        out = []
        if func == "diff":
            lag = self._back
            for bi in range(base, len(ext)):
                pi = bi - lag
                if pi < 0:
                    out.append(None)
                    continue
                cur, prev = ext[bi], ext[pi]
                out.append(None if cur is None or prev is None else cur - prev)
        elif func == "shift":
            off = self._back
            for bi in range(base, len(ext)):
                pi = bi - off
                out.append(ext[pi] if pi >= 0 else None)
        elif func == "rolling_sum":
            w = self._back + 1
            for bi in range(base, len(ext)):
                window_vals = [
                    v for v in ext[max(0, bi - w + 1): bi + 1] if v is not None
                ]
                if not window_vals:
                    out.append(None)
                elif self._dom is Domain.FLOAT:
                    out.append(math.fsum(window_vals))
                else:
                    out.append(sum(window_vals))
        else:
            raise ValueError(f"unknown window function {func!r}")
        if self._back > 0:
            self._tail = ext[-self._back:]
        return out


_SPEC_PENDING = object()


class Handle:
    """A submitted statement's result, observable while it computes.

    result() and grid() force completion; prefix(k) forces only the work
    the first k rows need when the plan streams. Errors raised during
    evaluation are stored and re-raised at observation (eager mode raises
    at submit instead).
    """

    def __init__(self, engine: "Engine", plan: Plan, allow_stream: bool):
        self._engine = engine
        self.plan = plan
        self.digest = plan.digest()
        self._allow_stream = allow_stream
        self._work = threading.Lock()
        self._done = threading.Event()
        self._spec = _SPEC_PENDING
        self._iter = None
        self._batches: list = []
        self._rows = 0
        self._grid: Optional[GridFrame] = None
        self._result: Optional[Dataframe] = None
        self._error: Optional[BaseException] = None

    # -- drive -----------------------------------------------------------------

    def _resolve_spec(self) -> None:
        # called under the work lock, once
        if self._spec is _SPEC_PENDING:
            if self._allow_stream:
                try:
                    self._spec = self._engine._stream_spec(self.plan)
                except Exception:
                    # any failure of the static analysis means the gate is
                    # closed, not that the plan is wrong; the materializing
                    # path reproduces real errors exactly
                    self._spec = None
            else:
                self._spec = None

    def _drive(self, target: Optional[int]) -> None:
        """Advance until done, or until `target` rows are buffered.

        The work lock is released between batches, so another thread
        demanding this handle waits at most one batch.
        """
        while not self._done.is_set():
            with self._work:
                if self._done.is_set():
                    return
                self._resolve_spec()
                if self._spec is None:
                    try:
                        self._grid = self._engine._evaluate_root(self.plan)
                    except BaseException as exc:
                        self._error = exc
                    self._done.set()
                    return
                if target is not None and self._rows >= target:
                    return
                if self._iter is None:
                    self._iter = self._spec.factory()
                try:
                    batch = next(self._iter)
                except StopIteration:
                    try:
                        self._grid = self._engine._assemble(
                            self._spec, self._batches
                        )
                    except BaseException as exc:
                        self._error = exc
                    self._done.set()
                    return
                except BaseException as exc:
                    self._error = exc
                    self._done.set()
                    return
                self._batches.append(batch)
                self._rows += len(batch[0])

    # -- observation -----------------------------------------------------------

    def done(self) -> bool:
        return self._done.is_set()

    def grid(self) -> GridFrame:
        self._drive(None)
        if self._error is not None:
            raise self._error
        return self._grid

    def result(self) -> Dataframe:
        self._drive(None)
        if self._error is not None:
            raise self._error
        with self._work:
            if self._result is None:
                self._result = self._grid.to_dataframe(self._engine.stats)
        return self._result

    def prefix(self, k: int) -> Dataframe:
        """The first k rows, forcing only the work they need.

        A row the prefix never reaches cannot raise: an error past the
        cutoff stays unobserved, which is the point of bounded evaluation.
        """
        k = max(int(k), 0)
        self._drive(k)
        with self._work:
            if self._grid is not None:
                sub = self._grid._derive(
                    order=self._grid.order[: min(k, self._grid.m)]
                )
                return sub.to_dataframe(self._engine.stats)
            if self._error is not None and self._rows < k:
                raise self._error
            rows: list = []
            rlabels: list = []
            for batch_rows, batch_labels in self._batches:
                need = k - len(rows)
                if need <= 0:
                    break
                rows.extend(batch_rows[:need])
                rlabels.extend(batch_labels[:need])
            return _chunk_frame(
                rows, rlabels, self._spec.labels, self._spec.schema
            )


class Engine:
    """Evaluates logical plans over block-partitioned frames."""

    def __init__(
        self,
        mode: str = "eager",
        threads: int = 1,
        cache_bytes: int = DEFAULT_BUDGET,
        block_shape: Optional[tuple] = None,
        stats: Optional[EngineStats] = None,
    ):
        if mode not in MODES:
            raise ValueError(f"unknown engine mode {mode!r}")
        threads = int(threads)
        if threads < 1:
            raise ValueError("threads must be >= 1")
        self.mode = mode
        self.threads = threads
        self.stats = stats if stats is not None else EngineStats()
        self._block_shape = tuple(block_shape) if block_shape else DEFAULT_BLOCK_SHAPE
        self._cache = MaterializationCache(cache_bytes)
        self._frames: dict = {}
        self._frames_lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
        self._queue: Optional[queue.Queue] = None
        self._worker: Optional[threading.Thread] = None
        self._closed = False

    # -- lifecycle -------------------------------------------------------------

    def submit(self, plan: Plan) -> Handle:
        handle = Handle(self, plan, allow_stream=(self.mode != "eager"))
        if self.mode == "eager":
            handle._drive(None)
            if handle._error is not None:
                raise handle._error
        elif self.mode == "opportunistic":
            self._ensure_worker()
            self._queue.put(handle)
        return handle

    def execute(self, plan: Plan) -> Dataframe:
        return self.submit(plan).result()

    def _ensure_worker(self) -> None:
        if self._worker is None:
            self._queue = queue.Queue()
            self._worker = threading.Thread(
                target=self._work_loop, name="engine-worker", daemon=True
            )
            self._worker.start()

    def _work_loop(self) -> None:
        while True:
            handle = self._queue.get()
            if handle is None:
                return
            try:
                handle._drive(None)
            except BaseException:
                pass  # failures live on the handle, observed at read time

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        if self._worker is not None:
            self._queue.put(None)
            self._worker.join(timeout=10)
        if self._pool is not None:
            self._pool.shutdown(wait=True)

    def __enter__(self) -> "Engine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- shared infrastructure ---------------------------------------------------

    def _run_tasks(self, fns: list) -> list:
        """Run tasks, in the pool when there is one; results in task order.

        Resolving futures in submission order keeps the first raised error
        deterministic regardless of scheduling.
        """
        if self._pool is None or len(fns) <= 1:
            return [fn() for fn in fns]
        futures = [self._pool.submit(fn) for fn in fns]
        return [f.result() for f in futures]

    def _scan_grid(self, frame: Dataframe) -> GridFrame:
        with self._frames_lock:
            got = self._frames.get(frame.uid)
            if got is None:
                got = GridFrame.from_dataframe(
                    frame, self._block_shape, self.stats
                )
                self._frames[frame.uid] = got
            return got

    def _row_spans(self, m: int) -> list:
        height = self._block_shape[0]
        return [(a, min(a + height, m)) for a in range(0, m, height)]

    # -- materializing evaluation --------------------------------------------------

    def _evaluate_root(self, plan: Plan) -> GridFrame:
        memo: dict = {}
        return self._evaluate(plan, memo)

    def _evaluate(self, node: Plan, memo: dict) -> GridFrame:
        got = memo.get(id(node))
        if got is not None:
            return got
        kind = node.kind
        if kind == "scan":
            out = self._scan_grid(node.params["frame"])
        elif kind == "ref":
            out = self._ref_grid(node.params["handle"])
        else:
            digest = node.digest()
            cached = self._cache.lookup(digest, self.stats)
            if cached is not None:
                memo[id(node)] = cached
                return cached
            started = perf_counter()
            inputs = [self._evaluate(c, memo) for c in node.children]
            out = self._exec(node, inputs)
            self.stats.bump_kernel(kind)
            self._cache.store(digest, out, perf_counter() - started)
        memo[id(node)] = out
        return out

    def _ref_grid(self, handle) -> GridFrame:
        if hasattr(handle, "grid"):
            return handle.grid()
        return GridFrame.from_dataframe(
            handle.result(), self._block_shape, self.stats
        )

    def _exec(self, node: Plan, inputs: list) -> GridFrame:
        kind = node.kind
        p = node.params
        if kind == "selection":
            if "positions" in p:
                return self._selection_positions(inputs[0], p["positions"])
            return self._selection(inputs[0], p["pred"])
        if kind == "projection":
            return self._projection(inputs[0], p["refs"])
        if kind == "union":
            return self._union(inputs[0], inputs[1], p.get("strict", False))
        if kind == "difference":
            return self._difference(inputs[0], inputs[1])
        if kind == "join":
            return self._join(
                inputs[0], inputs[1], p.get("kind", "cross"), p.get("on", ())
            )
        if kind == "drop_duplicates":
            return self._drop_duplicates(inputs[0])
        if kind == "groupby":
            return self._groupby(
                inputs[0], p["keys"], p["agg"], p.get("targets")
            )
        if kind == "sort":
            return self._sort(inputs[0], p["spec"])
        if kind == "rename":
            return self._rename(inputs[0], p["mapping"])
        if kind == "window":
            return self._window(inputs[0], p["spec"], p.get("targets"))
        if kind == "transpose":
            return self._transpose(inputs[0], p.get("schema"))
        if kind == "map":
            return self._map(inputs[0], p["udf"])
        if kind == "to_labels":
            return self._to_labels(inputs[0], p["label"])
        if kind == "from_labels":
            return self._from_labels(inputs[0], p["label"])
        if kind == "head":
            return self._head(inputs[0], p["k"])
        if kind == "tail":
            return self._tail(inputs[0], p["k"])
        if kind == "pivot":
            return self._pivot(
                inputs[0], p["pivot_col"], p["key_col"], p["value_col"]
            )
        if kind == "mark_sorted":
            return inputs[0]
        if kind == "relabel_rows":
            return self._relabel_rows(inputs[0], p["mapping"])
        if kind == "sort_columns":
            return self._sort_columns(inputs[0], p["spec"])
        raise ValueError(f"engine cannot execute {kind!r}")

    # -- row-axis metadata kernels ---------------------------------------------

    def _selection(self, gf: GridFrame, pred) -> GridFrame:
        height = self._block_shape[0]
        if (
            self._pool is not None
            and gf.m > height
            and not isinstance(pred, TruePred)
            and self._pin_predicate_columns(gf, pred)
        ):
            spans = self._row_spans(gf.m)

            def make_task(a, b):
                def task():
                    sub = gf._derive(order=gf.order[a:b])
                    return ops.eval_predicate(sub, pred, self.stats)
                return task

            masks = self._run_tasks([make_task(a, b) for a, b in spans])
            mask = np.concatenate(masks)
        else:
            mask = ops.eval_predicate(gf, pred, self.stats)
        return gf._derive(order=gf.order[mask])

    def _pin_predicate_columns(self, gf: GridFrame, pred) -> bool:
        """Induce compared columns up front so slices inherit whole-column
        domains. False means a reference resolution error is pending; the
        sequential path reproduces it with the right message."""
        stack = [pred]
        js = []
        while stack:
            q = stack.pop()
            if isinstance(q, Cmp):
                try:
                    js.append(ops.resolve_col(gf, q.col))
                except Exception:
                    return False
            elif isinstance(q, Not):
                stack.append(q.inner)
            elif isinstance(q, (And, Or)):
                stack.append(q.left)
                stack.append(q.right)
        gf.pin_domains(js, self.stats)
        return True

    def _selection_positions(self, gf: GridFrame, positions) -> GridFrame:
        idx = ops.selection_index(gf.m, positions)
        return gf._derive(order=gf.order[idx] if idx else gf.order[:0])

    def _head(self, gf: GridFrame, k: int) -> GridFrame:
        if k < 0:
            raise IndexOutOfBounds(f"head size must be non-negative, got {k}")
        return gf._derive(order=gf.order[: min(k, gf.m)])

    def _tail(self, gf: GridFrame, k: int) -> GridFrame:
        if k < 0:
            raise IndexOutOfBounds(f"tail size must be non-negative, got {k}")
        k = min(k, gf.m)
        return gf._derive(order=gf.order[gf.m - k:])

    def _sort(self, gf: GridFrame, spec) -> GridFrame:
        perm = ops.sort_permutation(gf, spec, self.stats)
        return gf._derive(order=gf.order[perm] if perm else gf.order[:0])

    def _drop_duplicates(self, gf: GridFrame) -> GridFrame:
        keep = ops.dedup_keep(gf)
        return gf._derive(order=gf.order[keep] if keep else gf.order[:0])

    def _difference(self, a: GridFrame, b: GridFrame) -> GridFrame:
        keep = ops.difference_keep(a, b)
        return a._derive(order=a.order[keep] if keep else a.order[:0])

    # -- column-axis metadata kernels --------------------------------------------

    def _projection(self, gf: GridFrame, refs) -> GridFrame:
        js: list = []
        for ref in refs:
            js.extend(ops.resolve_cols_all(gf, ref))
        return gf._derive(
            col_order=gf.col_order[js] if js else gf.col_order[:0]
        )

    def _rename(self, gf: GridFrame, mapping) -> GridFrame:
        table = dict(mapping)
        labels = gf.col_label_list()
        for old in table:
            if old not in labels:
                raise UnknownColumn(f"no column labeled {old!r}")
        new_labels = np.array(gf.col_labels, dtype=object)
        for pj in set(int(x) for x in gf.col_order):
            lab = Dataframe._item(new_labels[pj])
            if lab in table:
                new_labels[pj] = table[lab]
        return gf._derive(col_labels=new_labels)

    def _relabel_rows(self, gf: GridFrame, mapping) -> GridFrame:
        table = dict(mapping)
        present = set(gf.row_label_list())
        for old in table:
            if old not in present:
                raise UnknownColumn(f"no row labeled {old!r}")
        source = gf.row_labels
        new_labels = np.empty(len(source), dtype=object)
        for pos in range(len(source)):
            lab = Dataframe._item(source[pos])
            new_labels[pos] = table.get(lab, lab)
        return gf._derive(row_labels=new_labels)

    def _sort_columns(self, gf: GridFrame, spec) -> GridFrame:
        perm = ops.sort_columns_permutation(gf, spec)
        return gf._derive(
            col_order=gf.col_order[perm] if perm else gf.col_order[:0]
        )

    def _transpose(self, gf: GridFrame, declared) -> GridFrame:
        if declared is not None:
            declared = tuple(declared)
            if len(declared) != gf.m:
                raise ArityMismatch(
                    f"declared schema has {len(declared)} entries for {gf.m} columns"
                )
        return gf.transposed(declared, self.stats)

    def _to_labels(self, gf: GridFrame, label: str) -> GridFrame:
        j = ops.unique_col(gf, label)
        source = gf.physical_column(j)
        new_labels = np.empty(len(source), dtype=object)
        for pos, v in enumerate(source):
            new_labels[pos] = cell_text(Dataframe._item(v))
        if gf.n > 1:
            keep = np.concatenate([gf.col_order[:j], gf.col_order[j + 1:]])
        else:
            keep = gf.col_order[:0]
        return gf._derive(col_order=keep, row_labels=new_labels)

    def _from_labels(self, gf: GridFrame, label: str) -> GridFrame:
        if not _order_unique(gf):
            df = ops.from_labels(gf.to_dataframe(self.stats), label, self.stats)
            return GridFrame.from_dataframe(df, self._block_shape, self.stats)
        values = [str(Dataframe._item(l)) for l in gf.row_label_list()]
        appended, new_pjs = gf.append_columns(
            [values], [label], [None], self.stats
        )
        new_labels = np.empty(gf.physical_m, dtype=object)
        new_labels[:] = ""
        if gf.m:
            new_labels[gf.order] = [str(i) for i in range(gf.m)]
        col_order = np.concatenate(
            [np.array(new_pjs, dtype=np.int64), appended.col_order]
        )
        return appended._derive(col_order=col_order, row_labels=new_labels)

    # -- value kernels -------------------------------------------------------------

    def _union(self, a: GridFrame, b: GridFrame, strict: bool) -> GridFrame:
        cols, row_labels, out_labels, schema = ops.union_parts(
            a, b, strict, self.stats
        )
        return GridFrame.from_columns(
            cols, a.m + b.m,
            row_labels=row_labels, col_labels=out_labels, schema=schema,
            block_shape=self._block_shape, stats=self.stats,
        )

    def _join(self, a: GridFrame, b: GridFrame, kind: str, on) -> GridFrame:
        cols, row_labels, col_labels, schema = ops.join_parts(
            a, b, kind, on, self.stats
        )
        return GridFrame.from_columns(
            cols, len(row_labels),
            row_labels=row_labels, col_labels=col_labels, schema=schema,
            block_shape=self._block_shape, stats=self.stats,
        )

    def _groupby(self, gf: GridFrame, keys, agg: str, targets) -> GridFrame:
        if agg not in ops.AGGS:
            raise ValueError(f"unknown aggregate {agg!r}")
        key_js, target_js = ops.resolve_group_cols(gf, keys, targets)
        height = self._block_shape[0]
        if self._pool is not None and gf.m > height:
            spans = self._row_spans(gf.m)

            def make_task(a, b):
                def task():
                    sub = gf._derive(order=gf.order[a:b])
                    return ops.group_rows(sub, key_js, base=a)
                return task

            parts = self._run_tasks([make_task(a, b) for a, b in spans])
            # bands are in row order, so first occurrence across the merge
            # is first occurrence globally
            index: dict = {}
            group_order: list = []
            member_lists: list = []
            for order_part, members_part, keys_part in parts:
                for g, key in enumerate(keys_part):
                    at = index.get(key)
                    if at is None:
                        index[key] = len(group_order)
                        group_order.append(order_part[g])
                        member_lists.append(list(members_part[g]))
                    else:
                        member_lists[at].extend(members_part[g])
        else:
            group_order, member_lists, _keys = ops.group_rows(gf, key_js)
        out_cols, out_labels, out_schema = ops.aggregate_groups(
            gf, agg, key_js, target_js, group_order, member_lists, self.stats
        )
        return GridFrame.from_columns(
            out_cols, len(group_order),
            col_labels=out_labels, schema=out_schema,
            block_shape=self._block_shape, stats=self.stats,
        )

    def _window_column(self, gf: GridFrame, j: int, spec) -> tuple:
        values, dom = ops.typed_column(gf, j, self.stats)
        if spec.func != "shift" and dom not in ops.NUMERIC:
            raise IncomparableDomains(
                f"window {spec.func} needs a numeric column, got {dom.value}"
            )
        if spec.reverse:
            values = list(reversed(values))
        out = ops._window_values(values, spec, dom)
        if spec.reverse:
            out = list(reversed(out))
        return out, dom

    def _window(self, gf: GridFrame, spec, targets) -> GridFrame:
        if targets is None:
            target_js = list(range(gf.n))
        else:
            target_js = []
            for t in targets:
                target_js.extend(ops.resolve_cols_all(gf, t))
        torder = sorted(set(target_js))
        if not torder:
            return gf
        if not _order_unique(gf):
            df = ops.window(gf.to_dataframe(self.stats), spec, targets, self.stats)
            return GridFrame.from_dataframe(df, self._block_shape, self.stats)
        results = self._run_tasks([
            (lambda j=j: self._window_column(gf, j, spec)) for j in torder
        ])
        labels = gf.col_label_list()
        appended, new_pjs = gf.append_columns(
            [r[0] for r in results],
            [labels[j] for j in torder],
            [r[1] for r in results],
            self.stats,
        )
        col_order = np.array(appended.col_order)
        for idx, j in enumerate(torder):
            col_order[j] = new_pjs[idx]
        return appended._derive(col_order=col_order)

    def _map(self, gf: GridFrame, udf: UdfSpec) -> GridFrame:
        if udf.fn is None and udf.name == "isnull":
            fast = self._isnull_grid(gf)
            if fast is not None:
                return fast
        cols, labels, schema = ops.map_parts(gf, udf, self.stats)
        return GridFrame.from_columns(
            cols, gf.m,
            row_labels=gf.row_label_list(),
            col_labels=labels if labels is not None else gf.col_label_list(),
            schema=schema,
            block_shape=self._block_shape, stats=self.stats,
        )

    def _isnull_grid(self, gf: GridFrame) -> Optional[GridFrame]:
        """Blockwise isnull: one boolean block per input block, bands in
        parallel. Only for untouched scans (identity orders), where logical
        and physical layout coincide."""
        grid = gf.grid
        if gf.m != grid.m or gf.n != grid.n:
            return None
        if not np.array_equal(gf.order, np.arange(grid.m, dtype=np.int64)):
            return None
        if not np.array_equal(gf.col_order, np.arange(grid.n, dtype=np.int64)):
            return None

        def band_task(bi):
            out_band = []
            for block in grid.blocks[bi]:
                if block.dtype.kind == "U":
                    flags = np.equal(block, "")
                else:
                    flags = np.empty(block.shape, dtype=bool)
                    for i in range(block.shape[0]):
                        row = block[i]
                        for j in range(block.shape[1]):
                            flags[i, j] = is_null(row[j])
                # object storage of python bools: grid cells must come back
                # as plain bool, not numpy scalars
                out_band.append(np.array(flags.tolist(), dtype=object).reshape(block.shape))
            return out_band

        n_bands = len(grid.row_splits) - 1
        bands = self._run_tasks([
            (lambda bi=bi: band_task(bi)) for bi in range(n_bands)
        ])
        new_grid = PartitionGrid(
            bands, grid.row_splits, grid.col_splits, grid.transposed
        )
        self.stats.bump("cells_copied", grid.m * grid.n)
        declared = {pj: Domain.BOOL for pj in range(grid.n)}
        return GridFrame(
            new_grid, gf.order, gf.col_order,
            gf.row_labels, gf.col_labels, declared,
        )

    def _pivot(self, gf: GridFrame, pivot_col, key_col, value_col) -> GridFrame:
        for c in (pivot_col, key_col, value_col):
            ops.resolve_col(gf, c)
        if len({pivot_col, key_col, value_col}) != 3:
            raise ValueError("pivot needs three distinct columns")
        grouped = self._groupby(gf, [pivot_col], "collect", None)
        flat = self._map(grouped, UdfSpec("flatten", (key_col, value_col)))
        labeled = self._to_labels(flat, pivot_col)
        return self._transpose(labeled, None)

    # -- streaming -------------------------------------------------------------

    def _stream_spec(self, node: Plan) -> Optional[_StreamSpec]:
        kind = node.kind
        if kind == "scan":
            return self._scan_stream(node.params["frame"])
        if kind == "mark_sorted":
            return self._stream_spec(node.children[0])
        if kind == "union":
            a = self._stream_spec(node.children[0])
            if a is None:
                return None
            b = self._stream_spec(node.children[1])
            if b is None:
                return None
            return self._union_stream(node, a, b)
        if kind not in (
            "selection", "projection", "rename", "map", "window",
            "drop_duplicates", "head", "to_labels", "from_labels",
        ):
            return None
        child = self._stream_spec(node.children[0])
        if child is None:
            return None
        if kind == "selection":
            return self._selection_stream(node, child)
        if kind == "projection":
            return self._projection_stream(node, child)
        if kind == "rename":
            return self._rename_stream(node, child)
        if kind == "map":
            return self._map_stream(node, child)
        if kind == "window":
            return self._window_stream(node, child)
        if kind == "drop_duplicates":
            return self._dedup_stream(child)
        if kind == "head":
            return self._head_stream(node, child)
        if kind == "to_labels":
            return self._to_labels_stream(node, child)
        return self._from_labels_stream(node, child)

    def _scan_stream(self, frame: Dataframe) -> _StreamSpec:
        labels = [str(l) for l in frame.col_label_list()]
        schema = list(frame.effective_schema())
        engine = self

        def factory():
            gf = engine._scan_grid(frame)
            height = engine._block_shape[0]
            rlabels = [str(l) for l in gf.row_label_list()]
            n = gf.n
            for a in range(0, gf.m, height):
                b = min(a + height, gf.m)
                if n:
                    chunks = [gf.column_slice(j, a, b) for j in range(n)]
                    rows = [list(t) for t in zip(*chunks)]
                else:
                    rows = [[] for _ in range(b - a)]
                engine.stats.bump("partitions_evaluated")
                yield rows, rlabels[a:b]

        return _StreamSpec(labels, schema, factory)

    @staticmethod
    def _static_one(labels: list, ref) -> Optional[int]:
        # first-match label resolution, mirroring resolve_col; None closes
        # the gate and routes the plan through the materializing path
        if isinstance(ref, bool):
            return None
        if isinstance(ref, (int, np.integer)):
            return int(ref) if 0 <= ref < len(labels) else None
        for j, lab in enumerate(labels):
            if lab == ref:
                return j
        return None

    @staticmethod
    def _static_all(labels: list, ref) -> Optional[list]:
        if isinstance(ref, bool):
            return None
        if isinstance(ref, (int, np.integer)):
            return [int(ref)] if 0 <= ref < len(labels) else None
        js = [j for j, lab in enumerate(labels) if lab == ref]
        return js or None

    def _selection_stream(self, node, child) -> Optional[_StreamSpec]:
        p = node.params
        if "positions" in p:
            return None
        pred = p["pred"]
        stack = [pred]
        while stack:
            q = stack.pop()
            if isinstance(q, TruePred):
                continue
            if isinstance(q, Cmp):
                j = self._static_one(child.labels, q.col)
                if j is None or child.schema[j] is Domain.UNSPECIFIED:
                    return None
            elif isinstance(q, IsNull):
                if self._static_one(child.labels, q.col) is None:
                    return None
            elif isinstance(q, Not):
                stack.append(q.inner)
            elif isinstance(q, (And, Or)):
                stack.append(q.left)
                stack.append(q.right)
            else:
                return None
        labels, schema = child.labels, child.schema
        engine = self

        def factory():
            for rows, rlabels in child.factory():
                tiny = _chunk_frame(rows, rlabels, labels, schema)
                mask = ops.eval_predicate(tiny, pred, engine.stats)
                keep_rows = [r for r, flag in zip(rows, mask) if flag]
                keep_labels = [l for l, flag in zip(rlabels, mask) if flag]
                yield keep_rows, keep_labels

        return _StreamSpec(labels, schema, factory)

    def _projection_stream(self, node, child) -> Optional[_StreamSpec]:
        js: list = []
        for ref in node.params["refs"]:
            got = self._static_all(child.labels, ref)
            if got is None:
                return None
            js.extend(got)
        labels = [child.labels[j] for j in js]
        schema = [child.schema[j] for j in js]

        def factory():
            for rows, rlabels in child.factory():
                yield [[row[j] for j in js] for row in rows], rlabels

        return _StreamSpec(labels, schema, factory)

    def _rename_stream(self, node, child) -> Optional[_StreamSpec]:
        table = dict(node.params["mapping"])
        for old in table:
            if old not in child.labels:
                return None
        labels = [table.get(l, l) for l in child.labels]
        # cells pass through untouched; only the static metadata changes
        return _StreamSpec(labels, child.schema, child.factory)

    def _head_stream(self, node, child) -> Optional[_StreamSpec]:
        k = node.params["k"]
        if k < 0:
            return None

        def factory():
            remaining = k
            if remaining == 0:
                return
            for rows, rlabels in child.factory():
                if len(rows) >= remaining:
                    yield rows[:remaining], rlabels[:remaining]
                    return
                remaining -= len(rows)
                yield rows, rlabels

        return _StreamSpec(child.labels, child.schema, factory)

    def _map_stream(self, node, child) -> Optional[_StreamSpec]:
        udf = node.params["udf"]
        if udf.fn is not None:
            return None
        name = udf.name
        n = len(child.labels)
        engine = self
        if name == "isnull":
            def factory():
                for rows, rlabels in child.factory():
                    yield [[is_null(c) for c in row] for row in rows], rlabels
            return _StreamSpec(child.labels, [Domain.BOOL] * n, factory)
        if name == "str_upper":
            def factory():
                for rows, rlabels in child.factory():
                    out = [
                        [None if is_null(c) else cell_text(c).upper() for c in row]
                        for row in rows
                    ]
                    yield out, rlabels
            return _StreamSpec(child.labels, [Domain.STR] * n, factory)
        if name == "fillna":
            fill = udf.args[0]
            for dom in child.schema:
                if dom is Domain.UNSPECIFIED:
                    continue
                try:
                    parse(fill, dom)
                except Exception:
                    # the fill would demote this column's domain, which only
                    # the whole-column kernel may decide
                    return None

            def factory():
                for rows, rlabels in child.factory():
                    out = [
                        [fill if is_null(c) else c for c in row]
                        for row in rows
                    ]
                    yield out, rlabels
            return _StreamSpec(child.labels, child.schema, factory)
        if name == "arith":
            text = udf.args[0]
            try:
                expr = ops._ArithExpr(text)
            except Exception:
                return None
            all_int = not expr.has_division()
            for nm in expr.names:
                j = self._static_one(child.labels, nm)
                if j is None:
                    return None
                dom = child.schema[j]
                if dom not in ops.NUMERIC:
                    return None
                if dom is not Domain.INT:
                    all_int = False
            out_dom = Domain.INT if all_int else Domain.FLOAT
            labels, schema = child.labels, child.schema

            def factory():
                for rows, rlabels in child.factory():
                    tiny = _chunk_frame(rows, rlabels, labels, schema)
                    cols, _l, _s = ops._map_arith(tiny, text, engine.stats)
                    yield [[v] for v in cols[0]], rlabels
            return _StreamSpec([text], [out_dom], factory)
        return None  # one_hot and flatten have data-dependent arity

    def _window_stream(self, node, child) -> Optional[_StreamSpec]:
        spec = node.params["spec"]
        targets = node.params.get("targets")
        if spec.reverse:
            return None
        if targets is None:
            tjs = list(range(len(child.labels)))
        else:
            tjs = []
            for t in targets:
                got = self._static_all(child.labels, t)
                if got is None:
                    return None
                tjs.extend(got)
        tset = sorted(set(tjs))
        for j in tset:
            dom = child.schema[j]
            if dom is Domain.UNSPECIFIED:
                return None
            if spec.func != "shift" and dom not in ops.NUMERIC:
                return None
        if spec.func == "diff" and (spec.param if spec.param else 1) < 1:
            return None
        if spec.func == "shift" and spec.param < 0:
            return None
        schema = child.schema

        def factory():
            channels = {j: _WindowChannel(spec, schema[j]) for j in tset}
            for rows, rlabels in child.factory():
                out_rows = [list(row) for row in rows]
                for j in tset:
                    parsed = [parse(row[j], schema[j]) for row in rows]
                    outs = channels[j].feed(parsed)
                    for i, v in enumerate(outs):
                        out_rows[i][j] = v
                yield out_rows, rlabels

        return _StreamSpec(child.labels, schema, factory)

    def _dedup_stream(self, child) -> _StreamSpec:
        def factory():
            seen = set()
            for rows, rlabels in child.factory():
                keep_rows = []
                keep_labels = []
                for row, lab in zip(rows, rlabels):
                    key = tuple(raw_form(c) for c in row)
                    if key in seen:
                        continue
                    seen.add(key)
                    keep_rows.append(row)
                    keep_labels.append(lab)
                yield keep_rows, keep_labels

        return _StreamSpec(child.labels, child.schema, factory)

    def _union_stream(self, node, a, b) -> Optional[_StreamSpec]:
        strict = bool(node.params.get("strict", False))
        try:
            aligned = ops.align_union_labels(a.labels, b.labels, strict)
        except ArityMismatch:
            return None
        if aligned is None:
            if len(a.labels) != len(b.labels):
                return None
            out_labels = list(a.labels)
            pairs = [(j, j) for j in range(len(out_labels))]
        else:
            out_labels = aligned
            a_pos = {l: j for j, l in enumerate(a.labels)}
            b_pos = {l: j for j, l in enumerate(b.labels)}
            pairs = [(a_pos.get(l), b_pos.get(l)) for l in out_labels]
        schema = []
        for ja, jb in pairs:
            if ja is not None and jb is not None:
                da, db = a.schema[ja], b.schema[jb]
                schema.append(da if da is db else Domain.UNSPECIFIED)
            elif ja is not None:
                schema.append(a.schema[ja])
            else:
                schema.append(b.schema[jb])

        def factory():
            for rows, rlabels in a.factory():
                out = [
                    [row[ja] if ja is not None else None for ja, _ in pairs]
                    for row in rows
                ]
                yield out, rlabels
            for rows, rlabels in b.factory():
                out = [
                    [row[jb] if jb is not None else None for _, jb in pairs]
                    for row in rows
                ]
                yield out, rlabels

        return _StreamSpec(out_labels, schema, factory)

    def _to_labels_stream(self, node, child) -> Optional[_StreamSpec]:
        label = node.params["label"]
        matches = [j for j, l in enumerate(child.labels) if l == label]
        if len(matches) != 1:
            return None
        j = matches[0]
        out_labels = child.labels[:j] + child.labels[j + 1:]
        out_schema = child.schema[:j] + child.schema[j + 1:]

        def factory():
            for rows, rlabels in child.factory():
                new_labels = [
                    cell_text(Dataframe._item(row[j])) for row in rows
                ]
                new_rows = [row[:j] + row[j + 1:] for row in rows]
                yield new_rows, new_labels

        return _StreamSpec(out_labels, out_schema, factory)

    def _from_labels_stream(self, node, child) -> _StreamSpec:
        label = node.params["label"]
        out_labels = [label] + child.labels
        out_schema = [Domain.UNSPECIFIED] + child.schema

        def factory():
            pos = 0
            for rows, rlabels in child.factory():
                new_rows = [[lab] + row for lab, row in zip(rlabels, rows)]
                new_labels = [str(pos + i) for i in range(len(rows))]
                pos += len(rows)
                yield new_rows, new_labels

        return _StreamSpec(out_labels, out_schema, factory)

    def _assemble(self, spec: _StreamSpec, batches: list) -> GridFrame:
        rows: list = []
        rlabels: list = []
        for batch_rows, batch_labels in batches:
            rows.extend(batch_rows)
            rlabels.extend(batch_labels)
        n = len(spec.labels)
        cols = [[row[j] for row in rows] for j in range(n)]
        return GridFrame.from_columns(
            cols, len(rows),
            row_labels=rlabels, col_labels=spec.labels, schema=spec.schema,
            block_shape=self._block_shape, stats=self.stats,
        )


def demand_prefix(handle: Handle, k: int, end: str = "head") -> Dataframe:
    """First or last k logical rows of a handle's result.

    The head end stays partition-bounded for streamable pipelines; the tail
    end always needs the complete result, so it materializes first.
    """
    if end == "head":
        return handle.prefix(k)
    if end != "tail":
        raise ValueError(f"end must be head or tail, got {end!r}")
    if k < 0:
        raise IndexOutOfBounds(f"cannot take last {k} rows")
    full = handle.result()
    positions = np.arange(max(0, full.m - k), full.m, dtype=np.int64)
    return Dataframe(
        [full._cols[j] for j in range(full.n)],
        row_labels=full.row_labels,
        col_labels=full.col_labels,
        schema=full.effective_schema(),
        order=full.order[positions] if full.m else full.order[:0],
        m=full.physical_m,
    )
