"""Rule-based plan rewriter.

Canonicalizes a statement's plan, applies the rewrite rules to a fixpoint
(bounded, then macro-expands pivot and reruns the rules so a transpose
produced by the expansion can cancel against one already in the plan), and
reports what fired for the explain output. Statement boundaries are hard
fences: ref leaves are opaque, so no rewrite ever crosses into a previous
statement's plan.
"""

from __future__ import annotations

from typing import Callable, Optional

from .algebra.ops import align_union_labels
from .algebra.plan import Cmp, Plan, Predicate, UdfSpec, walk
from .errors import ArityMismatch

MAX_ITERATIONS = 32


# === provable per-column facts ===


class PlanStats:
    """Facts about a plan's output that are provable from its shape alone.

    sorted_cols/clustered_cols hold column labels; a flag is only present
    when the plan structure guarantees it (output of sort, an explicit mark,
    or caller-supplied knowledge). rows/cols are exact counts where the
    shape determines them and None otherwise. schema_known is true when no
    column can need induction.
    """

    __slots__ = ("sorted_cols", "clustered_cols", "schema_known", "rows", "cols")

    def __init__(self, sorted_cols=frozenset(), clustered_cols=frozenset(),
                 schema_known=False, rows=None, cols=None):
        self.sorted_cols = frozenset(sorted_cols)
        self.clustered_cols = frozenset(clustered_cols)
        self.schema_known = bool(schema_known)
        self.rows = rows
        self.cols = cols

    def merged(self, other: "PlanStats") -> "PlanStats":
        return PlanStats(
            self.sorted_cols | other.sorted_cols,
            self.clustered_cols | other.clustered_cols,
            self.schema_known or other.schema_known,
            self.rows if self.rows is not None else other.rows,
            self.cols if self.cols is not None else other.cols,
        )


def infer_stats(node: Plan, memo: Optional[dict] = None,
                overlay: Optional[dict] = None) -> PlanStats:
    """Bottom-up fact inference; overlay maps plan digests to known facts."""
    if memo is None:
        memo = {}
    got = memo.get(id(node))
    if got is not None:
        return got
    kids = [infer_stats(c, memo, overlay) for c in node.children]
    result = _infer(node, kids)
    if overlay:
        extra = overlay.get(node.digest())
        if extra is not None:
            result = result.merged(extra)
    memo[id(node)] = result
    return result


def _infer(node: Plan, kids: list[PlanStats]) -> PlanStats:
    kind = node.kind
    p = node.params
    if kind == "scan":
        df = p["frame"]
        known = all(d.value != "Unspecified" for d in df.schema)
        return PlanStats(schema_known=known, rows=df.m, cols=df.n)
    if kind == "ref":
        return PlanStats()
    parent = kids[0] if kids else PlanStats()
    if kind == "mark_sorted":
        col = p["col"]
        return PlanStats(
            parent.sorted_cols | {col},
            parent.clustered_cols | {col},
            parent.schema_known, parent.rows, parent.cols,
        )
    if kind == "sort":
        first = p["spec"].keys[0][0]
        flags = {first} if isinstance(first, str) else set()
        return PlanStats(flags, flags, parent.schema_known, parent.rows, parent.cols)
    if kind == "selection":
        rows = len(p["positions"]) if "positions" in p else None
        # row subsets of a sorted sequence stay sorted
        return PlanStats(parent.sorted_cols, parent.clustered_cols,
                         parent.schema_known, rows, parent.cols)
    if kind in ("head", "tail"):
        rows = None if parent.rows is None else min(p["k"], parent.rows)
        return PlanStats(parent.sorted_cols, parent.clustered_cols,
                         parent.schema_known, rows, parent.cols)
    if kind in ("drop_duplicates", "difference"):
        left = kids[0]
        return PlanStats(left.sorted_cols, left.clustered_cols,
                         left.schema_known, None, left.cols)
    if kind == "projection":
        refs = p.get("refs", ())
        kept = {r for r in refs if isinstance(r, str)}
        cols = len(refs) if all(isinstance(r, int) for r in refs) else None
        return PlanStats(parent.sorted_cols & kept, parent.clustered_cols & kept,
                         parent.schema_known, parent.rows, cols)
    if kind in ("rename", "relabel_rows"):
        table = dict(p["mapping"]) if kind == "rename" else {}
        return PlanStats(
            {table.get(c, c) for c in parent.sorted_cols},
            {table.get(c, c) for c in parent.clustered_cols},
            parent.schema_known, parent.rows, parent.cols,
        )
    if kind == "window":
        targets = p.get("targets")
        touched = set(targets) if targets else None
        if touched is None:
            return PlanStats(schema_known=parent.schema_known,
                             rows=parent.rows, cols=parent.cols)
        return PlanStats(parent.sorted_cols - touched, parent.clustered_cols - touched,
                         parent.schema_known, parent.rows, parent.cols)
    if kind == "groupby":
        # output rows are one per group in first-occurrence order: a key the
        # parent was sorted on comes out sorted as well
        keys = p["keys"]
        named = {k for k in keys if isinstance(k, str)}
        agg = p["agg"]
        if agg in ("count", "collect"):
            cols = len(keys) + 1
        elif p.get("targets"):
            cols = len(keys) + len(p["targets"])
        else:
            cols = None
        return PlanStats(parent.sorted_cols & named, parent.clustered_cols & named,
                         False, None, cols)
    if kind == "union":
        a, b = kids
        rows = None if a.rows is None or b.rows is None else a.rows + b.rows
        cols = a.cols if p.get("strict") else None
        return PlanStats(rows=rows, cols=cols)
    if kind == "join":
        a, b = kids
        if p.get("kind", "cross") == "cross":
            rows = None if a.rows is None or b.rows is None else a.rows * b.rows
            cols = None if a.cols is None or b.cols is None else a.cols + b.cols
        else:
            rows = None
            cols = (None if a.cols is None or b.cols is None
                    else a.cols + b.cols - len(p.get("on") or ()))
        return PlanStats(rows=rows, cols=cols)
    if kind == "sort_columns":
        return PlanStats(schema_known=parent.schema_known,
                         rows=parent.rows, cols=parent.cols)
    if kind == "transpose":
        return PlanStats(rows=parent.cols, cols=parent.rows)
    if kind == "map":
        udf = p["udf"]
        if udf.fn is None and udf.name in ("fillna", "isnull", "str_upper"):
            cols = parent.cols
        elif udf.fn is None and udf.name == "arith":
            cols = 1
        else:
            cols = None
        return PlanStats(rows=parent.rows, cols=cols)
    if kind == "to_labels":
        cols = None if parent.cols is None else parent.cols - 1
        return PlanStats(rows=parent.rows, cols=cols)
    if kind == "from_labels":
        cols = None if parent.cols is None else parent.cols + 1
        return PlanStats(rows=parent.rows, cols=cols)
    return PlanStats()


# === tree rebuilding ===


def transform(plan: Plan, fn: Callable[[Plan], Optional[Plan]]) -> Plan:
    """Bottom-up rewrite; shared nodes stay shared in the output."""
    memo: dict[int, Plan] = {}

    def rec(node: Plan) -> Plan:
        got = memo.get(id(node))
        if got is not None:
            return got
        kids = [rec(c) for c in node.children]
        if any(k is not c for k, c in zip(kids, node.children)):
            node2 = node.with_children(kids)
        else:
            node2 = node
        replacement = fn(node2)
        out = replacement if replacement is not None else node2
        memo[id(node)] = out
        return out

    return rec(plan)


def canonicalize(plan: Plan) -> Plan:
    """Normalize parameters so equivalent plans share digests; idempotent.

    Omitted optional parameters and explicit defaults must hash the same,
    and commutative parameter lists get one canonical order.
    """

    def norm(node: Plan) -> Optional[Plan]:
        p = dict(node.params)
        changed = False
        for key in [k for k, v in p.items() if v is None]:
            del p[key]
            changed = True
        if node.kind == "union" and p.get("strict") is False:
            del p["strict"]
            changed = True
        if node.kind == "selection" and "pred" in p:
            fixed = p["pred"].normalized()
            if fixed.key() != p["pred"].key():
                p["pred"] = fixed
                changed = True
        if node.kind in ("rename", "relabel_rows"):
            mapping = tuple(sorted(tuple(pair) for pair in p["mapping"]))
            if mapping != tuple(p["mapping"]):
                p["mapping"] = mapping
                changed = True
        if node.kind == "join" and p.get("on"):
            on = tuple(sorted(tuple(pair) for pair in p["on"]))
            if on != tuple(p["on"]):
                p["on"] = on
                changed = True
        if changed:
            return Plan(node.kind, node.children, **p)
        return None

    return transform(plan, norm)


# === rewrite rules ===


class RewriteRule:
    name = "?"

    def apply(self, node: Plan, ctx: "RuleContext") -> Optional[Plan]:
        """Return a replacement for node, or None when the rule cannot fire."""
        raise NotImplementedError


class RuleContext:
    def __init__(self, root: Plan, overlay: Optional[dict] = None):
        self.stats_memo: dict = {}
        self.root = root
        self.overlay = overlay
        self.notes: list[str] = []

    def stats(self, node: Plan) -> PlanStats:
        return infer_stats(node, self.stats_memo, self.overlay)


def _is_plain_transpose(node: Plan) -> bool:
    return node.kind == "transpose" and node.params.get("schema") is None


class TransposeElimination(RewriteRule):
    """R1: a transpose of a transpose is the original frame."""

    name = "R1 transpose-elimination"

    def apply(self, node, ctx):
        if _is_plain_transpose(node) and _is_plain_transpose(node.children[0]):
            return node.children[0].children[0]
        return None


def _transpose_of(child: Plan, declared=None) -> Plan:
    # keep param sets identical for declared-free transposes so digests match
    if declared is None:
        return Plan("transpose", [child])
    return Plan("transpose", [child], schema=declared)


class TransposePullUp(RewriteRule):
    """R2: move a transpose above an op by swapping in its column twin.

    Safe pairs only: positional selection <-> positional projection, and
    column rename <-> row relabel. Predicate selections and named
    projections read cell data or labels whose axis changes meaning, so
    they stay put. Duplicate positions block the swap because the twin op
    rejects what the original tolerates.
    """

    name = "R2 transpose-pull-up"

    def apply(self, node, ctx):
        if not node.children or node.children[0].kind != "transpose":
            return None
        t = node.children[0]
        declared = t.params.get("schema")
        x = t.children[0]
        if node.kind == "selection" and "positions" in node.params:
            refs = tuple(node.params["positions"])
            inner = Plan("projection", [x], refs=refs)
            return _transpose_of(inner, declared)
        if node.kind == "projection":
            refs = tuple(node.params["refs"])
            if not all(isinstance(r, int) for r in refs):
                return None
            if len(set(refs)) != len(refs):
                return None
            inner = Plan("selection", [x], positions=refs)
            sub = declared
            if declared is not None:
                sub = tuple(declared[r] for r in refs)
            return _transpose_of(inner, sub)
        if node.kind == "rename":
            inner = Plan("relabel_rows", [x], mapping=node.params["mapping"])
            return _transpose_of(inner, declared)
        if node.kind == "relabel_rows":
            inner = Plan("rename", [x], mapping=node.params["mapping"])
            return _transpose_of(inner, declared)
        return None


class ColumnReorderShortcut(RewriteRule):
    """R3: transpose-sort-transpose collapses to a runtime column permutation."""

    name = "R3 column-reorder-shortcut"

    def apply(self, node, ctx):
        if not _is_plain_transpose(node):
            return None
        mid = node.children[0]
        if mid.kind != "sort":
            return None
        if not _is_plain_transpose(mid.children[0]):
            return None
        x = mid.children[0].children[0]
        spec = mid.params["spec"]
        if not all(isinstance(c, str) for c, _ in spec.keys):
            return None
        return Plan("sort_columns", [x], spec=spec)


class SortDeferral(RewriteRule):
    """R4: drop a sort feeding a whole-frame order-insensitive aggregate.

    Only a keyless groupby qualifies: with keys, the output row order is the
    keys' first-occurrence order, which the sort changes. The surviving
    aggregates are exactly those whose value is row-order independent
    (float sums are exact, so even they cannot drift).
    """

    name = "R4 conceptual-sort-deferral"

    INSENSITIVE = ("count", "sum", "mean", "min", "max")

    def apply(self, node, ctx):
        if node.kind != "groupby" or node.params["keys"]:
            return None
        if node.params["agg"] not in self.INSENSITIVE:
            return None
        child = node.children[0]
        if child.kind != "sort":
            return None
        return Plan("groupby", [child.children[0]], **node.params)


class CommonSubexpressionElimination(RewriteRule):
    """R6: merge equal-digest subplans into one shared node.

    Applied as a whole-tree pass via the optimizer, not per node.
    """

    name = "R6 common-subexpression"

    def apply(self, node, ctx):
        return None

    def run(self, plan: Plan) -> tuple[Plan, bool]:
        pool: dict[str, Plan] = {}
        merged = False

        def dedupe(node: Plan) -> Optional[Plan]:
            nonlocal merged
            key = node.digest()
            kept = pool.get(key)
            if kept is None:
                pool[key] = node
                return None
            if kept is not node:
                merged = True
            return kept

        return transform(plan, dedupe), merged


class PivotColumnChoice(RewriteRule):
    """R7: pivot by the provably sorted/clustered column and transpose back."""

    name = "R7 pivot-column-choice"

    def apply(self, node, ctx):
        if node.kind != "pivot":
            return None
        p = node.params
        child = node.children[0]
        facts = ctx.stats(child)
        ordered = facts.sorted_cols | facts.clustered_cols
        if p["key_col"] in ordered and p["pivot_col"] not in ordered:
            swapped = Plan(
                "pivot", [child],
                pivot_col=p["key_col"], key_col=p["pivot_col"],
                value_col=p["value_col"],
            )
            ctx.notes.append(
                f"R7: {p['key_col']!r} is provably ordered and {p['pivot_col']!r} "
                f"is not; grouping runs on {p['key_col']!r} with a transpose on top"
            )
            return Plan("transpose", [swapped])
        return None


RULES: tuple[RewriteRule, ...] = (
    TransposeElimination(),
    TransposePullUp(),
    ColumnReorderShortcut(),
    SortDeferral(),
    PivotColumnChoice(),
)
CSE = CommonSubexpressionElimination()


def expand_pivots(plan: Plan) -> tuple[Plan, bool]:
    """Replace pivot macros with their four-operator expansion."""
    expanded = False

    def expand(node: Plan) -> Optional[Plan]:
        nonlocal expanded
        if node.kind != "pivot":
            return None
        expanded = True
        p = node.params
        grouped = Plan("groupby", node.children,
                       keys=(p["pivot_col"],), agg="collect")
        flat = Plan("map", [grouped],
                    udf=UdfSpec("flatten", (p["key_col"], p["value_col"])))
        labeled = Plan("to_labels", [flat], label=p["pivot_col"])
        return Plan("transpose", [labeled])

    return transform(plan, expand), expanded


# === union alignment barriers ===


def static_labels(node: Plan) -> Optional[list]:
    """Output column labels when the plan shape alone determines them."""
    kind = node.kind
    p = node.params
    if kind == "scan":
        return p["frame"].col_label_list()
    if kind == "transpose":
        child = node.children[0]
        if child.kind == "scan":
            return child.params["frame"].row_label_list()
        return None
    if kind in ("selection", "head", "tail", "sort", "drop_duplicates",
                "window", "relabel_rows", "mark_sorted"):
        return static_labels(node.children[0])
    if kind == "difference":
        return static_labels(node.children[0])
    if kind == "rename":
        base = static_labels(node.children[0])
        if base is None:
            return None
        table = dict(p["mapping"])
        return [table.get(l, l) for l in base]
    if kind == "projection":
        base = static_labels(node.children[0])
        if base is None:
            return None
        out = []
        for r in p["refs"]:
            if isinstance(r, int):
                if not 0 <= r < len(base):
                    return None
                out.append(base[r])
            else:
                out.extend(l for l in base if l == r)
        return out
    if kind == "union":
        a = static_labels(node.children[0])
        b = static_labels(node.children[1])
        if a is None or b is None:
            return None
        try:
            aligned = align_union_labels(a, b, bool(p.get("strict")))
        except ArityMismatch:
            return None
        return a if aligned is None else aligned
    return None


class AlignmentBarrier:
    """Metadata pass for one union: label alignment before any cell work."""

    __slots__ = ("digest", "strict", "left", "right", "aligned")

    def __init__(self, digest, strict, left, right, aligned):
        self.digest = digest
        self.strict = strict
        self.left = left
        self.right = right
        self.aligned = aligned

    def describe(self) -> str:
        tag = f"alignment barrier union[{self.digest[:8]}]"
        if self.left is None or self.right is None:
            return tag + ": labels resolved at runtime (dynamic-arity input)"
        if self.aligned is None:
            return tag + f": {self.left} vs {self.right} will raise ArityMismatch"
        return tag + f": {self.left} + {self.right} -> {self.aligned}"


def two_pass_schema_align(plan: Plan) -> list[AlignmentBarrier]:
    """Alignment metadata for every union in the plan.

    The label pass is a barrier: both input label sequences must be known
    before the first output cell exists, because padding columns for one
    side depend on the other side's labels.
    """
    barriers = []
    for node in walk(plan):
        if node.kind != "union":
            continue
        strict = bool(node.params.get("strict"))
        a = static_labels(node.children[0])
        b = static_labels(node.children[1])
        aligned = None
        if a is not None and b is not None:
            try:
                got = align_union_labels(a, b, strict)
                aligned = a if got is None else got
            except ArityMismatch:
                aligned = None
        barriers.append(AlignmentBarrier(node.digest(), strict, a, b, aligned))
    return barriers


# === induction placement (analysis only) ===

_TYPED_NEEDS = {
    "sort": lambda p: [c for c, _ in p["spec"].keys],
    "window": lambda p: (
        [] if p["spec"].func == "shift" else list(p.get("targets") or ["<all>"])
    ),
    "join": lambda p: [l for l, _ in (p.get("on") or ())],
    "groupby": lambda p: (
        list(p.get("targets") or ["<non-key>"])
        if p["agg"] in ("sum", "mean", "min", "max") else []
    ),
}


def _pred_typed_cols(pred: Predicate) -> list:
    out = []
    stack = [pred]
    while stack:
        p = stack.pop()
        if isinstance(p, Cmp) and isinstance(p.col, str):
            out.append(p.col)
        for attr in ("inner", "left", "right"):
            if hasattr(p, attr):
                stack.append(getattr(p, attr))
    return out


def induction_notes(plan: Plan) -> list[str]:
    """Where schema induction will attach, statically.

    Everything between the scan and the first typed use is induction-free;
    these notes make that placement visible.
    """
    notes = []
    for node in walk(plan):
        cols: list = []
        if node.kind == "selection" and "pred" in node.params:
            cols = _pred_typed_cols(node.params["pred"])
        elif node.kind == "map":
            udf = node.params["udf"]
            if udf.fn is None and udf.name == "arith":
                cols = ["<expression columns>"]
        elif node.kind in _TYPED_NEEDS:
            cols = _TYPED_NEEDS[node.kind](node.params)
        if cols:
            listed = ", ".join(str(c) for c in dict.fromkeys(cols))
            notes.append(f"S attaches at {node.kind}: {listed}")
    if not notes:
        notes.append("no operator needs typed columns; S never fires")
    return notes


# === driver ===


class PlannedStatement:
    __slots__ = ("root", "fired", "notes", "barriers", "before_text", "after_text")

    def __init__(self, root, fired, notes, barriers, before_text, after_text):
        self.root = root
        self.fired = fired
        self.notes = notes
        self.barriers = barriers
        self.before_text = before_text
        self.after_text = after_text

    def explain(self) -> str:
        lines = ["plan:"]
        lines.extend("  " + l for l in self.before_text.splitlines())
        if self.fired:
            lines.append("rewritten:")
            lines.extend("  " + l for l in self.after_text.splitlines())
            lines.append("rules fired: " + ", ".join(self.fired))
        else:
            lines.append("rules fired: (no rules fired)")
        for note in self.notes:
            lines.append(note)
        for barrier in self.barriers:
            lines.append(barrier.describe())
        return "\n".join(lines)


def rewrite(plan: Plan, stats: Optional[dict] = None) -> PlannedStatement:
    """Canonicalize and rewrite one statement's plan.

    stats, when given, maps plan digests to externally known PlanStats
    (session-level knowledge the plan shape cannot prove on its own).
    """
    before_text = plan.pretty()
    root = canonicalize(plan)
    fired: list[str] = []
    ctx = RuleContext(root, overlay=stats)

    def run_rules(current: Plan) -> Plan:
        for _ in range(MAX_ITERATIONS):
            changed = False
            ctx.stats_memo.clear()
            for rule in RULES:
                def attempt(node, rule=rule):
                    out = rule.apply(node, ctx)
                    if out is not None and rule.name not in fired:
                        fired.append(rule.name)
                    return out
                new = transform(current, attempt)
                if new.digest() != current.digest():
                    current = new
                    changed = True
            merged, did_merge = CSE.run(current)
            if did_merge and CSE.name not in fired:
                fired.append(CSE.name)
            current = merged
            if not changed and not did_merge:
                break
        return current

    root = run_rules(root)
    root, expanded = expand_pivots(root)
    if expanded:
        root = run_rules(root)
    notes = ctx.notes + ["induction: " + n for n in induction_notes(root)]
    barriers = two_pass_schema_align(root)
    return PlannedStatement(root, fired, notes, barriers, before_text, root.pretty())


def explain(plan: Plan, stats: Optional[dict] = None) -> str:
    return rewrite(plan, stats).explain()
