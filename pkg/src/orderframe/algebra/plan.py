"""Logical plan nodes, predicates, and structural hashing.

Plans are immutable trees. Structurally identical subplans produce the same
canonical digest, which is the key for subexpression sharing and for the
materialization cache. Leaves are either `scan` nodes holding a concrete
frame or `ref` nodes pointing at the bound result of an earlier statement;
a ref hashes as the plan it was bound to, so renaming an intermediate does
not change the digest.
"""

from __future__ import annotations

import hashlib
import itertools
from typing import Optional, Sequence

from ..model import Dataframe, Domain

# Operators whose output schema is computable without looking at cell data.
# The remaining four (transpose, map, to_labels, from_labels) can create or
# destroy typed columns and may have data-dependent arity.
STATIC_SCHEMA_KINDS = frozenset({
    "selection", "projection", "union", "difference", "join",
    "drop_duplicates", "groupby", "sort", "rename", "window",
    "head", "tail", "mark_sorted", "relabel_rows", "sort_columns",
})

# Operators that preserve the relative logical order of surviving input rows
# ("Parent" order). groupby, sort, and transpose define a new order; union
# and join have their own composite order contracts (left-then-right and
# nested left-major).
PARENT_ORDER_KINDS = frozenset({
    "selection", "projection", "difference", "drop_duplicates",
    "rename", "window", "map", "to_labels", "from_labels", "head", "tail",
})


def _fmt(value) -> str:
    """Canonical textual form of a parameter value, for hashing."""
    if isinstance(value, (list, tuple)):
        return "(" + ",".join(_fmt(v) for v in value) + ")"
    if isinstance(value, Domain):
        return value.value
    if isinstance(value, Predicate):
        return value.key()
    if isinstance(value, (UdfSpec, SortSpec, WindowSpec)):
        return value.key()
    if isinstance(value, Dataframe):
        return f"frame#{value.uid}"
    if value is None or isinstance(value, (str, int, float, bool)):
        return repr(value)
    raise TypeError(f"unhashable plan parameter: {value!r}")


# === Predicates ===


class Predicate:
    """Pure boolean expression over columns; rows where it is true survive."""

    def key(self) -> str:
        raise NotImplementedError

    def columns(self) -> tuple:
        """Column references (labels or positions) this predicate reads."""
        raise NotImplementedError

    def normalized(self) -> "Predicate":
        return self

    def __repr__(self) -> str:
        return self.key()


class TruePred(Predicate):
    def key(self) -> str:
        return "true"

    def columns(self) -> tuple:
        return ()


class Cmp(Predicate):
    OPS = ("eq", "ne", "lt", "le", "gt", "ge")

    def __init__(self, op: str, col, literal):
        if op not in self.OPS:
            raise ValueError(f"unknown comparison {op!r}")
        self.op = op
        self.col = col
        self.literal = literal

    def key(self) -> str:
        return f"{self.op}({self.col!r},{self.literal!r})"

    def columns(self) -> tuple:
        return (self.col,)


class IsNull(Predicate):
    def __init__(self, col):
        self.col = col

    def key(self) -> str:
        return f"isnull({self.col!r})"

    def columns(self) -> tuple:
        return (self.col,)


class Not(Predicate):
    def __init__(self, inner: Predicate):
        self.inner = inner

    def key(self) -> str:
        return f"not({self.inner.key()})"

    def columns(self) -> tuple:
        return self.inner.columns()

    def normalized(self) -> "Predicate":
        return Not(self.inner.normalized())


class _Junction(Predicate):
    NAME = ""

    def __init__(self, left: Predicate, right: Predicate):
        self.left = left
        self.right = right

    def key(self) -> str:
        return f"{self.NAME}({self.left.key()},{self.right.key()})"

    def columns(self) -> tuple:
        return self.left.columns() + self.right.columns()

    def normalized(self) -> "Predicate":
        # and/or are commutative: order operands by key so that equivalent
        # predicates written in either order hash the same
        a = self.left.normalized()
        b = self.right.normalized()
        if a.key() > b.key():
            a, b = b, a
        return type(self)(a, b)


class And(_Junction):
    NAME = "and"


class Or(_Junction):
    NAME = "or"


# === Operator parameter records ===


class SortSpec:
    """Sort keys in priority order; each key is (column, ascending)."""

    def __init__(self, keys: Sequence[tuple]):
        self.keys = tuple((col, bool(asc)) for col, asc in keys)
        if not self.keys:
            raise ValueError("sort spec needs at least one key")

    def key(self) -> str:
        return "sort[" + ",".join(f"{c!r}:{'a' if a else 'd'}" for c, a in self.keys) + "]"


class WindowSpec:
    """Sliding-window builtin over logical row order."""

    FUNCS = ("cumsum", "cummax", "diff", "shift", "rolling_sum")

    def __init__(self, func: str, param: int = 1, reverse: bool = False):
        if func not in self.FUNCS:
            raise ValueError(f"unknown window function {func!r}")
        self.func = func
        self.param = int(param)
        self.reverse = bool(reverse)
        if func == "rolling_sum" and self.param < 1:
            raise ValueError("rolling window width must be >= 1")

    def key(self) -> str:
        return f"window[{self.func},{self.param},{int(self.reverse)}]"


_custom_udf_ids = itertools.count(1)


class UdfSpec:
    """A map function: one of the builtins, or an opaque per-row callable.

    Builtins: fillna(value), isnull, str_upper, arith(expression text),
    one_hot(column), flatten(key column, value column). one_hot and flatten
    have data-dependent output arity and force a two-pass evaluation.
    Custom callables get a fresh identity each time, so they are never
    merged by subexpression sharing.
    """

    BUILTINS = ("fillna", "isnull", "str_upper", "arith", "one_hot", "flatten")
    DYNAMIC = ("one_hot", "flatten")

    def __init__(self, name: str, args: tuple = (), fn=None, output_labels=None):
        if fn is None and name not in self.BUILTINS:
            raise ValueError(f"unknown map builtin {name!r}")
        self.name = name
        self.args = tuple(args)
        self.fn = fn
        self.output_labels = None if output_labels is None else tuple(output_labels)
        self._nonce = next(_custom_udf_ids) if fn is not None else 0

    @property
    def dynamic_arity(self) -> bool:
        return self.fn is None and self.name in self.DYNAMIC

    def key(self) -> str:
        if self.fn is not None:
            return f"udf[custom#{self._nonce}]"
        return f"udf[{self.name}{_fmt(self.args)}]"


# === Plan nodes ===

KINDS = frozenset({
    "scan", "ref",
    "selection", "projection", "union", "difference", "join",
    "drop_duplicates", "groupby", "sort", "rename", "window",
    "transpose", "map", "to_labels", "from_labels",
    "head", "tail", "pivot",
    # planner-internal
    "mark_sorted", "relabel_rows", "sort_columns",
})


class Plan:
    """One logical operator application; immutable once constructed."""

    __slots__ = ("kind", "children", "params", "_digest")

    def __init__(self, kind: str, children: Sequence["Plan"] = (), /, **params):
        if kind not in KINDS:
            raise ValueError(f"unknown plan kind {kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "children", tuple(children))
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "_digest", None)

    def __setattr__(self, name, value):
        raise AttributeError("plans are immutable")

    def param(self, name, default=None):
        return self.params.get(name, default)

    def param_key(self) -> str:
        items = sorted(self.params.items())
        return ";".join(f"{k}={_fmt(v)}" for k, v in items)

    def digest(self) -> str:
        if self._digest is None:
            if self.kind == "ref":
                # a reference hashes as the plan it was bound to
                text = f"ref:{self.params['digest']}"
            else:
                text = ":".join(
                    [self.kind, self.param_key()]
                    + [c.digest() for c in self.children]
                )
            h = hashlib.sha256(text.encode()).hexdigest()
            object.__setattr__(self, "_digest", h)
        return self._digest

    def with_children(self, children: Sequence["Plan"]) -> "Plan":
        return Plan(self.kind, children, **self.params)

    def is_static_schema(self) -> bool:
        return self.kind in STATIC_SCHEMA_KINDS

    # -- display -------------------------------------------------------------

    def describe(self) -> str:
        """One-line operator summary used by the plan printer."""
        p = self.params
        if self.kind == "scan":
            df = p["frame"]
            return f"scan [{df.m}x{df.n}]"
        if self.kind == "ref":
            name = p.get("name", "?")
            return f"ref {name}"
        bits = []
        for key, value in sorted(p.items()):
            if key in ("frame", "handle"):
                continue
            if isinstance(value, (Predicate, SortSpec, WindowSpec, UdfSpec)):
                bits.append(f"{key}={value.key()}")
            else:
                bits.append(f"{key}={_fmt(value)}")
        return self.kind + (" " + " ".join(bits) if bits else "")

    def pretty(self, indent: int = 0) -> str:
        lines = ["  " * indent + self.describe()]
        for child in self.children:
            lines.append(child.pretty(indent + 1))
        return "\n".join(lines)

    def __repr__(self) -> str:
        return f"Plan<{self.describe()}>"


def scan(df: Dataframe) -> Plan:
    return Plan("scan", frame=df)


def walk(plan: Plan):
    """Yield every node exactly once, children before parents."""
    seen = set()

    def rec(node: Plan):
        if id(node) in seen:
            return
        seen.add(id(node))
        for child in node.children:
            yield from rec(child)
        yield node

    yield from rec(plan)
