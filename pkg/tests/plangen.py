"""Random frame and plan sampling for equivalence suites.

Plans are grown bottom-up. Each candidate operator is applied to the
running reference result; anything that raises is discarded and another
operator is tried, so every emitted plan evaluates cleanly and arrives
with its expected output attached. Sampling is fully determined by the
seed.
"""

from __future__ import annotations

import random

from orderframe.algebra import ops
from orderframe.algebra.plan import (
    And, Cmp, IsNull, Not, Or, Plan, SortSpec, TruePred, UdfSpec, WindowSpec,
    scan,
)
from orderframe.model import Dataframe, Domain

LABEL_POOL = ["a", "b", "c", "d", "e", "f"]

_INT_CELLS = ["0", "1", "2", "3", "7", "-5", "42", "100"]
_FLOAT_CELLS = ["0.5", "1.25", "-2.5", "3.0", "1e2", ".75"]
_BOOL_CELLS = ["true", "false"]
_STR_CELLS = ["x", "y", "z", "Jan", "Feb", "red", "blue"]
_NULL = ""


def random_frame(rng: random.Random, max_m: int = 8, max_n: int = 6) -> Dataframe:
    m = rng.randint(0, max_m)
    n = rng.randint(1, max_n)
    cols = []
    for _ in range(n):
        pool = rng.choice([_INT_CELLS, _FLOAT_CELLS, _BOOL_CELLS, _STR_CELLS])
        col = []
        for _ in range(m):
            if rng.random() < 0.12:
                col.append(_NULL)
            elif rng.random() < 0.1:
                # mixed-domain column, collapses induction to Str
                col.append(rng.choice(_STR_CELLS))
            else:
                col.append(rng.choice(pool))
        cols.append(col)
    labels = rng.sample(LABEL_POOL, n)
    if rng.random() < 0.15 and n >= 2:
        labels[1] = labels[0]  # duplicate column label
    row_labels = None
    if rng.random() < 0.3:
        row_labels = [f"r{i}" for i in range(m)]
        rng.shuffle(row_labels)
    return Dataframe(cols, row_labels=row_labels, col_labels=labels, m=m)


def _literal(rng: random.Random, df: Dataframe, label) -> str:
    js = df.col_positions(label)
    cells = [c for c in df.column(js[0]) if c not in (None, "")] if js else []
    if cells and rng.random() < 0.7:
        from orderframe.model import cell_text
        return cell_text(rng.choice(cells))
    return rng.choice(_INT_CELLS + _STR_CELLS)


def _predicate(rng: random.Random, df: Dataframe, depth: int = 2):
    labels = df.col_label_list()
    if not labels:
        return TruePred()
    roll = rng.random()
    if depth > 0 and roll < 0.2:
        a = _predicate(rng, df, depth - 1)
        b = _predicate(rng, df, depth - 1)
        return (And if rng.random() < 0.5 else Or)(a, b)
    if depth > 0 and roll < 0.3:
        return Not(_predicate(rng, df, depth - 1))
    col = rng.choice(labels)
    if roll < 0.45:
        return IsNull(col)
    op = rng.choice(Cmp.OPS)
    return Cmp(op, col, _literal(rng, df, col))


def _sample_op(rng: random.Random, plan: Plan, df: Dataframe, sampler):
    """One candidate extension; raises when the pick does not apply."""
    labels = df.col_label_list()
    kind = rng.choice([
        "selection", "selection", "positions", "projection", "head", "tail",
        "drop_duplicates", "sort", "rename", "window", "transpose", "map",
        "to_labels", "from_labels", "union", "difference", "join", "groupby",
        "pivot",
    ])
    if kind == "selection":
        pred = _predicate(rng, df)
        return Plan("selection", [plan], pred=pred), ops.selection(df, pred)
    if kind == "positions":
        k = rng.randint(0, df.m)
        picks = rng.sample(range(df.m), k)
        return (Plan("selection", [plan], positions=tuple(picks)),
                ops.selection_positions(df, picks))
    if kind == "projection":
        count = rng.randint(1, max(1, df.n))
        if rng.random() < 0.5 and labels:
            refs = tuple(rng.choice(labels) for _ in range(count))
        else:
            refs = tuple(rng.sample(range(df.n), min(count, df.n)))
        return Plan("projection", [plan], refs=refs), ops.projection(df, refs)
    if kind == "head":
        k = rng.randint(0, df.m + 1)
        return Plan("head", [plan], k=k), ops.head(df, k)
    if kind == "tail":
        k = rng.randint(0, df.m + 1)
        return Plan("tail", [plan], k=k), ops.tail(df, k)
    if kind == "drop_duplicates":
        return Plan("drop_duplicates", [plan]), ops.drop_duplicates(df)
    if kind == "sort":
        keys = [(rng.choice(labels), rng.random() < 0.5)
                for _ in range(rng.randint(1, 2))]
        spec = SortSpec(keys)
        return Plan("sort", [plan], spec=spec), ops.sort(df, spec)
    if kind == "rename":
        old = rng.choice(labels)
        mapping = ((old, rng.choice(LABEL_POOL)),)
        return Plan("rename", [plan], mapping=mapping), ops.rename(df, mapping)
    if kind == "window":
        spec = WindowSpec(rng.choice(WindowSpec.FUNCS),
                          param=rng.randint(1, 3), reverse=rng.random() < 0.2)
        targets = None
        if rng.random() < 0.5:
            targets = (rng.choice(labels),)
        return (Plan("window", [plan], spec=spec, targets=targets),
                ops.window(df, spec, targets))
    if kind == "transpose":
        return Plan("transpose", [plan]), ops.transpose(df)
    if kind == "map":
        name = rng.choice(["fillna", "isnull", "str_upper", "arith", "one_hot"])
        if name == "fillna":
            udf = UdfSpec("fillna", (rng.choice(["0", "none", "1.5"]),))
        elif name == "arith":
            if len(labels) < 2:
                raise ValueError("arith wants two columns")
            l, r = rng.sample(labels, 2)
            udf = UdfSpec("arith", (f"{l} {rng.choice(['+', '-', '*'])} {r}",))
        elif name == "one_hot":
            udf = UdfSpec("one_hot", (rng.choice(labels),))
        else:
            udf = UdfSpec(name)
        return Plan("map", [plan], udf=udf), ops.map_rows(df, udf)
    if kind == "to_labels":
        label = rng.choice(labels)
        return Plan("to_labels", [plan], label=label), ops.to_labels(df, label)
    if kind == "from_labels":
        label = rng.choice(LABEL_POOL)
        return Plan("from_labels", [plan], label=label), ops.from_labels(df, label)
    if kind == "union":
        other_plan, other_df = sampler._subplan(rng)
        strict = rng.random() < 0.1
        return (Plan("union", [plan, other_plan], strict=strict),
                ops.union(df, other_df, strict))
    if kind == "difference":
        if rng.random() < 0.5:
            # self-difference produces the interesting empty-ish cases
            other_plan, other_df = plan, df
        else:
            other_plan, other_df = sampler._subplan(rng)
        return (Plan("difference", [plan, other_plan]),
                ops.difference(df, other_df))
    if kind == "join":
        other_plan, other_df = sampler._subplan(rng)
        jk = rng.choice(["cross", "inner", "left"])
        if jk == "cross":
            if df.m * other_df.m > 64:
                raise ValueError("cross blowup")
            return (Plan("join", [plan, other_plan], kind="cross", on=()),
                    ops.join(df, other_df, "cross", ()))
        on = ((rng.choice(labels), rng.choice(other_df.col_label_list())),)
        return (Plan("join", [plan, other_plan], kind=jk, on=on),
                ops.join(df, other_df, jk, on))
    if kind == "groupby":
        agg = rng.choice(["count", "sum", "mean", "min", "max", "collect"])
        keys = tuple(rng.sample(labels, rng.randint(0, min(2, len(labels)))))
        targets = None
        if agg in ("sum", "mean", "min", "max"):
            pool = [l for l in labels if l not in keys]
            if not pool:
                raise ValueError("no aggregation target")
            targets = (rng.choice(pool),)
        return (Plan("groupby", [plan], keys=keys, agg=agg, targets=targets),
                ops.groupby(df, keys, agg, targets))
    if kind == "pivot":
        if len(set(labels)) < 3:
            raise ValueError("pivot wants three distinct columns")
        a, b, c = rng.sample(sorted(set(labels)), 3)
        return (Plan("pivot", [plan], pivot_col=a, key_col=b, value_col=c),
                ops.pivot(df, a, b, c))
    raise AssertionError(kind)


class PlanSampler:
    """Grows valid (plan, expected frame) pairs from a seeded generator."""

    def __init__(self, seed: int, max_depth: int = 5):
        self.rng = random.Random(seed)
        self.max_depth = max_depth

    def _subplan(self, rng: random.Random):
        df = random_frame(rng, max_m=4, max_n=3)
        return scan(df), df

    def sample(self) -> tuple[Plan, Dataframe]:
        rng = self.rng
        df = random_frame(rng)
        plan = scan(df)
        depth = rng.randint(0, self.max_depth)
        for _ in range(depth):
            for _attempt in range(12):
                try:
                    plan, df = _sample_op(rng, plan, df, self)
                    break
                except Exception:
                    continue
            else:
                break
            if df.m > 200 or df.n > 40:
                break
        return plan, df
