"""Single-threaded reference evaluator: the correctness oracle.

Walks a logical plan bottom-up, calling the operator kernels directly.
Shared subplan nodes (same object) evaluate once per call. Deterministic by
construction: identical plan and inputs give identical output.
"""

from __future__ import annotations

from typing import Optional

from ..model import Dataframe
from ..stats import EngineStats
from . import ops
from .plan import Plan, UdfSpec


def evaluate(plan: Plan, stats: Optional[EngineStats] = None) -> Dataframe:
    if stats is None:
        stats = EngineStats()
    memo: dict[int, Dataframe] = {}

    def rec(node: Plan) -> Dataframe:
        got = memo.get(id(node))
        if got is not None:
            return got
        result = _step(node, [rec(c) for c in node.children], stats)
        memo[id(node)] = result
        return result

    return rec(plan)


def _step(node: Plan, inputs: list[Dataframe], stats: EngineStats) -> Dataframe:
    kind = node.kind
    p = node.params
    if kind == "scan":
        return p["frame"]
    if kind == "ref":
        handle = p["handle"]
        return handle.result()
    if kind == "selection":
        if "positions" in p:
            return ops.selection_positions(inputs[0], p["positions"], stats)
        return ops.selection(inputs[0], p["pred"], stats)
    if kind == "projection":
        return ops.projection(inputs[0], p["refs"], stats)
    if kind == "union":
        return ops.union(inputs[0], inputs[1], p.get("strict", False), stats)
    if kind == "difference":
        return ops.difference(inputs[0], inputs[1], stats)
    if kind == "join":
        return ops.join(inputs[0], inputs[1], p.get("kind", "cross"), p.get("on", ()), stats)
    if kind == "drop_duplicates":
        return ops.drop_duplicates(inputs[0], stats)
    if kind == "groupby":
        return ops.groupby(inputs[0], p["keys"], p["agg"], p.get("targets"), stats)
    if kind == "sort":
        return ops.sort(inputs[0], p["spec"], stats)
    if kind == "rename":
        return ops.rename(inputs[0], p["mapping"], stats)
    if kind == "window":
        return ops.window(inputs[0], p["spec"], p.get("targets"), stats)
    if kind == "transpose":
        return ops.transpose(inputs[0], p.get("schema"), stats)
    if kind == "map":
        return ops.map_rows(inputs[0], p["udf"], stats)
    if kind == "to_labels":
        return ops.to_labels(inputs[0], p["label"], stats)
    if kind == "from_labels":
        return ops.from_labels(inputs[0], p["label"], stats)
    if kind == "head":
        return ops.head(inputs[0], p["k"], stats)
    if kind == "tail":
        return ops.tail(inputs[0], p["k"], stats)
    if kind == "pivot":
        return ops.pivot(inputs[0], p["pivot_col"], p["key_col"], p["value_col"], stats)
    if kind == "mark_sorted":
        return inputs[0]
    if kind == "relabel_rows":
        return ops.relabel_rows(inputs[0], p["mapping"], stats)
    if kind == "sort_columns":
        return ops.sort_columns(inputs[0], p["spec"], stats)
    raise ValueError(f"reference evaluator cannot execute {kind!r}")
