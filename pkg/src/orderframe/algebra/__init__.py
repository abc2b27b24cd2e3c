"""Logical operator algebra: plan IR, operator kernels, reference evaluator."""

from .plan import (
    And,
    Cmp,
    IsNull,
    Not,
    Or,
    Plan,
    Predicate,
    SortSpec,
    TruePred,
    UdfSpec,
    WindowSpec,
    scan,
)
from .reference import evaluate
from . import ops

__all__ = [
    "And",
    "Cmp",
    "IsNull",
    "Not",
    "Or",
    "Plan",
    "Predicate",
    "SortSpec",
    "TruePred",
    "UdfSpec",
    "WindowSpec",
    "evaluate",
    "ops",
    "scan",
]
