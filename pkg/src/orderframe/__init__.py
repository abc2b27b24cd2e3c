"""Ordered-dataframe kernel: algebra, planner, block execution engine, CSV CLI."""

from .errors import (
    AmbiguousLabel,
    ArityMismatch,
    IncomparableDomains,
    IndexOutOfBounds,
    KernelError,
    LabelNotFound,
    ParseError,
    QuoteError,
    RaggedRow,
    StatementError,
    UdfArityViolation,
    UdfFailure,
    UnknownColumn,
)
from .io import CsvOptions, read_csv, render, write_csv
from .model import (
    Cell,
    Dataframe,
    Domain,
    cell_text,
    induce_all,
    induce_schema,
    is_null,
    parse,
    point_get,
    point_set,
    raw_form,
)
from .stats import GLOBAL_STATS, EngineStats

__all__ = [
    "AmbiguousLabel",
    "ArityMismatch",
    "Cell",
    "CsvOptions",
    "Dataframe",
    "Domain",
    "EngineStats",
    "GLOBAL_STATS",
    "IncomparableDomains",
    "IndexOutOfBounds",
    "KernelError",
    "LabelNotFound",
    "ParseError",
    "QuoteError",
    "RaggedRow",
    "StatementError",
    "UdfArityViolation",
    "UdfFailure",
    "UnknownColumn",
    "cell_text",
    "induce_all",
    "induce_schema",
    "is_null",
    "parse",
    "point_get",
    "point_set",
    "raw_form",
    "read_csv",
    "render",
    "write_csv",
]
