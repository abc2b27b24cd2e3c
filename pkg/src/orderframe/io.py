"""CSV ingestion, CSV emission, and fixed-width table rendering.

The CSV dialect is deliberately rigid: comma-separated (configurable to any
other single character), records end in LF or CRLF, fields quote with double
quotes and escape embedded quotes by doubling them. A record separator inside
a quoted field is rejected rather than consumed, which keeps the parser
strictly one-pass: every record boundary in the byte stream is a real record
boundary, so a prefix of the file is always a prefix of the table.

stdlib csv is not used here because it cannot express that rejection (it
happily swallows multi-line quoted fields) and its error reporting carries no
offsets. The dialect is an external contract, so the parser is spelled out.

Ingestion produces raw string cells only; the empty field is the null token.
Domain induction is deferred by default. With CsvOptions.induce_schema set,
the induction automata ride along inside the single assembly pass over the
parsed cells and the frame comes back with every column's domain already
memoized, at the same per-column counter cost as inducing later on demand.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Union

from .errors import QuoteError, RaggedRow
from .model import (
    Dataframe,
    Domain,
    DomainNarrower,
    cell_text,
)
from .stats import GLOBAL_STATS, EngineStats

_RECORD_ENDS = ("\r", "\n")


@dataclass(frozen=True)
class CsvOptions:
    """Dialect and ingestion switches.

    has_row_labels: treat column 0 as the row-label column; the header's
        corner field is discarded on read and written back as the empty field.
    delimiter: single field-separator character; may not collide with the
        quote or record-end characters.
    strict: reject a bare double quote inside an unquoted field instead of
        passing it through as data.
    induce_schema: run domain induction fused into the ingest pass.
    """

    has_row_labels: bool = False
    delimiter: str = ","
    strict: bool = False
    induce_schema: bool = False

    def __post_init__(self):
        if len(self.delimiter) != 1:
            raise ValueError("delimiter must be a single character")
        if self.delimiter in '"\r\n':
            raise ValueError("delimiter collides with quoting or record ends")


DEFAULT_OPTIONS = CsvOptions()


def _read_field(text: str, i: int, delim: str, strict: bool) -> tuple[str, int]:
    """Consume one field starting at offset i.

    Returns the field value and the offset of its terminator (delimiter,
    record end, or end of input). Never consumes the terminator itself.
    """
    end = len(text)
    if i < end and text[i] == '"':
        i += 1
        parts = []
        while True:
            if i >= end:
                raise QuoteError(f"unterminated quoted field at offset {i}")
            ch = text[i]
            if ch == '"':
                if i + 1 < end and text[i + 1] == '"':
                    parts.append('"')
                    i += 2
                    continue
                i += 1
                break
            if ch in _RECORD_ENDS:
                raise QuoteError(
                    f"record separator inside quoted field at offset {i}"
                )
            parts.append(ch)
            i += 1
        if i < end and text[i] != delim and text[i] not in _RECORD_ENDS:
            raise QuoteError(f"data after closing quote at offset {i}")
        return "".join(parts), i
    start = i
    while i < end and text[i] != delim and text[i] not in _RECORD_ENDS:
        if strict and text[i] == '"':
            raise QuoteError(f"bare quote in unquoted field at offset {i}")
        i += 1
    return text[start:i], i


def _split_records(text: str, delim: str, strict: bool) -> list[list[str]]:
    if not text:
        return []
    records: list[list[str]] = []
    fields: list[str] = []
    i, end = 0, len(text)
    while True:
        value, i = _read_field(text, i, delim, strict)
        fields.append(value)
        if i < end and text[i] == delim:
            i += 1
            continue
        if i < end:
            if text[i] == "\r":
                if i + 1 < end and text[i + 1] == "\n":
                    i += 2
                else:
                    raise QuoteError(f"bare carriage return at offset {i}")
            else:
                i += 1
        records.append(fields)
        fields = []
        if i >= end:
            return records


def _source_text(source) -> str:
    if hasattr(source, "read"):
        return source.read()
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", newline="") as fh:
            return fh.read()
    raise TypeError(f"source must be a path or file-like, got {source!r}")


def read_csv(
    source,
    opts: CsvOptions = DEFAULT_OPTIONS,
    stats: EngineStats = GLOBAL_STATS,
) -> Dataframe:
    """Parse a CSV source into a frame in file order.

    The first record names the columns; every later record is one row, in
    file order, all cells raw. Raises RaggedRow when a record's field count
    disagrees with the header and QuoteError on malformed quoting.
    """
    records = _split_records(_source_text(source), opts.delimiter, opts.strict)
    if not records:
        raise RaggedRow("source has no header record")
    header = records[0]
    width = len(header)
    for idx, record in enumerate(records[1:], start=2):
        if len(record) != width:
            raise RaggedRow(
                f"record {idx} has {len(record)} fields, expected {width}"
            )
    data = records[1:]
    m = len(data)
    if opts.has_row_labels:
        if width == 0:
            raise RaggedRow("row-label column requested but header is empty")
        row_labels = [record[0] for record in data]
        col_labels = header[1:]
        first = 1
    else:
        row_labels = None
        col_labels = header
        first = 0
    n = width - first

    narrowers = None
    if opts.induce_schema:
        narrowers = [DomainNarrower() for _ in range(n)]
    columns: list[list[str]] = [[] for _ in range(n)]
    for record in data:
        for j in range(n):
            cell = record[first + j]
            columns[j].append(cell)
            if narrowers is not None:
                narrowers[j].feed(cell)

    df = Dataframe(
        columns,
        row_labels=row_labels,
        col_labels=col_labels,
        m=m if not columns else None,
    )
    if narrowers is not None:
        # install the fused results through the same memo the deferred path
        # fills, at the same counter cost per column
        with df._lock:
            for j in range(n):
                df._induced[j] = narrowers[j].domain()
        for _ in range(n):
            stats.bump("s_invocations")
            stats.bump("scan_cell_visits", m)
    return df


def _emit_field(cell, delim: str) -> str:
    text = cell_text(cell)
    if "\r" in text or "\n" in text:
        raise QuoteError("cell contains a record separator; not representable")
    if delim in text or '"' in text:
        return '"' + text.replace('"', '""') + '"'
    return text


def write_csv(df: Dataframe, sink, opts: CsvOptions = DEFAULT_OPTIONS) -> None:
    """Emit a frame in the dialect read_csv accepts.

    Rows leave in logical order, cells in raw text form, LF record ends, a
    trailing record end after the last record. Reading the output back
    restores raw values, labels, and order exactly.
    """
    delim = opts.delimiter
    lines = []
    header = [_emit_field(label, delim) for label in df.col_label_list()]
    if opts.has_row_labels:
        header.insert(0, "")
    lines.append(delim.join(header))
    for i in range(df.m):
        fields = [_emit_field(cell, delim) for cell in df.logical_row(i)]
        if opts.has_row_labels:
            fields.insert(0, _emit_field(df.logical_row_label(i), delim))
        lines.append(delim.join(fields))
    text = "\n".join(lines) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
        return
    with open(sink, "w", newline="") as fh:
        fh.write(text)


_ELLIPSIS = "…"


def _column_domain(df: Dataframe, j: int, stats: EngineStats) -> Domain:
    dom = df.effective_domain(j)
    if dom is Domain.UNSPECIFIED:
        dom = df._induce_column(j, stats)
    return dom


def render(
    df: Dataframe,
    k: int = 5,
    stats: EngineStats = GLOBAL_STATS,
) -> str:
    """Fixed-width text table of the first and last k logical rows.

    Shows every row exactly once when m <= 2k; otherwise the first k, one
    ellipsis line, and the last k. Row labels sit left, column labels on top.
    Numeric columns right-align, which costs at most one induction per
    displayed column and none when the domain is already known.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    m, n = df.m, df.n
    if m > 2 * k:
        shown = list(range(k)) + list(range(m - k, m))
        gap_after = k
    else:
        shown = list(range(m))
        gap_after = None

    right = [
        _column_domain(df, j, stats) in (Domain.INT, Domain.FLOAT)
        for j in range(n)
    ]
    labels = [df.logical_row_label(i) for i in shown]
    body = [[cell_text(cell) for cell in df.logical_row(i)] for i in shown]
    if gap_after is not None:
        labels.insert(gap_after, _ELLIPSIS)
        body.insert(gap_after, [_ELLIPSIS] * n)

    label_width = max([len(s) for s in labels], default=0)
    headers = df.col_label_list()
    widths = [
        max([len(headers[j])] + [len(row[j]) for row in body])
        for j in range(n)
    ]

    def line(label: str, cells: list[str]) -> str:
        # the label column vanishes when nothing would ever print in it
        out = [] if label_width == 0 else [label.ljust(label_width)]
        for j, cell in enumerate(cells):
            out.append(cell.rjust(widths[j]) if right[j] else cell.ljust(widths[j]))
        return "  ".join(out).rstrip()

    lines = [line("", list(headers))]
    for label, row in zip(labels, body):
        lines.append(line(label, row))
    return "\n".join(lines)
