"""Statement-language driver over the planner and engine.

A session is a sequence of statements, one per line (or several per line
separated by semicolons):

    name = expr        bind the expression's handle, print nothing
    expr               run and print the first and last five rows
    explain(expr)      print the planner's before/after account
    stats()            print the engine's counters
    get_cell(f, i, j)  print one cell's raw text

Expressions are calls over the operator algebra plus the ingest and pivot
entry points, with bound names as frame references. Each statement is
rewritten in isolation: a bound name enters later plans as an opaque
reference carrying only the digest of what it was bound to, so the planner
never reaches across a binding.

The expression grammar is small enough that positions fit in one integer:
every statement error carries the 1-based column where parsing stopped.
"""

from __future__ import annotations

import argparse
import re
import sys
from typing import Optional

from . import io as frame_io
from .engine import DEFAULT_BLOCK_SHAPE, Engine, Handle
from .errors import KernelError, StatementError
from .model import Dataframe, cell_text, point_set
from .algebra.plan import (
    And,
    Cmp,
    IsNull,
    Not,
    Or,
    Plan,
    SortSpec,
    TruePred,
    UdfSpec,
    WindowSpec,
    scan,
)
from .planner import rewrite

# === tokens ===

_NAME_START = re.compile(r"[A-Za-z_]")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT_RE = re.compile(r"-?[0-9]+")
_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}


def _tokenize(text: str) -> list[tuple[str, object, int]]:
    tokens = []
    i, end = 0, len(text)
    while i < end:
        ch = text[i]
        if ch in " \t":
            i += 1
            continue
        if ch == "#":
            break
        if ch in "=(),;":
            tokens.append((ch, ch, i))
            i += 1
            continue
        if ch == '"':
            start = i
            i += 1
            parts = []
            while True:
                if i >= end:
                    raise StatementError(f"unterminated string at column {start + 1}")
                ch = text[i]
                if ch == '"':
                    i += 1
                    break
                if ch == "\\":
                    if i + 1 >= end or text[i + 1] not in _ESCAPES:
                        raise StatementError(f"bad escape at column {i + 1}")
                    parts.append(_ESCAPES[text[i + 1]])
                    i += 2
                    continue
                parts.append(ch)
                i += 1
            tokens.append(("str", "".join(parts), start))
            continue
        if _NAME_START.match(ch):
            match = _NAME_RE.match(text, i)
            tokens.append(("name", match.group(), i))
            i = match.end()
            continue
        match = _INT_RE.match(text, i)
        if match and match.group() != "-":
            tokens.append(("int", int(match.group()), i))
            i = match.end()
            continue
        raise StatementError(f"unexpected character {ch!r} at column {i + 1}")
    return tokens


# === syntax nodes ===


class _Call:
    __slots__ = ("name", "args", "pos")

    def __init__(self, name, args, pos):
        self.name = name
        self.args = args
        self.pos = pos


class _Word:
    __slots__ = ("text", "pos")

    def __init__(self, text, pos):
        self.text = text
        self.pos = pos


class _Str:
    __slots__ = ("value", "pos")

    def __init__(self, value, pos):
        self.value = value
        self.pos = pos


class _Int:
    __slots__ = ("value", "pos")

    def __init__(self, value, pos):
        self.value = value
        self.pos = pos


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def _peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, -1)

    def _take(self):
        if self.i >= len(self.tokens):
            raise StatementError("statement ends unexpectedly")
        token = self.tokens[self.i]
        self.i += 1
        return token

    def statement(self):
        """Returns (bound name or None, expression node)."""
        if (
            len(self.tokens) >= 2
            and self.tokens[0][0] == "name"
            and self.tokens[1][0] == "="
        ):
            name = self.tokens[0][1]
            self.i = 2
            expr = self.expression()
            self._finish()
            return name, expr
        expr = self.expression()
        self._finish()
        return None, expr

    def _finish(self):
        kind, value, pos = self._peek()
        if kind is not None:
            raise StatementError(f"trailing {value!r} at column {pos + 1}")

    def expression(self):
        kind, value, pos = self._take()
        if kind == "str":
            return _Str(value, pos)
        if kind == "int":
            return _Int(value, pos)
        if kind == "name":
            if self._peek()[0] == "(":
                self._take()
                args = []
                if self._peek()[0] == ")":
                    self._take()
                    return _Call(value, args, pos)
                while True:
                    args.append(self.expression())
                    kind2, value2, pos2 = self._take()
                    if kind2 == ")":
                        return _Call(value, args, pos)
                    if kind2 != ",":
                        raise StatementError(
                            f"expected ',' or ')' at column {pos2 + 1}"
                        )
            return _Word(value, pos)
        raise StatementError(f"unexpected {value!r} at column {pos + 1}")


def parse_statements(text: str) -> list[tuple[Optional[str], object]]:
    """Split one line into statements and parse each."""
    tokens = _tokenize(text)
    groups: list[list] = [[]]
    for token in tokens:
        if token[0] == ";":
            groups.append([])
        else:
            groups[-1].append(token)
    parsed = []
    for group in groups:
        if group:
            parsed.append(_Parser(group).statement())
    return parsed


# === expression -> plan ===


def _fail(node, message: str):
    raise StatementError(f"{message} at column {node.pos + 1}")


def _colref(node):
    if isinstance(node, _Str):
        return node.value
    if isinstance(node, _Int):
        return node.value
    _fail(node, "expected a column label or position")


def _text_arg(node):
    if isinstance(node, _Str):
        return node.value
    _fail(node, "expected a string")


def _int_arg(node):
    if isinstance(node, _Int):
        return node.value
    _fail(node, "expected an integer")


def _word(node):
    return node.text if isinstance(node, _Word) else None


_CMP_WORDS = {"eq", "ne", "lt", "le", "gt", "ge"}


def _predicate(node):
    if isinstance(node, _Word) and node.text == "true":
        return TruePred()
    if not isinstance(node, _Call):
        _fail(node, "expected a predicate")
    name, args = node.name, node.args
    if name in _CMP_WORDS:
        if len(args) != 2:
            _fail(node, f"{name} takes a column and a literal")
        return Cmp(name, _colref(args[0]), _text_arg(args[1]))
    if name == "isnull":
        if len(args) != 1:
            _fail(node, "isnull takes one column")
        return IsNull(_colref(args[0]))
    if name == "not":
        if len(args) != 1:
            _fail(node, "not takes one predicate")
        return Not(_predicate(args[0]))
    if name in ("and", "or"):
        if len(args) != 2:
            _fail(node, f"{name} takes two predicates")
        cls = And if name == "and" else Or
        return cls(_predicate(args[0]), _predicate(args[1]))
    if name == "true":
        return TruePred()
    _fail(node, f"unknown predicate {name!r}")


def _sort_keys(nodes, owner):
    keys = []
    for node in nodes:
        word = _word(node)
        if word in ("asc", "desc"):
            if not keys:
                _fail(node, f"{word} must follow a sort key")
            keys[-1] = (keys[-1][0], word == "asc")
        else:
            keys.append((_colref(node), True))
    if not keys:
        _fail(owner, "sort needs at least one key")
    return SortSpec(keys)


class Session:
    """Bindings plus the engine they were built against.

    A binding never changes once made; assigning the same name again simply
    shadows it, and plans that referenced the old handle keep it alive.
    """

    def __init__(
        self,
        engine: Engine,
        k: int = 5,
        strict_union: bool = False,
        explain_all: bool = False,
    ):
        self.engine = engine
        self.bindings: dict[str, Handle] = {}
        self.k = k
        self.strict_union = strict_union
        self.explain_all = explain_all
        self.statements = 0

    # -- building ------------------------------------------------------------

    def _frame(self, node) -> Plan:
        if isinstance(node, _Word):
            handle = self.bindings.get(node.text)
            if handle is None:
                _fail(node, f"unknown name {node.text!r}")
            return Plan("ref", name=node.text, digest=handle.digest, handle=handle)
        if isinstance(node, _Call):
            return self._call(node)
        _fail(node, "expected a frame expression")

    def _call(self, node) -> Plan:
        builder = _BUILDERS.get(node.name)
        if builder is None:
            _fail(node, f"unknown function {node.name!r}")
        return builder(self, node)

    # -- running -------------------------------------------------------------

    def run_statement(self, text: str) -> str:
        """Run every statement on the line; returns the printable output."""
        outputs = []
        for name, expr in parse_statements(text):
            self.statements += 1
            outputs.extend(self._run_one(name, expr))
        return "\n".join(outputs)

    def _run_one(self, name, expr) -> list[str]:
        if isinstance(expr, _Call) and expr.name == "stats":
            if expr.args:
                _fail(expr, "stats takes no arguments")
            if name is not None:
                _fail(expr, "stats cannot be bound")
            return [self.engine.stats.dump()]
        if isinstance(expr, _Call) and expr.name == "explain":
            if len(expr.args) != 1:
                _fail(expr, "explain takes one expression")
            if name is not None:
                _fail(expr, "explain cannot be bound")
            planned = rewrite(self._frame(expr.args[0]))
            return [planned.explain()]
        if isinstance(expr, _Call) and expr.name == "get_cell":
            if name is not None:
                _fail(expr, "get_cell cannot be bound")
            if len(expr.args) != 3:
                _fail(expr, "get_cell takes a frame, a row, and a column")
            frame = self._materialize(expr.args[0])
            from .model import point_get
            cell = point_get(
                frame, _colref(expr.args[1]), _colref(expr.args[2]),
                self.engine.stats,
            )
            return [cell_text(cell)]

        # a bare bound name displays without replanning
        if name is None and isinstance(expr, _Word) and expr.text in self.bindings:
            return self._display(self.bindings[expr.text])

        plan = self._frame(expr)
        planned = rewrite(plan)
        prefix = [planned.explain()] if self.explain_all else []
        handle = self.engine.submit(planned.root)
        if name is not None:
            self.bindings[name] = handle
            return prefix
        return prefix + self._display(handle)

    def _display(self, handle: Handle) -> list[str]:
        return [frame_io.render(handle.result(), self.k, self.engine.stats)]

    def _materialize(self, node) -> Dataframe:
        if isinstance(node, _Word) and node.text in self.bindings:
            return self.bindings[node.text].result()
        return self.engine.submit(rewrite(self._frame(node)).root).result()

    def _bind_frame(self, df: Dataframe) -> Plan:
        return scan(df)


# === operator builders ===


def _build_read_csv(session, node):
    if not node.args:
        _fail(node, "read_csv needs a path")
    path = _text_arg(node.args[0])
    labels = induce = strict = False
    for extra in node.args[1:]:
        word = _word(extra)
        if word == "labels":
            labels = True
        elif word == "induced":
            induce = True
        elif word == "strict":
            strict = True
        else:
            _fail(extra, "expected labels, induced, or strict")
    opts = frame_io.CsvOptions(
        has_row_labels=labels, strict=strict, induce_schema=induce
    )
    try:
        df = frame_io.read_csv(path, opts, session.engine.stats)
    except OSError as exc:
        _fail(node, f"cannot read {path!r}: {exc}")
    return scan(df)


def _build_selection(session, node):
    if len(node.args) < 2:
        _fail(node, "selection needs a frame and positions or a predicate")
    child = session._frame(node.args[0])
    rest = node.args[1:]
    if all(isinstance(a, _Int) for a in rest):
        return Plan("selection", [child], positions=tuple(a.value for a in rest))
    if len(rest) != 1:
        _fail(node, "selection takes one predicate")
    return Plan("selection", [child], pred=_predicate(rest[0]))


def _build_projection(session, node):
    if len(node.args) < 2:
        _fail(node, "projection needs a frame and column refs")
    child = session._frame(node.args[0])
    return Plan("projection", [child], refs=tuple(_colref(a) for a in node.args[1:]))


def _build_union(session, node):
    if len(node.args) not in (2, 3):
        _fail(node, "union takes two frames")
    strict = session.strict_union
    if len(node.args) == 3:
        if _word(node.args[2]) != "strict":
            _fail(node.args[2], "expected strict")
        strict = True
    a = session._frame(node.args[0])
    b = session._frame(node.args[1])
    return Plan("union", [a, b], strict=strict)


def _build_difference(session, node):
    if len(node.args) != 2:
        _fail(node, "difference takes two frames")
    return Plan(
        "difference",
        [session._frame(node.args[0]), session._frame(node.args[1])],
    )


def _build_join(session, node):
    if len(node.args) < 3:
        _fail(node, "join needs two frames and a kind")
    a = session._frame(node.args[0])
    b = session._frame(node.args[1])
    kind = _word(node.args[2])
    if kind not in ("cross", "inner", "left"):
        _fail(node.args[2], "join kind must be cross, inner, or left")
    rest = node.args[3:]
    if len(rest) % 2:
        _fail(node, "join keys come in left,right pairs")
    on = tuple(
        (_colref(rest[i]), _colref(rest[i + 1])) for i in range(0, len(rest), 2)
    )
    return Plan("join", [a, b], kind=kind, on=on)


def _build_groupby(session, node):
    if len(node.args) < 3:
        _fail(node, "groupby needs a frame, keys, and an aggregate")
    child = session._frame(node.args[0])
    keys = []
    agg = None
    targets = []
    for arg in node.args[1:]:
        word = _word(arg)
        if word is not None and agg is None:
            agg = word
        elif agg is None:
            keys.append(_colref(arg))
        else:
            targets.append(_colref(arg))
    if agg is None:
        _fail(node, "groupby needs an aggregate word")
    if not keys:
        _fail(node, "groupby needs at least one key")
    params = {"keys": tuple(keys), "agg": agg}
    if targets:
        params["targets"] = tuple(targets)
    return Plan("groupby", [child], **params)


def _build_sort(session, node):
    if len(node.args) < 2:
        _fail(node, "sort needs a frame and keys")
    child = session._frame(node.args[0])
    return Plan("sort", [child], spec=_sort_keys(node.args[1:], node))


def _build_sort_columns(session, node):
    if len(node.args) < 2:
        _fail(node, "sort_columns needs a frame and keys")
    child = session._frame(node.args[0])
    return Plan("sort_columns", [child], spec=_sort_keys(node.args[1:], node))


def _build_window(session, node):
    if len(node.args) < 3:
        _fail(node, "window needs a frame, a function, and targets")
    child = session._frame(node.args[0])
    func = _word(node.args[1])
    if func not in WindowSpec.FUNCS:
        _fail(node.args[1], f"unknown window function {func!r}")
    rest = list(node.args[2:])
    param = 1
    if rest and isinstance(rest[0], _Int):
        param = rest.pop(0).value
    reverse = False
    if rest and _word(rest[-1]) == "reverse":
        reverse = True
        rest.pop()
    if not rest:
        _fail(node, "window needs target columns")
    targets = tuple(_colref(a) for a in rest)
    return Plan(
        "window", [child], spec=WindowSpec(func, param, reverse), targets=targets
    )


def _build_map(session, node):
    if len(node.args) < 2:
        _fail(node, "map needs a frame and a builtin name")
    child = session._frame(node.args[0])
    name = _word(node.args[1])
    if name not in UdfSpec.BUILTINS:
        _fail(node.args[1], f"unknown map builtin {name!r}")
    args = tuple(_colref(a) for a in node.args[2:])
    return Plan("map", [child], udf=UdfSpec(name, args))


def _build_rename(session, node):
    if len(node.args) < 3 or len(node.args) % 2 == 0:
        _fail(node, "rename takes old,new label pairs")
    child = session._frame(node.args[0])
    rest = node.args[1:]
    mapping = tuple(
        (_text_arg(rest[i]), _text_arg(rest[i + 1])) for i in range(0, len(rest), 2)
    )
    return Plan("rename", [child], mapping=mapping)


def _unary(kind):
    def build(session, node):
        if len(node.args) != 1:
            _fail(node, f"{kind} takes one frame")
        return Plan(kind, [session._frame(node.args[0])])
    return build


def _with_k(kind):
    def build(session, node):
        if len(node.args) != 2:
            _fail(node, f"{kind} takes a frame and a count")
        child = session._frame(node.args[0])
        return Plan(kind, [child], k=_int_arg(node.args[1]))
    return build


def _with_label(kind, param):
    def build(session, node):
        if len(node.args) != 2:
            _fail(node, f"{kind} takes a frame and a column")
        child = session._frame(node.args[0])
        return Plan(kind, [child], **{param: _colref(node.args[1])})
    return build


def _build_pivot(session, node):
    if len(node.args) != 4:
        _fail(node, "pivot takes a frame and three columns")
    child = session._frame(node.args[0])
    return Plan(
        "pivot",
        [child],
        pivot_col=_colref(node.args[1]),
        key_col=_colref(node.args[2]),
        value_col=_colref(node.args[3]),
    )


def _build_set_cell(session, node):
    if len(node.args) != 4:
        _fail(node, "set_cell takes a frame, row, column, and value")
    frame = session._materialize(node.args[0])
    updated = point_set(
        frame,
        _colref(node.args[1]),
        _colref(node.args[2]),
        _text_arg(node.args[3]),
        session.engine.stats,
    )
    return scan(updated)


_BUILDERS = {
    "read_csv": _build_read_csv,
    "selection": _build_selection,
    "projection": _build_projection,
    "union": _build_union,
    "difference": _build_difference,
    "join": _build_join,
    "groupby": _build_groupby,
    "sort": _build_sort,
    "sort_columns": _build_sort_columns,
    "window": _build_window,
    "map": _build_map,
    "rename": _build_rename,
    "transpose": _unary("transpose"),
    "drop_duplicates": _unary("drop_duplicates"),
    "head": _with_k("head"),
    "tail": _with_k("tail"),
    "to_labels": _with_label("to_labels", "label"),
    "from_labels": _with_label("from_labels", "label"),
    "mark_sorted": _with_label("mark_sorted", "col"),
    "pivot": _build_pivot,
    "set_cell": _build_set_cell,
}


# === entry point ===


def _block_shape(text: str) -> tuple[int, int]:
    match = re.fullmatch(r"([0-9]+)x([0-9]+)", text)
    if not match:
        raise argparse.ArgumentTypeError("block shape must look like 4096x64")
    shape = (int(match.group(1)), int(match.group(2)))
    if 0 in shape:
        raise argparse.ArgumentTypeError("block shape must be positive")
    return shape


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orderframe",
        description="ordered-dataframe statement driver",
    )
    parser.add_argument(
        "--mode",
        choices=("eager", "lazy", "opportunistic"),
        default="opportunistic",
    )
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--cache-bytes", type=int, default=None)
    parser.add_argument("--block-shape", type=_block_shape, default=None)
    parser.add_argument("--explain", action="store_true")
    parser.add_argument("--stats", action="store_true")
    parser.add_argument("--strict-union", action="store_true")
    parser.add_argument("--script", metavar="FILE", default=None)
    return parser


def _make_engine(args) -> Engine:
    kwargs = {"mode": args.mode, "threads": args.threads}
    if args.cache_bytes is not None:
        kwargs["cache_bytes"] = args.cache_bytes
    if args.block_shape is not None:
        kwargs["block_shape"] = args.block_shape
    return Engine(**kwargs)


def run_script(session: Session, text: str, out, err) -> int:
    for lineno, line in enumerate(text.splitlines(), start=1):
        try:
            output = session.run_statement(line)
        except KernelError as exc:
            print(f"error: line {lineno}: {exc}", file=err)
            return 1
        if output:
            print(output, file=out)
    return 0


def run_interactive(session: Session, stdin, out, err) -> int:
    prompt = "> " if stdin.isatty() else ""
    while True:
        if prompt:
            out.write(prompt)
            out.flush()
        line = stdin.readline()
        if not line:
            return 0
        try:
            output = session.run_statement(line.rstrip("\n"))
        except KernelError as exc:
            print(f"error: {exc}", file=err)
            err.flush()
            continue
        if output:
            print(output, file=out)
            out.flush()  # piped drivers read responses line by line


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        engine = _make_engine(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    session = Session(
        engine,
        strict_union=args.strict_union,
        explain_all=args.explain,
    )
    try:
        if args.script is not None:
            try:
                with open(args.script, "r") as fh:
                    text = fh.read()
            except OSError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 1
            code = run_script(session, text, sys.stdout, sys.stderr)
        else:
            code = run_interactive(session, sys.stdin, sys.stdout, sys.stderr)
        if args.stats:
            print(engine.stats.dump())
        return code
    finally:
        engine.close()


if __name__ == "__main__":
    sys.exit(main())
