"""pandas-flavored calls rewritten into kernel statements.

Every method here expands to one or more statements in the CLI language and
nothing else; the shim computes no values of its own. A ShimFrame is just a
bound name inside the kernel session. Anything outside the supported subset
raises UnsupportedCall rather than approximating.

Known deviations from pandas, all documented here rather than hidden:

- groupby(...).count()/.sum() promote a single grouping key to row labels
  (to_labels) to mirror pandas putting keys in the index; with several keys
  the promotion is skipped because kernel labels are flat strings.
- iloc reads return the cell's text, never a parsed scalar.
- column access returns a one-column frame, not a Series.
"""

from .session import KernelSession, ShimError, quote

__all__ = ["Session", "ShimFrame", "UnsupportedCall", "get_dummies"]


class UnsupportedCall(ShimError):
    """The call is outside the supported pandas subset."""


def _ref(value):
    # column or row reference: quoted label, or a bare position
    if isinstance(value, str):
        return quote(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise UnsupportedCall(f"row/column reference must be str or int, "
                              f"got {value!r}")
    return str(value)


def _listify(value):
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


class Session:
    """One kernel subprocess plus a namespace of bound frames."""

    def __init__(self, **kernel_kwargs):
        self._kernel = KernelSession(**kernel_kwargs)

    def read_csv(self, path, index_col=None):
        args = [quote(str(path))]
        if index_col is not None:
            if index_col != 0:
                raise UnsupportedCall("only index_col=0 is supported")
            args.append("labels")
        return self._bind(f"read_csv({', '.join(args)})")

    def _bind(self, expr, solo=None):
        name = self._kernel.fresh_name()
        self._kernel.send([f"{name} = {expr}"])
        return ShimFrame(self, name, solo)

    def close(self):
        self._kernel.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ShimFrame:
    def __init__(self, session, name, solo=None):
        object.__setattr__(self, "_session", session)
        object.__setattr__(self, "_name", name)
        object.__setattr__(self, "_solo", solo)
        object.__setattr__(self, "iloc", _ILoc(self))

    # --- display -----------------------------------------------------------

    def render(self) -> str:
        return "\n".join(self._session._kernel.send([self._name]))

    def __repr__(self) -> str:
        return self.render()

    __str__ = __repr__

    # --- single-statement rewrites ------------------------------------------

    def _derive(self, expr, solo=None):
        return self._session._bind(expr, solo)

    def head(self, n=5):
        return self._derive(f"head({self._name}, {_ref(n)})")

    def tail(self, n=5):
        return self._derive(f"tail({self._name}, {_ref(n)})")

    @property
    def T(self):
        return self._derive(f"transpose({self._name})")

    def set_index(self, col):
        return self._derive(f"to_labels({self._name}, {_ref(col)})")

    def reset_index(self):
        # pandas names the demoted index column "index"
        return self._derive(f'from_labels({self._name}, "index")')

    def drop_duplicates(self):
        return self._derive(f"drop_duplicates({self._name})")

    def fillna(self, value):
        if not isinstance(value, str):
            value = format(value)
        return self._derive(f"map({self._name}, fillna, {quote(value)})")

    def isnull(self):
        return self._derive(f"map({self._name}, isnull)")

    def append(self, other):
        if not isinstance(other, ShimFrame):
            raise UnsupportedCall("append expects another frame")
        return self._derive(f"union({self._name}, {other._name})")

    def sort_values(self, by, ascending=True):
        keys = _listify(by)
        flags = _listify(ascending)
        if len(flags) == 1:
            flags = flags * len(keys)
        if len(flags) != len(keys):
            raise UnsupportedCall("ascending must match the sort keys")
        parts = []
        for key, flag in zip(keys, flags):
            parts.append(_ref(key))
            parts.append("asc" if flag else "desc")
        return self._derive(f"sort({self._name}, {', '.join(parts)})")

    def merge(self, right, how="inner", on=None, left_on=None, right_on=None):
        if not isinstance(right, ShimFrame):
            raise UnsupportedCall("merge expects another frame")
        if how not in ("inner", "left", "cross"):
            raise UnsupportedCall(f"merge how={how!r} is not supported")
        if on is not None:
            left_on = right_on = on
        pairs = []
        if left_on is not None or right_on is not None:
            lefts, rights = _listify(left_on), _listify(right_on)
            if len(lefts) != len(rights):
                raise UnsupportedCall("left_on and right_on must pair up")
            for l, r in zip(lefts, rights):
                pairs.extend([_ref(l), _ref(r)])
        elif how != "cross":
            raise UnsupportedCall("merge needs on= or left_on=/right_on=")
        tail = (", " + ", ".join(pairs)) if pairs else ""
        return self._derive(f"join({self._name}, {right._name}, {how}{tail})")

    def groupby(self, by):
        return _GroupBy(self, _listify(by))

    def pivot(self, index=None, columns=None, values=None):
        if index is None or columns is None or values is None:
            raise UnsupportedCall("pivot needs index=, columns=, and values=")
        return self._derive(
            f"pivot({self._name}, {_ref(columns)}, {_ref(index)}, "
            f"{_ref(values)})"
        )

    # --- column access -------------------------------------------------------

    def __getitem__(self, col):
        if not isinstance(col, str):
            raise UnsupportedCall("column access takes a label")
        return self._derive(f"projection({self._name}, {_ref(col)})", solo=col)

    @property
    def str(self):
        return _StrAccessor(self)

    # --- everything else is explicit ----------------------------------------

    def __getattr__(self, name):
        if name.startswith("__") and name.endswith("__"):
            raise AttributeError(name)
        raise UnsupportedCall(f"ShimFrame.{name} is outside the supported "
                              f"subset")

    def __setattr__(self, name, value):
        raise UnsupportedCall(f"cannot assign ShimFrame.{name}")


class _ILoc:
    """Point get/set by logical position."""

    def __init__(self, frame):
        self._frame = frame

    def _split(self, key):
        if not isinstance(key, tuple) or len(key) != 2:
            raise UnsupportedCall("iloc takes [row, column]")
        return key

    def __getitem__(self, key):
        row, col = self._split(key)
        frame = self._frame
        lines = frame._session._kernel.send(
            [f"get_cell({frame._name}, {_ref(row)}, {_ref(col)})"]
        )
        return "\n".join(lines)

    def __setitem__(self, key, value):
        row, col = self._split(key)
        if not isinstance(value, str):
            value = format(value)
        frame = self._frame
        # rebind the same name so this frame sees the update
        frame._session._kernel.send(
            [f"{frame._name} = set_cell({frame._name}, {_ref(row)}, "
             f"{_ref(col)}, {quote(value)})"]
        )


class _StrAccessor:
    def __init__(self, frame):
        self._frame = frame

    def upper(self):
        frame = self._frame
        return frame._derive(f"map({frame._name}, str_upper)",
                             solo=frame._solo)

    def __getattr__(self, name):
        raise UnsupportedCall(f".str.{name} is outside the supported subset")


class _GroupBy:
    def __init__(self, frame, keys):
        if not keys:
            raise UnsupportedCall("groupby needs at least one key")
        self._frame = frame
        self._keys = keys

    def _agg(self, word):
        frame = self._frame
        keys = ", ".join(_ref(k) for k in self._keys)
        out = frame._derive(f"groupby({frame._name}, {keys}, {word})")
        if len(self._keys) == 1:
            # pandas moves the key into the index; flat labels allow one key
            return out.set_index(self._keys[0])
        return out

    def count(self):
        return self._agg("count")

    def sum(self):
        return self._agg("sum")

    def __getattr__(self, name):
        raise UnsupportedCall(f"groupby.{name} is outside the supported "
                              f"subset")


def get_dummies(frame, column=None):
    """Indicator columns for one column's values, in first-seen order."""
    if not isinstance(frame, ShimFrame):
        raise UnsupportedCall("get_dummies expects a frame")
    col = column if column is not None else frame._solo
    if col is None:
        raise UnsupportedCall("get_dummies needs a single column; index one "
                              "first or pass column=")
    return frame._derive(f"map({frame._name}, one_hot, {_ref(col)})")
