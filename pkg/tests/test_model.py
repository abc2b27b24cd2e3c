"""Tests for the value model: parsing, induction, point access, ordering."""

from __future__ import annotations

import pytest

from orderframe import (
    Dataframe,
    Domain,
    EngineStats,
    IndexOutOfBounds,
    LabelNotFound,
    ParseError,
    cell_text,
    induce_all,
    induce_schema,
    is_null,
    parse,
    point_get,
    point_set,
    raw_form,
)


# === Parsing ===


class TestParse:
    def test_int_text(self):
        assert parse("120", Domain.INT) == 120
        assert parse("-7", Domain.INT) == -7
        assert parse("+42", Domain.INT) == 42

    def test_empty_string_is_null_in_every_domain(self):
        for dom in (Domain.STR, Domain.INT, Domain.FLOAT, Domain.BOOL, Domain.CATEGORY):
            assert parse("", dom) is None

    def test_none_stays_null(self):
        assert parse(None, Domain.INT) is None

    def test_mismatch_raises(self):
        with pytest.raises(ParseError):
            parse("12MP", Domain.INT)
        with pytest.raises(ParseError):
            parse("1.5.2", Domain.FLOAT)
        with pytest.raises(ParseError):
            parse("yes", Domain.BOOL)

    def test_float_text(self):
        assert parse("1.5", Domain.FLOAT) == 1.5
        assert parse("-2e3", Domain.FLOAT) == -2000.0
        assert parse(".5", Domain.FLOAT) == 0.5
        assert parse("100", Domain.FLOAT) == 100.0

    def test_float_rejects_non_numeric_tokens(self):
        # float() would accept these; the domain does not
        for text in ("nan", "inf", "-inf", "1_000"):
            with pytest.raises(ParseError):
                parse(text, Domain.FLOAT)

    def test_bool_text_case_insensitive(self):
        assert parse("true", Domain.BOOL) is True
        assert parse("False", Domain.BOOL) is False
        assert parse("TRUE", Domain.BOOL) is True

    def test_str_accepts_anything(self):
        assert parse("12MP", Domain.STR) == "12MP"
        assert parse(120, Domain.STR) == "120"

    def test_int64_bounds(self):
        assert parse(str(2**63 - 1), Domain.INT) == 2**63 - 1
        with pytest.raises(ParseError):
            parse(str(2**63), Domain.INT)
        with pytest.raises(ParseError):
            parse(str(-(2**63) - 1), Domain.INT)

    def test_typed_cells_pass_through(self):
        assert parse(120, Domain.INT) == 120
        assert parse(1.5, Domain.FLOAT) == 1.5
        assert parse(True, Domain.BOOL) is True
        assert parse(7, Domain.FLOAT) == 7.0

    def test_bool_is_not_an_int(self):
        with pytest.raises(ParseError):
            parse(True, Domain.INT)

    def test_int_rejects_whitespace_and_decorations(self):
        for text in (" 7", "7 ", "0x10", "1,000"):
            with pytest.raises(ParseError):
                parse(text, Domain.INT)


# === Schema induction ===


class TestInduceSchema:
    def test_all_int(self):
        assert induce_schema(["100", "110", "120"]) is Domain.INT

    def test_int_with_decimal_falls_to_float(self):
        assert induce_schema(["100", "1.5", ""]) is Domain.FLOAT

    def test_words_fall_to_str(self):
        assert induce_schema(["Yes", "No", "Yes"]) is Domain.STR

    def test_bool_tokens(self):
        assert induce_schema(["true", "false", ""]) is Domain.BOOL

    def test_all_null_is_str(self):
        assert induce_schema(["", "", None]) is Domain.STR
        assert induce_schema([]) is Domain.STR

    def test_nulls_are_skipped(self):
        assert induce_schema(["", "42", None]) is Domain.INT

    def test_one_bad_cell_poisons_the_column(self):
        assert induce_schema(["100", "110", "120MP"]) is Domain.STR

    def test_overflow_int_becomes_float(self):
        assert induce_schema([str(2**63), "1"]) is Domain.FLOAT

    def test_precedence_int_before_float(self):
        # every Int member is also a Float member; Int wins
        assert induce_schema(["1", "2"]) is Domain.INT

    def test_typed_cells_participate(self):
        assert induce_schema([1, 2, "3"]) is Domain.INT
        assert induce_schema([1.5, "2"]) is Domain.FLOAT
        assert induce_schema([True, "false"]) is Domain.BOOL
        assert induce_schema([1, "x"]) is Domain.STR

    def test_never_category_or_unspecified(self):
        for col in (["a"], ["1"], [""], ["true"]):
            assert induce_schema(col) not in (Domain.CATEGORY, Domain.UNSPECIFIED)

    def test_permutation_invariant(self):
        col = ["1", "2.5", "", "7", "x", "true"]
        base = induce_schema(col)
        assert induce_schema(list(reversed(col))) is base
        assert induce_schema(col[3:] + col[:3]) is base


# === Cell helpers ===


class TestCellHelpers:
    def test_null_forms(self):
        assert is_null(None) and is_null("")
        assert not is_null("0") and not is_null(0) and not is_null(False)

    def test_text_round_trip(self):
        assert cell_text(120) == "120"
        assert cell_text(1.5) == "1.5"
        assert cell_text(True) == "true"
        assert cell_text(None) == ""

    def test_raw_form_unifies_typed_and_text(self):
        assert raw_form(120) == raw_form("120")
        assert raw_form(None) == raw_form("")
        assert raw_form(1.5) == raw_form("1.5")
        assert raw_form(True) == raw_form("true")


# === Frame construction and ordering ===


def small_frame():
    return Dataframe(
        [["2001", "2001", "2002"], ["Jan", "Feb", "Jan"], ["100", "110", "150"]],
        col_labels=["Year", "Month", "Sales"],
    )


class TestFrame:
    def test_shape_and_default_labels(self):
        df = small_frame()
        assert df.shape == (3, 3)
        assert df.row_label_list() == ["0", "1", "2"]
        assert df.col_label_list() == ["Year", "Month", "Sales"]
        assert df.schema == (Domain.UNSPECIFIED,) * 3

    def test_order_vector_reorders_without_copying(self):
        df = small_frame()
        flipped = Dataframe(
            [df.physical_column(j) for j in range(df.n)],
            row_labels=df.row_labels,
            col_labels=df.col_labels,
            order=[2, 1, 0],
        )
        assert flipped.column(2) == ["150", "110", "100"]
        assert flipped.logical_row_label(0) == "2"
        # storage is shared, only the order vector differs
        assert flipped.physical_column(2) is df.physical_column(2)

    def test_order_must_be_permutation(self):
        with pytest.raises(ValueError):
            Dataframe([["a", "b"]], order=[0, 0])
        with pytest.raises(ValueError):
            Dataframe([["a", "b"]], order=[1, 2])

    def test_empty_frame_needs_explicit_m(self):
        df = Dataframe([], m=0)
        assert df.shape == (0, 0)
        with pytest.raises(ValueError):
            Dataframe([])

    def test_cells_are_plain_python_values(self):
        df = small_frame()
        v = df.cell(0, 2)
        assert type(v) is str and v == "100"


# === induce_all bookkeeping ===


class TestInduceAll:
    def test_counter_bumps_once_per_column(self):
        stats = EngineStats()
        df = small_frame()
        out = induce_all(df, stats=stats)
        assert out.schema == (Domain.INT, Domain.STR, Domain.INT)
        assert stats.snapshot()["s_invocations"] == 3

    def test_second_call_is_free(self):
        stats = EngineStats()
        df = small_frame()
        induce_all(df, stats=stats)
        induce_all(df, stats=stats)
        assert stats.snapshot()["s_invocations"] == 3

    def test_subset_of_columns(self):
        stats = EngineStats()
        df = small_frame()
        out = induce_all(df, cols=[1], stats=stats)
        assert out.schema == (Domain.UNSPECIFIED, Domain.STR, Domain.UNSPECIFIED)
        assert stats.snapshot()["s_invocations"] == 1

    def test_declared_columns_are_not_reinduced(self):
        stats = EngineStats()
        df = Dataframe([["1", "2"]], col_labels=["a"], schema=[Domain.STR])
        assert induce_all(df, stats=stats) is df
        assert stats.snapshot()["s_invocations"] == 0

    def test_storage_is_shared(self):
        df = small_frame()
        out = induce_all(df, stats=EngineStats())
        for j in range(df.n):
            assert out.physical_column(j) is df.physical_column(j)


# === Point access ===


class TestPointGet:
    def test_positional(self):
        df = small_frame()
        assert point_get(df, 1, 2) == "110"

    def test_named(self):
        df = small_frame()
        assert point_get(df, "2", "Sales") == "150"

    def test_named_row_first_match_wins(self):
        df = Dataframe(
            [["a", "b", "c"]], row_labels=["x", "dup", "dup"], col_labels=["v"]
        )
        assert point_get(df, "dup", "v") == "b"

    def test_named_column_first_match_wins(self):
        df = Dataframe([["a"], ["b"]], col_labels=["dup", "dup"])
        assert point_get(df, 0, "dup") == "a"

    def test_out_of_bounds(self):
        df = small_frame()
        with pytest.raises(IndexOutOfBounds):
            point_get(df, 3, 0)
        with pytest.raises(IndexOutOfBounds):
            point_get(df, 0, 5)

    def test_unknown_label(self):
        df = small_frame()
        with pytest.raises(LabelNotFound):
            point_get(df, "9", "Sales")
        with pytest.raises(LabelNotFound):
            point_get(df, 0, "Profit")

    def test_follows_logical_order(self):
        df = small_frame()
        flipped = Dataframe(
            [df.physical_column(j) for j in range(df.n)],
            row_labels=df.row_labels,
            col_labels=df.col_labels,
            order=[2, 1, 0],
        )
        assert point_get(flipped, 0, "Sales") == "150"

    def test_label_index_builds_once(self):
        stats = EngineStats()
        df = small_frame()
        point_get(df, "1", "Sales", stats=stats)
        point_get(df, "2", "Month", stats=stats)
        assert stats.snapshot()["label_index_builds"] == 1


class TestPointSet:
    def test_returns_new_frame_and_keeps_original(self):
        df = small_frame()
        out = point_set(df, 0, "Sales", "999")
        assert out.cell(0, 2) == "999"
        assert df.cell(0, 2) == "100"

    def test_untouched_columns_are_shared(self):
        df = small_frame()
        out = point_set(df, 0, "Sales", "999")
        assert out.physical_column(0) is df.physical_column(0)
        assert out.physical_column(1) is df.physical_column(1)
        assert out.physical_column(2) is not df.physical_column(2)

    def test_named_row_updates_all_matches(self):
        df = Dataframe(
            [["1", "2", "3"]], row_labels=["dup", "x", "dup"], col_labels=["v"]
        )
        out = point_set(df, "dup", "v", "0")
        assert out.column(0) == ["0", "2", "0"]

    def test_unparseable_value_reverts_domain(self):
        df = induce_all(small_frame(), stats=EngineStats())
        assert df.schema[2] is Domain.INT
        out = point_set(df, 0, "Sales", "120MP")
        assert out.schema[2] is Domain.UNSPECIFIED
        assert out.schema[0] is Domain.INT  # untouched columns keep their domain

    def test_parseable_value_keeps_domain(self):
        df = induce_all(small_frame(), stats=EngineStats())
        out = point_set(df, 0, "Sales", "175")
        assert out.schema[2] is Domain.INT

    def test_write_through_logical_order(self):
        df = small_frame()
        flipped = Dataframe(
            [df.physical_column(j) for j in range(df.n)],
            row_labels=df.row_labels,
            col_labels=df.col_labels,
            order=[2, 1, 0],
        )
        out = point_set(flipped, 0, "Sales", "0")
        assert out.column(2) == ["0", "110", "100"]
        # the write landed on the physical row the logical position maps to
        assert out.physical_column(2)[2] == "0"

    def test_round_trip(self):
        df = small_frame()
        out = point_set(df, 2, 1, "Apr")
        assert point_get(out, 2, 1) == "Apr"
