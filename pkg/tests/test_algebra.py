"""Per-operator contract tests: order, labels, schema, and error behavior."""

from __future__ import annotations

import pytest

from orderframe.algebra import ops
from orderframe.algebra.plan import (
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
from orderframe.algebra.reference import evaluate
from orderframe.errors import (
    AmbiguousLabel,
    ArityMismatch,
    IncomparableDomains,
    IndexOutOfBounds,
    UdfArityViolation,
    UdfFailure,
    UnknownColumn,
)
from orderframe.model import Dataframe, Domain, cells_equal
from orderframe.stats import EngineStats


def frame(rows, cols, row_labels=None, schema=None):
    columns = [[row[j] for row in rows] for j in range(len(cols))] if rows else []
    return Dataframe(
        columns, row_labels=row_labels, col_labels=cols, schema=schema,
        m=len(rows) if not columns else None,
    )


# === SELECTION ===


class TestSelection:
    def test_year_2001(self, sales):
        out = ops.selection(sales, Cmp("eq", "Year", "2001"))
        assert out.m == 3
        assert out.column(1) == ["Jan", "Feb", "Mar"]
        assert out.row_label_list() == ["0", "1", "2"]

    def test_true_predicate_is_identity(self, sales):
        out = ops.selection(sales, TruePred())
        assert cells_equal(out, sales)

    def test_positions_in_request_order(self, sales):
        out = ops.selection_positions(sales, [1, 0])
        assert out.column(2) == ["110", "100"]

    def test_positions_out_of_range(self, sales):
        with pytest.raises(IndexOutOfBounds):
            ops.selection_positions(sales, [8])

    def test_unknown_column(self, sales):
        with pytest.raises(UnknownColumn):
            ops.selection(sales, Cmp("eq", "Profit", "1"))

    def test_storage_is_shared(self, sales):
        out = ops.selection(sales, Cmp("gt", "Sales", "200"))
        for j in range(sales.n):
            assert out.physical_column(j) is sales.physical_column(j)

    def test_numeric_comparison_uses_domain(self, sales):
        # "Sales" induces Int, so 99 < 100 < 110: string compare would differ
        out = ops.selection(sales, Cmp("lt", "Sales", "99"))
        assert out.m == 0

    def test_null_fails_every_comparison(self):
        df = frame([("1",), ("",), ("3",)], ["v"])
        assert ops.selection(df, Cmp("ne", "v", "1")).column(0) == ["3"]
        assert ops.selection(df, IsNull("v")).m == 1
        assert ops.selection(df, Not(IsNull("v"))).column(0) == ["1", "3"]

    def test_boolean_connectives(self, sales):
        pred = Or(Cmp("eq", "Month", "Jan"), Cmp("eq", "Month", "Mar"))
        out = ops.selection(sales, pred)
        assert out.column(1) == ["Jan", "Mar", "Jan", "Mar", "Jan"]

    def test_ordering_against_unparseable_literal(self, sales):
        with pytest.raises(IncomparableDomains):
            ops.selection(sales, Cmp("lt", "Sales", "cheap"))


# === PROJECTION ===


class TestProjection:
    def test_single_column(self, sales):
        out = ops.projection(sales, ["Sales"])
        assert out.shape == (8, 1)
        assert out.col_label_list() == ["Sales"]

    def test_all_columns_is_identity(self, sales):
        out = ops.projection(sales, ["Year", "Month", "Sales"])
        assert cells_equal(out, sales)

    def test_request_order(self, sales):
        out = ops.projection(sales, ["Sales", "Year"])
        assert out.col_label_list() == ["Sales", "Year"]
        assert out.cell(0, 0) == "100"

    def test_duplicate_label_keeps_all_matches(self):
        df = Dataframe([["a"], ["b"], ["c"]], col_labels=["x", "y", "x"])
        out = ops.projection(df, ["x"])
        assert out.shape == (1, 2)
        assert out.logical_row(0) == ["a", "c"]

    def test_by_position(self, sales):
        out = ops.projection(sales, [2, 0])
        assert out.col_label_list() == ["Sales", "Year"]
        with pytest.raises(IndexOutOfBounds):
            ops.projection(sales, [3])

    def test_row_storage_shared(self, sales):
        out = ops.projection(sales, ["Sales"])
        assert out.physical_column(0) is sales.physical_column(2)


# === UNION ===


class TestUnion:
    def test_concatenation_order(self):
        a = frame([("1",), ("2",), ("3",)], ["v"])
        b = frame([("4",), ("5",)], ["v"])
        out = ops.union(a, b)
        assert out.column(0) == ["1", "2", "3", "4", "5"]
        assert out.row_label_list() == ["0", "1", "2", "0", "1"]

    def test_union_with_empty(self, sales):
        empty = ops.head(sales, 0)
        out = ops.union(sales, empty)
        assert cells_equal(out, sales)

    def test_no_deduplication(self):
        a = frame([("x",)], ["v"])
        out = ops.union(a, a)
        assert out.m == 2

    def test_labels_from_left(self):
        a = frame([("1",)], ["L"])
        b = frame([("2",)], ["L"])
        out = ops.union(a, ops.rename(b, [("L", "R")]))
        # differing labels align outer: left first, then right's new ones
        assert out.col_label_list() == ["L", "R"]

    def test_outer_alignment_pads_with_null(self):
        a = frame([(True, False)], ["a", "b"])
        b = frame([(True, True)], ["b", "c"])
        out = ops.union(a, b)
        assert out.col_label_list() == ["a", "b", "c"]
        assert out.logical_row(0) == [True, False, None]
        assert out.logical_row(1) == [None, True, True]

    def test_strict_mode_raises_on_mismatch(self):
        a = frame([("1",)], ["a"])
        b = frame([("1",)], ["b"])
        with pytest.raises(ArityMismatch):
            ops.union(a, b, strict=True)

    def test_matching_labels_need_no_padding_in_strict(self):
        a = frame([("1",)], ["a"])
        out = ops.union(a, a, strict=True)
        assert out.m == 2

    def test_merged_schema(self):
        a = frame([("1",)], ["a"], schema=[Domain.INT])
        b = frame([("x",)], ["a"], schema=[Domain.STR])
        assert ops.union(a, a).schema == (Domain.INT,)
        assert ops.union(a, b).schema == (Domain.UNSPECIFIED,)


# === DIFFERENCE ===


class TestDifference:
    def test_self_difference_is_empty(self, sales):
        out = ops.difference(sales, sales)
        assert out.shape == (0, 3)
        assert out.col_label_list() == ["Year", "Month", "Sales"]

    def test_difference_with_empty(self, sales):
        out = ops.difference(sales, ops.head(sales, 0))
        assert cells_equal(out, sales)

    def test_all_copies_removed(self):
        a = frame([("x",), ("y",), ("x",), ("z",)], ["v"])
        b = frame([("x",)], ["v"])
        out = ops.difference(a, b)
        assert out.column(0) == ["y", "z"]

    def test_raw_value_equality(self):
        # a typed 1 and the text "1" are the same raw tuple
        a = Dataframe([[1, 2]], col_labels=["v"], schema=[Domain.INT])
        b = frame([("1",)], ["v"])
        out = ops.difference(a, b)
        assert out.column(0) == [2]

    def test_parent_order_kept(self):
        a = frame([("3",), ("1",), ("2",)], ["v"])
        b = frame([("1",)], ["v"])
        assert ops.difference(a, b).column(0) == ["3", "2"]

    def test_arity_mismatch(self, sales):
        with pytest.raises(ArityMismatch):
            ops.difference(sales, ops.projection(sales, ["Year"]))


# === JOIN ===


class TestJoin:
    def test_cross_nested_order(self):
        a = frame([("a0",), ("a1",)], ["l"])
        b = frame([("b0",), ("b1",), ("b2",)], ["r"])
        out = ops.join(a, b, "cross")
        assert out.m == 6
        assert [tuple(out.logical_row(i)) for i in range(3)] == [
            ("a0", "b0"), ("a0", "b1"), ("a0", "b2"),
        ]
        assert out.logical_row(3) == ["a1", "b0"]

    def test_inner_join_basic(self):
        prices = frame([("A1", "799"), ("A2", "999")], ["model", "price"])
        feats = frame([("A2", "Yes"), ("A1", "Yes"), ("A9", "No")], ["model", "wc"])
        out = ops.join(prices, feats, "inner", on=[("model", "model")])
        assert out.col_label_list() == ["model", "price", "wc"]
        assert [tuple(out.logical_row(i)) for i in range(out.m)] == [
            ("A1", "799", "Yes"), ("A2", "999", "Yes"),
        ]

    def test_inner_duplicate_keys_multiply(self):
        a = frame([("k", "1"), ("k", "2")], ["j", "x"])
        b = frame([("k", "8"), ("k", "9"), ("k", "7")], ["j", "y"])
        out = ops.join(a, b, "inner", on=[("j", "j")])
        assert out.m == 6
        # nested: left row order outer, right order inner
        assert out.column(2) == ["8", "9", "7", "8", "9", "7"]

    def test_left_join_pads_misses(self):
        a = frame([("A", "1"), ("B", "2")], ["k", "x"])
        b = frame([("A", "9")], ["k", "y"])
        out = ops.join(a, b, "left", on=[("k", "k")])
        assert out.m == 2
        assert out.logical_row(1) == ["B", "2", None]

    def test_null_keys_never_match(self):
        a = frame([("", "1")], ["k", "x"])
        b = frame([("", "2")], ["k", "y"])
        assert ops.join(a, b, "inner", on=[("k", "k")]).m == 0
        left = ops.join(a, b, "left", on=[("k", "k")])
        assert left.logical_row(0) == ["", "1", None]

    def test_numeric_widening(self):
        a = frame([("1", "a")], ["k", "x"])
        b = frame([("1.0", "b")], ["k", "y"])
        out = ops.join(a, b, "inner", on=[("k", "k")])
        assert out.m == 1

    def test_incomparable_domains(self):
        a = frame([("1",)], ["k"])
        b = frame([("true",)], ["k"])
        with pytest.raises(IncomparableDomains):
            ops.join(a, b, "inner", on=[("k", "k")])

    def test_unknown_join_column(self, sales):
        with pytest.raises(UnknownColumn):
            ops.join(sales, sales, "inner", on=[("Nope", "Year")])

    def test_left_labels_carried(self):
        a = frame([("A", "1")], ["k", "x"], row_labels=["left0"])
        b = frame([("A", "9")], ["k", "y"], row_labels=["right0"])
        out = ops.join(a, b, "inner", on=[("k", "k")])
        assert out.row_label_list() == ["left0"]


# === DROP DUPLICATES ===


class TestDropDuplicates:
    def test_first_occurrence_kept(self):
        df = frame([("r", "1"), ("r", "1"), ("s", "2")], ["a", "b"],
                   row_labels=["x", "y", "z"])
        out = ops.drop_duplicates(df)
        assert out.m == 2
        assert out.row_label_list() == ["x", "z"]

    def test_all_distinct_unchanged(self, sales):
        assert cells_equal(ops.drop_duplicates(sales), sales)

    def test_label_duplicates_with_distinct_data_kept(self):
        df = frame([("1",), ("2",)], ["v"], row_labels=["same", "same"])
        assert ops.drop_duplicates(df).m == 2

    def test_raw_equality_across_types(self):
        df = Dataframe([[1, "1"]], col_labels=["v"])
        assert ops.drop_duplicates(df).m == 1

    def test_storage_shared(self, sales):
        out = ops.drop_duplicates(sales)
        assert out.physical_column(0) is sales.physical_column(0)


# === GROUPBY ===


class TestGroupby:
    def test_collect_groups(self, sales):
        out = ops.groupby(sales, ["Year"], "collect")
        assert out.col_label_list() == ["Year", "collect"]
        assert out.column(0) == ["2001", "2002", "2003"]
        comp = out.cell(2, 1)
        assert isinstance(comp, Dataframe)
        assert comp.rows() == [["Jan", "300"], ["Feb", "310"]]
        assert comp.row_label_list() == ["6", "7"]
        assert comp.col_label_list() == ["Month", "Sales"]

    def test_collect_shares_parent_storage(self, sales):
        out = ops.groupby(sales, ["Year"], "collect")
        comp = out.cell(0, 1)
        assert comp.physical_column(1) is sales.physical_column(2)

    def test_count_all_distinct(self, sales):
        out = ops.groupby(sales, ["Sales"], "count")
        assert out.column(1) == [1] * 8

    def test_sum_golden(self, sales):
        out = ops.groupby(sales, ["Month"], "sum", targets=["Sales"])
        assert list(zip(out.column(0), out.column(1))) == [
            ("Jan", 550), ("Feb", 620), ("Mar", 370),
        ]
        assert out.schema[1] is Domain.INT

    def test_first_occurrence_order(self):
        df = frame([("b", "1"), ("a", "2"), ("b", "3")], ["k", "v"])
        out = ops.groupby(df, ["k"], "count")
        assert out.column(0) == ["b", "a"]
        assert out.column(1) == [2, 1]

    def test_keys_stay_data_columns(self, sales):
        out = ops.groupby(sales, ["Year"], "count")
        # keys remain addressable as a column, labels are fresh positional
        assert out.col_label_list()[0] == "Year"
        assert out.row_label_list() == ["0", "1", "2"]

    def test_mean_is_float(self, sales):
        out = ops.groupby(sales, ["Year"], "mean", targets=["Sales"])
        assert out.column(1) == [110.0, 200.0, 305.0]
        assert out.schema[1] is Domain.FLOAT

    def test_min_max(self, sales):
        lo = ops.groupby(sales, ["Year"], "min", targets=["Sales"])
        hi = ops.groupby(sales, ["Year"], "max", targets=["Sales"])
        assert lo.column(1) == [100, 150, 300]
        assert hi.column(1) == [120, 250, 310]

    def test_sum_requires_numeric(self, sales):
        with pytest.raises(IncomparableDomains):
            ops.groupby(sales, ["Year"], "sum", targets=["Month"])

    def test_nulls_skipped_and_all_null_group(self):
        df = frame([("a", "1"), ("a", ""), ("b", "")], ["k", "v"])
        out = ops.groupby(df, ["k"], "sum", targets=["v"])
        assert out.column(1) == [1, None]

    def test_multi_key(self, sales):
        out = ops.groupby(sales, ["Year", "Month"], "count")
        assert out.m == 8

    def test_unknown_key(self, sales):
        with pytest.raises(UnknownColumn):
            ops.groupby(sales, ["Nope"], "count")


# === SORT ===


class TestSort:
    def test_ascending_first_row(self, sales):
        out = ops.sort(sales, SortSpec([("Sales", True)]))
        assert out.logical_row(0) == ["2001", "Jan", "100"]

    def test_descending_head(self, sales):
        out = ops.head(ops.sort(sales, SortSpec([("Sales", False)])), 1)
        assert out.logical_row(0) == ["2003", "Feb", "310"]

    def test_stability_on_sorted_input(self, sales):
        out = ops.sort(sales, SortSpec([("Year", True)]))
        assert list(out.order) == list(sales.order)

    def test_numeric_not_lexicographic(self):
        df = frame([("9",), ("10",), ("2",)], ["v"])
        out = ops.sort(df, SortSpec([("v", True)]))
        assert out.column(0) == ["2", "9", "10"]

    def test_cells_never_move(self, sales):
        out = ops.sort(sales, SortSpec([("Sales", False)]))
        for j in range(sales.n):
            assert out.physical_column(j) is sales.physical_column(j)

    def test_labels_follow_rows(self, sales):
        out = ops.sort(sales, SortSpec([("Sales", False)]))
        assert out.row_label_list()[0] == "7"

    def test_multi_key(self, sales):
        out = ops.sort(sales, SortSpec([("Month", True), ("Year", False)]))
        assert out.logical_row(0) == ["2003", "Feb", "310"]
        assert out.logical_row(1) == ["2002", "Feb", "200"]

    def test_nulls_sort_first_ascending(self):
        df = frame([("5",), ("",), ("1",)], ["v"])
        out = ops.sort(df, SortSpec([("v", True)]))
        assert out.column(0) == ["", "1", "5"]
        out = ops.sort(df, SortSpec([("v", False)]))
        assert out.column(0) == ["5", "1", ""]

    def test_composite_column_rejected(self, sales):
        grouped = ops.groupby(sales, ["Year"], "collect")
        with pytest.raises(IncomparableDomains):
            ops.sort(grouped, SortSpec([("collect", True)]))

    def test_ties_keep_parent_order(self):
        df = frame([("k", "1"), ("k", "2"), ("j", "3")], ["a", "b"])
        out = ops.sort(df, SortSpec([("a", True)]))
        assert out.column(1) == ["3", "1", "2"]


# === RENAME ===


class TestRename:
    def test_identity_mapping(self, sales):
        assert cells_equal(ops.rename(sales, [("Year", "Year")]), sales)

    def test_round_trip(self, sales):
        out = ops.rename(ops.rename(sales, [("Year", "Yr")]), [("Yr", "Year")])
        assert cells_equal(out, sales)

    def test_duplicate_label_renames_all(self):
        df = Dataframe([["a"], ["b"]], col_labels=["x", "x"])
        out = ops.rename(df, [("x", "y")])
        assert out.col_label_list() == ["y", "y"]

    def test_unknown_old_label(self, sales):
        with pytest.raises(UnknownColumn):
            ops.rename(sales, [("Nope", "x")])

    def test_zero_cell_operations(self, sales):
        out = ops.rename(sales, [("Sales", "Revenue")])
        for j in range(sales.n):
            assert out.physical_column(j) is sales.physical_column(j)
        assert out.row_labels is sales.row_labels


# === WINDOW ===


class TestWindow:
    def test_cumsum_golden(self, sales):
        out = ops.window(sales, WindowSpec("cumsum"), targets=["Sales"])
        assert out.column(2) == [100, 210, 330, 480, 680, 930, 1230, 1540]
        assert out.schema[2] is Domain.INT

    def test_shift_zero_is_identity(self, sales):
        out = ops.window(sales, WindowSpec("shift", 0), targets=["Sales"])
        assert out.column(2) == [100, 110, 120, 150, 200, 250, 300, 310]

    def test_diff_first_row_null(self, sales):
        out = ops.window(sales, WindowSpec("diff"), targets=["Sales"])
        assert out.cell(0, 2) is None
        assert out.column(2)[1:] == [10, 10, 30, 50, 50, 50, 10]

    def test_shift_basics(self, sales):
        out = ops.window(sales, WindowSpec("shift", 2), targets=["Sales"])
        assert out.column(2)[:3] == [None, None, 100]
        back = ops.window(sales, WindowSpec("shift", -1), targets=["Sales"])
        assert back.column(2)[-1] is None
        assert back.cell(0, 2) == 110

    def test_cummax(self):
        df = frame([("3",), ("1",), ("5",), ("2",)], ["v"])
        out = ops.window(df, WindowSpec("cummax"), targets=["v"])
        assert out.column(0) == [3, 3, 5, 5]

    def test_rolling_sum_partial_windows(self, sales):
        out = ops.window(sales, WindowSpec("rolling_sum", 3), targets=["Sales"])
        assert out.column(2)[:4] == [100, 210, 330, 380]

    def test_shape_and_labels_preserved(self, sales):
        out = ops.window(sales, WindowSpec("cumsum"), targets=["Sales"])
        assert out.shape == sales.shape
        assert out.col_label_list() == sales.col_label_list()
        assert out.row_label_list() == sales.row_label_list()
        assert out.column(1) == sales.column(1)

    def test_reverse_direction(self):
        df = frame([("1",), ("2",), ("3",)], ["v"])
        out = ops.window(df, WindowSpec("cumsum", reverse=True), targets=["v"])
        assert out.column(0) == [6, 5, 3]

    def test_nulls_skip_accumulator(self):
        df = frame([("1",), ("",), ("2",)], ["v"])
        out = ops.window(df, WindowSpec("cumsum"), targets=["v"])
        assert out.column(0) == [1, None, 3]

    def test_non_numeric_rejected(self, sales):
        with pytest.raises(IncomparableDomains):
            ops.window(sales, WindowSpec("cumsum"), targets=["Month"])

    def test_shift_is_domain_generic(self, sales):
        out = ops.window(sales, WindowSpec("shift", 1), targets=["Month"])
        assert out.column(1)[:2] == [None, "Jan"]

    def test_float_cumsum(self):
        df = frame([("0.5",), ("1.25",)], ["v"])
        out = ops.window(df, WindowSpec("cumsum"), targets=["v"])
        assert out.column(0) == [0.5, 1.75]
        assert out.schema[0] is Domain.FLOAT


# === TRANSPOSE ===


class TestTranspose:
    def test_products_chart(self, products):
        out = ops.transpose(products)
        assert out.shape == (4, 6)
        assert out.row_label_list() == ["A1", "A2", "A3", "A4"]
        assert out.col_label_list() == list(products.row_label_list())
        assert out.cell(0, 2) == "120MP"

    def test_involution(self, sales):
        out = ops.transpose(ops.transpose(sales))
        assert cells_equal(out, sales)

    def test_one_by_n(self):
        df = frame([("a", "b", "c")], ["x", "y", "z"])
        out = ops.transpose(df)
        assert out.shape == (3, 1)
        assert out.column(0) == ["a", "b", "c"]

    def test_schema_unspecified_unless_declared(self, sales):
        out = ops.transpose(sales)
        assert set(out.schema) == {Domain.UNSPECIFIED}
        declared = ops.transpose(
            ops.projection(sales, ["Sales"]),
            declared_schema=[Domain.INT] * 8,
        )
        assert declared.schema == (Domain.INT,) * 8

    def test_order_follows_axis_swap(self, sales):
        flipped = ops.sort(sales, SortSpec([("Sales", False)]))
        out = ops.transpose(flipped)
        # transposed columns appear in the sorted logical row order
        assert out.col_label_list()[0] == "7"
        assert out.column(0) == ["2003", "Feb", "310"]


# === MAP ===


class TestMap:
    def test_isnull(self):
        df = frame([("1", ""), ("", "2")], ["a", "b"])
        out = ops.map_rows(df, UdfSpec("isnull"))
        assert out.rows() == [[False, True], [True, False]]
        assert set(out.schema) == {Domain.BOOL}

    def test_fillna(self):
        df = frame([("1",), ("",)], ["v"], schema=[Domain.INT])
        out = ops.map_rows(df, UdfSpec("fillna", ("0",)))
        assert out.column(0) == ["1", "0"]
        assert out.schema[0] is Domain.INT

    def test_fillna_reverts_domain_on_mismatch(self):
        df = frame([("1",), ("",)], ["v"], schema=[Domain.INT])
        out = ops.map_rows(df, UdfSpec("fillna", ("n/a",)))
        assert out.schema[0] is Domain.UNSPECIFIED

    def test_str_upper(self):
        df = frame([("abc", ""), ("dEf", "x")], ["a", "b"])
        out = ops.map_rows(df, UdfSpec("str_upper"))
        assert out.rows() == [["ABC", None], ["DEF", "X"]]

    def test_arith_single_output_column(self, sales):
        out = ops.map_rows(sales, UdfSpec("arith", ("Sales * 2",)))
        assert out.shape == (8, 1)
        assert out.col_label_list() == ["Sales * 2"]
        assert out.column(0)[:3] == [200, 220, 240]
        assert out.schema[0] is Domain.INT

    def test_arith_division_gives_float(self, sales):
        out = ops.map_rows(sales, UdfSpec("arith", ("Sales / 2",)))
        assert out.schema[0] is Domain.FLOAT
        assert out.cell(0, 0) == 50.0

    def test_arith_null_propagates(self):
        df = frame([("1", ""), ("2", "3")], ["a", "b"])
        out = ops.map_rows(df, UdfSpec("arith", ("a + b",)))
        assert out.column(0) == [None, 5]

    def test_one_hot_first_occurrence_order(self):
        df = frame([("a",), ("b",), ("a",)], ["v"])
        out = ops.map_rows(df, UdfSpec("one_hot", ("v",)))
        assert out.col_label_list() == ["a", "b"]
        assert out.rows() == [[True, False], [False, True], [True, False]]
        assert set(out.schema) == {Domain.BOOL}

    def test_one_hot_null_row_all_false(self):
        df = frame([("a",), ("",)], ["v"])
        out = ops.map_rows(df, UdfSpec("one_hot", ("v",)))
        assert out.rows() == [[True], [False]]

    def test_flatten_round_trips_collect(self, sales):
        grouped = ops.groupby(sales, ["Year"], "collect")
        out = ops.map_rows(grouped, UdfSpec("flatten", ("Month", "Sales")))
        assert out.col_label_list() == ["Year", "Jan", "Feb", "Mar"]
        assert out.logical_row(2) == ["2003", "300", "310", None]

    def test_custom_identity(self, sales):
        out = ops.map_rows(
            sales,
            UdfSpec("id", fn=lambda row: row, output_labels=sales.col_label_list()),
        )
        assert cells_equal(out, sales)

    def test_custom_arity_violation(self, sales):
        bad = UdfSpec("bad", fn=lambda row: row[:1] if row[2] == "310" else row)
        with pytest.raises(UdfArityViolation):
            ops.map_rows(sales, bad)

    def test_custom_failure_wrapped(self, sales):
        def boom(row):
            raise RuntimeError("nope")
        with pytest.raises(UdfFailure):
            ops.map_rows(sales, UdfSpec("boom", fn=boom))

    def test_row_labels_survive(self, products):
        out = ops.map_rows(products, UdfSpec("isnull"))
        assert out.row_label_list() == list(products.row_label_list())


# === TOLABELS / FROMLABELS ===


class TestToLabels:
    def test_promotes_column(self, sales):
        wide = ops.groupby(sales, ["Year"], "count")
        out = ops.to_labels(wide, "Year")
        assert out.row_label_list() == ["2001", "2002", "2003"]
        assert out.col_label_list() == ["count"]
        assert out.shape == (3, 1)

    def test_unknown_and_ambiguous(self, sales):
        with pytest.raises(UnknownColumn):
            ops.to_labels(sales, "Nope")
        dup = Dataframe([["a"], ["b"]], col_labels=["x", "x"])
        with pytest.raises(AmbiguousLabel):
            ops.to_labels(dup, "x")

    def test_duplicate_values_make_legal_duplicate_labels(self):
        df = frame([("k", "1"), ("k", "2")], ["a", "b"])
        out = ops.to_labels(df, "a")
        assert out.row_label_list() == ["k", "k"]

    def test_label_index_is_deferred(self, sales):
        stats = EngineStats()
        out = ops.to_labels(sales, "Year", stats)
        assert stats.snapshot()["label_index_builds"] == 0
        out.row_positions("2002", stats)
        assert stats.snapshot()["label_index_builds"] == 1

    def test_typed_cells_become_text_labels(self):
        df = Dataframe([[1, 2], ["a", "b"]], col_labels=["n", "v"],
                       schema=[Domain.INT, Domain.STR])
        out = ops.to_labels(df, "n")
        assert out.row_label_list() == ["1", "2"]


class TestFromLabels:
    def test_default_labels_become_column(self, sales):
        out = ops.from_labels(sales, "idx")
        assert out.col_label_list() == ["idx", "Year", "Month", "Sales"]
        assert out.column(0) == [str(i) for i in range(8)]
        assert out.schema[0] is Domain.UNSPECIFIED
        assert out.row_label_list() == [str(i) for i in range(8)]

    def test_round_trip_with_to_labels(self, sales):
        wide = ops.groupby(sales, ["Year"], "count")
        there = ops.to_labels(wide, "Year")
        back = ops.from_labels(there, "Year")
        assert back.col_label_list() == ["Year", "count"]
        assert back.column(0) == ["2001", "2002", "2003"]

    def test_twice_exposes_positional_labels(self, sales):
        once = ops.from_labels(sales, "first")
        twice = ops.from_labels(once, "second")
        assert twice.column(0) == [str(i) for i in range(8)]
        assert twice.col_label_list()[:2] == ["second", "first"]

    def test_labels_of_reordered_frame(self, sales):
        flipped = ops.sort(sales, SortSpec([("Sales", False)]))
        out = ops.from_labels(flipped, "old")
        # the demoted labels are the logical labels of the sorted view
        assert out.column(0)[0] == "7"
        assert out.row_label_list() == [str(i) for i in range(8)]


# === HEAD / TAIL ===


class TestHeadTail:
    def test_head_whole_frame(self, sales):
        assert cells_equal(ops.head(sales, 8), sales)
        assert cells_equal(ops.head(sales, 99), sales)

    def test_head_one(self, sales):
        assert ops.head(sales, 1).logical_row(0) == ["2001", "Jan", "100"]

    def test_tail_one(self, sales):
        assert ops.tail(sales, 1).logical_row(0) == ["2003", "Feb", "310"]

    def test_zero(self, sales):
        assert ops.head(sales, 0).shape == (0, 3)
        assert ops.tail(sales, 0).shape == (0, 3)

    def test_negative_rejected(self, sales):
        with pytest.raises(IndexOutOfBounds):
            ops.head(sales, -1)


# === PIVOT ===


class TestPivot:
    def test_wide_table_of_months(self, sales):
        out = ops.pivot(sales, "Year", "Month", "Sales")
        assert out.row_label_list() == ["Jan", "Feb", "Mar"]
        assert out.col_label_list() == ["2001", "2002", "2003"]
        assert out.rows() == [
            ["100", "150", "300"],
            ["110", "200", "310"],
            ["120", "250", None],
        ]

    def test_wide_table_of_years(self, sales):
        out = ops.pivot(sales, "Month", "Year", "Sales")
        assert out.row_label_list() == ["2001", "2002", "2003"]
        assert out.col_label_list() == ["Jan", "Feb", "Mar"]
        assert out.rows() == [
            ["100", "110", "120"],
            ["150", "200", "250"],
            ["300", "310", None],
        ]

    def test_duality(self, sales):
        left = ops.transpose(ops.pivot(sales, "Year", "Month", "Sales"))
        right = ops.pivot(sales, "Month", "Year", "Sales")
        assert cells_equal(left, right)

    def test_columns_must_be_distinct(self, sales):
        with pytest.raises(ValueError):
            ops.pivot(sales, "Year", "Year", "Sales")

    def test_unknown_column(self, sales):
        with pytest.raises(UnknownColumn):
            ops.pivot(sales, "Nope", "Month", "Sales")


# === reference evaluator ===


class TestReferenceEvaluator:
    def test_matches_direct_composition(self, sales):
        plan = Plan(
            "groupby",
            [Plan("selection", [scan(sales)], pred=Cmp("ne", "Month", "Mar"))],
            keys=("Year",), agg="sum", targets=("Sales",),
        )
        got = evaluate(plan)
        want = ops.groupby(
            ops.selection(sales, Cmp("ne", "Month", "Mar")),
            ["Year"], "sum", targets=["Sales"],
        )
        assert cells_equal(got, want)

    def test_shared_node_evaluates_once(self, sales):
        calls = []

        def spy(row):
            calls.append(1)
            return row

        shared = Plan(
            "map", [scan(sales)],
            udf=UdfSpec("spy", fn=spy, output_labels=sales.col_label_list()),
        )
        plan = Plan("union", [shared, shared])
        out = evaluate(plan)
        assert out.m == 16
        assert len(calls) == sales.m

    def test_pivot_macro_node(self, sales):
        plan = Plan("pivot", [scan(sales)],
                    pivot_col="Year", key_col="Month", value_col="Sales")
        assert evaluate(plan).row_label_list() == ["Jan", "Feb", "Mar"]

    def test_deterministic(self, sales):
        plan = Plan("sort", [scan(sales)], spec=SortSpec([("Month", True)]))
        a = evaluate(plan)
        b = evaluate(plan)
        assert cells_equal(a, b)
