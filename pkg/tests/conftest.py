"""Shared fixtures: the sales narrow table and the product comparison chart."""

from __future__ import annotations

import pytest

from orderframe.model import Dataframe

SALES_ROWS = [
    ("2001", "Jan", "100"),
    ("2001", "Feb", "110"),
    ("2001", "Mar", "120"),
    ("2002", "Jan", "150"),
    ("2002", "Feb", "200"),
    ("2002", "Mar", "250"),
    ("2003", "Jan", "300"),
    ("2003", "Feb", "310"),
]


def make_sales() -> Dataframe:
    cols = list(zip(*SALES_ROWS))
    return Dataframe([list(c) for c in cols], col_labels=["Year", "Month", "Sales"])


@pytest.fixture
def sales() -> Dataframe:
    return make_sales()


PRODUCT_MODELS = ["A1", "A2", "A3", "A4"]
PRODUCT_FEATURES = ["Display", "Battery", "Camera", "Wireless Charging", "Weight", "Price"]
PRODUCT_CELLS = [
    ["6.1", "6.1", "6.7", "5.4"],
    ["17", "17", "20", "15"],
    ["120MP", "12MP", "12MP", "12MP"],  # first entry is the known typo
    ["Yes", "Yes", "Yes", "No"],
    ["164", "189", "228", "135"],
    ["799", "999", "1099", "699"],
]


def make_products() -> Dataframe:
    cols = [[PRODUCT_CELLS[i][j] for i in range(6)] for j in range(4)]
    return Dataframe(cols, row_labels=PRODUCT_FEATURES, col_labels=PRODUCT_MODELS)


@pytest.fixture
def products() -> Dataframe:
    return make_products()
