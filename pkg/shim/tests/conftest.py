import os

import pytest

import ofshim

HERE = os.path.dirname(os.path.abspath(__file__))
SHIM_ROOT = os.path.dirname(HERE)
DATA = os.path.join(HERE, "data")
SCRIPTS = os.path.join(HERE, "scripts")


def data_path(name: str) -> str:
    return os.path.join(DATA, name)


@pytest.fixture
def session():
    with ofshim.Session() as s:
        yield s
