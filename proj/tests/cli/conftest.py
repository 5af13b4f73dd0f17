import json
import pathlib

import pytest


def pytest_addoption(parser):
    parser.addoption("--ovp", required=True, help="path to the ovp binary")
    parser.addoption("--schemas", required=True, help="directory holding the JSON schemas")


@pytest.fixture(scope="session")
def ovp_bin(request):
    return request.config.getoption("--ovp")


@pytest.fixture(scope="session")
def schemas(request):
    root = pathlib.Path(request.config.getoption("--schemas"))
    return {p.name.split(".")[0]: json.loads(p.read_text()) for p in root.glob("*.schema.json")}
