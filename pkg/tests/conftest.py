import sys
import os
import json
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import pytest

from models.boundary import DomainBoundary, PointSources
from models.grid import GridSpec
from models.slowness import make_catalog_field
from utils.twoscale import prepare


@pytest.fixture
def unit_slowness():
    return make_catalog_field("constant", {"c": 1.0})


@pytest.fixture
def small_spec():
    return GridSpec(d=2, N=4, M=5)


@pytest.fixture
def corner_problem(unit_slowness):
    """r = 1 with a point source at the origin on a 4x4 coarse, 10x fine grid."""
    spec = GridSpec(d=2, N=4, M=10)
    return prepare(spec, unit_slowness, PointSources(((0.0, 0.0),)))


@pytest.fixture
def gauss_problem():
    spec = GridSpec(d=1, N=10, M=100)
    return prepare(spec, make_catalog_field("gauss1d"), DomainBoundary(g="zero"))


@pytest.fixture
def write_config(tmp_path):
    """Write a config mapping (or raw text) to a file and return its path."""
    def write(payload, name="config.json"):
        path = tmp_path / name
        path.write_text(payload if isinstance(payload, str) else json.dumps(payload, indent=2))
        return str(path)
    return write
