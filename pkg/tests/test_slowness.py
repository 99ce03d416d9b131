import numpy as np
import pytest

from models.boundary import DomainBoundary, DomainEdges, PointSources, fixed_nodes, make_boundary
from models.grid import GridSpec, coarse_lattices, fine_lattice
from models.slowness import BARRIER, FAST, checkerboard_bits, make_catalog_field
from utils.errors import ConfigurationError


def test_constant():
    field = make_catalog_field("constant", {"c": 2.5})
    np.testing.assert_array_equal(field(np.linspace(0, 1, 5), np.zeros(5)), np.full(5, 2.5))
    assert field.at((0.3, 0.7)) == 2.5


def test_r1_at_quarter_point():
    r1 = make_catalog_field("r1")
    assert r1.at((0.25, 0.25)) == pytest.approx(1.99)
    assert r1.at((0.5, 0.5)) == pytest.approx(1.0)


def test_r2_range():
    rng = np.random.default_rng(3)
    x, y = rng.random(2000), rng.random(2000)
    r = make_catalog_field("r2")(x, y)
    assert r.min() >= 0.5 - 1e-12
    assert r.max() <= 1.5 + 1e-12


def test_gauss1d_bump():
    field = make_catalog_field("gauss1d")
    assert field.at((0.75,)) == pytest.approx(11.0)
    assert field.at((0.2,)) == pytest.approx(1.0)


@pytest.mark.parametrize("kind, params", [
    ("constant", {}),
    ("constant", {"c": 0.0}),
    ("constant", {"c": -1.0}),
    ("sine2d", {"A": 1.0, "f": 2}),
    ("squares", {}),
    ("checkerboard", {"eps": -0.1}),
    ("obstacles", {"shapes": [], "inside_value": 2.0}),
    ("no_such_kind", {}),
])
def test_invalid_params(kind, params):
    with pytest.raises(ConfigurationError):
        make_catalog_field(kind, params)


def test_unknown_shape_fails_on_evaluation():
    field = make_catalog_field("obstacles", {"shapes": [{"type": "star"}], "inside_value": 2.0})
    with pytest.raises(ConfigurationError):
        field(np.array([0.5]), np.array([0.5]))


def test_obstacles():
    shapes = [{"type": "rect", "x0": 0.2, "x1": 0.4, "y0": 0.2, "y1": 0.4},
              {"type": "disk", "cx": 0.8, "cy": 0.8, "radius": 0.1, "value": 0.5}]
    field = make_catalog_field("obstacles", {"shapes": shapes, "inside_value": 10.0})
    assert field.at((0.3, 0.3)) == 10.0
    assert field.at((0.8, 0.85)) == 0.5
    assert field.at((0.6, 0.6)) == 1.0


def test_squares_lines():
    field = make_catalog_field("squares", {"eps": 0.1, "line_tol": 1e-6})
    assert field.at((0.3, 0.55)) == 1.0
    assert field.at((0.55, 0.55)) == 2.0


def test_checkerboard_is_seeded():
    rng = np.random.default_rng(0)
    x, y = rng.random(500), rng.random(500)
    a = make_catalog_field("checkerboard", {"eps": 0.05}, seed=7)(x, y)
    b = make_catalog_field("checkerboard", {"eps": 0.05}, seed=7)(x, y)
    c = make_catalog_field("checkerboard", {"eps": 0.05}, seed=8)(x, y)
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {1.0, 2.0}
    assert np.any(a != c)


def test_checkerboard_constant_per_cell():
    field = make_catalog_field("checkerboard", {"eps": 0.1}, seed=1)
    assert field.at((0.31, 0.52)) == field.at((0.39, 0.58))


def test_checkerboard_bits_balanced():
    ix, iy = np.meshgrid(np.arange(64), np.arange(64), indexing="ij")
    bits = checkerboard_bits(ix, iy, 11)
    assert 0.4 < bits.mean() < 0.6


def test_maze_presets():
    maze = make_catalog_field("maze")
    assert maze.at((0.35, 0.55 + 0.09)) == BARRIER
    assert maze.at((0.75, 0.75)) == FAST
    assert maze.at((0.35, 0.55)) == 1.0
    box = make_catalog_field("barrier_box")
    assert box.at((0.55, 0.48)) == BARRIER
    assert box.at((0.58, 0.62)) == 1.0
    assert box.at((0.55, 0.55)) == 1.0
    assert make_catalog_field("fast_obstacle").at((0.265, 0.3)) == FAST


def test_sample_on_lattice():
    spec = GridSpec(d=2, N=4, M=5)
    r = make_catalog_field("r1").sample(spec, fine_lattice(spec))
    assert r.shape == spec.fine_shape
    assert r[5, 5] == pytest.approx(1.99)


def test_point_source_fixes_node(unit_slowness):
    spec = GridSpec(d=2, N=4, M=5)
    mask, values = fixed_nodes(PointSources(((0.5, 0.5),)), spec, fine_lattice(spec), unit_slowness)
    assert mask.sum() == 1
    assert mask[10, 10]
    assert values[10, 10] == 0.0


def test_point_source_collar_on_coarse_grids(unit_slowness):
    spec = GridSpec(d=2, N=4, M=5)
    source = PointSources(((0.0, 0.0),))
    for lattice in coarse_lattices(spec):
        mask, values = fixed_nodes(source, spec, lattice, unit_slowness)
        assert mask.any()
        X, Y = lattice.coords(spec)
        np.testing.assert_allclose(values[mask], np.hypot(X, Y)[mask])
        assert np.all(np.isinf(values[~mask]))


def test_domain_boundary(unit_slowness):
    spec = GridSpec(d=2, N=2, M=3)
    mask, values = fixed_nodes(DomainBoundary(), spec, fine_lattice(spec), unit_slowness)
    assert mask.sum() == 4 * 6
    assert not mask[1:-1, 1:-1].any()
    assert np.all(values[mask] == 0.0)


def test_domain_edges_distance(unit_slowness):
    spec = GridSpec(d=2, N=2, M=3)
    edges = DomainEdges(edges=("left", "bottom"), g="distance")
    mask, values = fixed_nodes(edges, spec, fine_lattice(spec), unit_slowness)
    assert mask[0, :].all() and mask[:, 0].all()
    assert not mask[1:, 1:].any()
    assert values[0, 6] == pytest.approx(1.0)


@pytest.mark.parametrize("raw", [
    {"kind": "point_sources", "points": []},
    {"kind": "point_sources", "points": [[1.5, 0.0]]},
    {"kind": "domain_edges", "edges": ["diagonal"]},
    {"kind": "domain_boundary", "g": "quadratic"},
    {"kind": "everywhere"},
])
def test_invalid_boundary(raw):
    with pytest.raises(ConfigurationError):
        make_boundary(raw)
