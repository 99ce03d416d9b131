import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from config.config import SLOWNESS_CATALOG
from utils.errors import ConfigurationError

BARRIER = 1000.0
FAST = 0.01

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class SlownessField:
    """
    Positive slowness r(x) on [0,1]^d, built from the catalog.

    Calling the field evaluates it pointwise on arrays of coordinates; in 1D
    the y argument is ignored by 1D kinds and defaults to zeros.
    """

    kind: str
    params: dict = field(compare=False)
    seed: int = 0
    fn: Callable = field(default=None, compare=False, repr=False)

    def __call__(self, x, y=None):
        x = np.asarray(x, dtype=np.float64)
        y = np.zeros_like(x) if y is None else np.asarray(y, dtype=np.float64)
        r = np.asarray(self.fn(x, y), dtype=np.float64)
        r = np.broadcast_to(r, np.broadcast(x, y).shape).copy()
        if not np.all(r > 0):
            raise ConfigurationError(f"slowness '{self.kind}' is not positive everywhere")
        return r

    def sample(self, spec, lattice):
        """Slowness at the nodes of a lattice of the global fine grid."""
        X, Y = lattice.coords(spec)
        return self(X, Y)

    def at(self, point):
        x = point[0]
        y = point[1] if len(point) > 1 else 0.0
        return float(self(np.array([x]), np.array([y]))[0])


def _param(params, name, kind):
    if name not in params:
        raise ConfigurationError(f"slowness '{kind}' requires parameter '{name}'")
    return params[name]


def _positive(value, name, kind):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"slowness '{kind}': '{name}' must be a number")
    if not value > 0:
        raise ConfigurationError(f"slowness '{kind}': '{name}' must be positive, got {value}")
    return value


def _gauss1d(x, y):
    # Localized bump; exponent sign chosen so the bump stays bounded.
    return 1.0 + 10.0 * np.exp(-((x - 0.75) ** 2) / (2.0 * 0.01 ** 2))


def _sine2d(A, f):
    def fn(x, y):
        return 1.0 + A * np.sin(f * np.pi * x) * np.sin(f * np.pi * y)
    return fn


def _varsine(x, y):
    eps = (np.abs(x) + np.abs(y) + 0.001) / 50.0
    return 1.0 + 0.5 * np.sin(np.pi * x / eps) * np.sin(np.pi * y / eps)


def _shape_mask(shape, x, y, kind):
    stype = shape.get("type")
    if stype == "rect":
        x0, x1, y0, y1 = (float(shape[k]) for k in ("x0", "x1", "y0", "y1"))
        return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
    if stype == "disk":
        cx, cy, rad = float(shape["cx"]), float(shape["cy"]), float(shape["radius"])
        return (x - cx) ** 2 + (y - cy) ** 2 <= rad ** 2
    if stype == "arc":
        cx, cy = float(shape["cx"]), float(shape["cy"])
        r_in, r_out = float(shape["r_in"]), float(shape["r_out"])
        rho = np.hypot(x - cx, y - cy)
        ring = (rho >= r_in) & (rho <= r_out)
        start = float(shape.get("start_deg", 0.0))
        stop = float(shape.get("stop_deg", 360.0))
        ang = np.degrees(np.arctan2(y - cy, x - cx)) % 360.0
        span = (stop - start) % 360.0 or 360.0
        return ring & (((ang - start) % 360.0) <= span)
    raise ConfigurationError(f"slowness '{kind}': unknown shape type {stype!r}")


def _obstacles(shapes, inside_value, outside_value, kind):
    if not isinstance(shapes, (list, tuple)) or not shapes:
        raise ConfigurationError(f"slowness '{kind}': 'shapes' must be a non-empty list")
    for shape in shapes:
        if not isinstance(shape, dict):
            raise ConfigurationError(f"slowness '{kind}': each shape must be an object")
        if "value" in shape:
            _positive(shape["value"], "value", kind)

    def fn(x, y):
        r = np.full(np.broadcast(x, y).shape, outside_value)
        for shape in shapes:
            r = np.where(_shape_mask(shape, x, y, kind), float(shape.get("value", inside_value)), r)
        return r
    return fn


# Approximation of a two-barrier maze: a C-shaped ring enclosing the
# subdomain [0.3,0.4]x[0.5,0.6] (H=1/10), a long curved wall, and a fast disk
# inside the subdomain [0.7,0.8]^2.
MAZE_SHAPES = (
    {"type": "arc", "cx": 0.35, "cy": 0.55, "r_in": 0.085, "r_out": 0.1,
     "start_deg": 75.0, "stop_deg": 15.0, "value": BARRIER},
    {"type": "arc", "cx": 0.7, "cy": 0.3, "r_in": 0.15, "r_out": 0.165,
     "start_deg": 100.0, "stop_deg": 350.0, "value": BARRIER},
    {"type": "disk", "cx": 0.75, "cy": 0.75, "radius": 0.03, "value": FAST},
)

FAST_OBSTACLE_SHAPES = (
    {"type": "rect", "x0": 0.26, "x1": 0.27, "y0": 0.0, "y1": 0.6, "value": FAST},
)

# Square ring around the subdomain [0.5,0.6]^2 with an opening in the top wall.
BARRIER_BOX_SHAPES = (
    {"type": "rect", "x0": 0.47, "x1": 0.63, "y0": 0.47, "y1": 0.49, "value": BARRIER},
    {"type": "rect", "x0": 0.47, "x1": 0.49, "y0": 0.47, "y1": 0.63, "value": BARRIER},
    {"type": "rect", "x0": 0.61, "x1": 0.63, "y0": 0.47, "y1": 0.63, "value": BARRIER},
    {"type": "rect", "x0": 0.47, "x1": 0.55, "y0": 0.61, "y1": 0.63, "value": BARRIER},
)


def _squares(eps, line_tol):
    def fn(x, y):
        def on_line(t):
            s = t / eps
            return np.abs(s - np.round(s)) * eps <= line_tol
        return np.where(on_line(x) | on_line(y), 1.0, 2.0)
    return fn


def _splitmix64(z):
    z = (z + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    return z ^ (z >> np.uint64(31))


def checkerboard_bits(ix, iy, seed):
    """One pseudo-random bit per (cell, seed), independent of evaluation order."""
    ix = np.asarray(ix, dtype=np.int64).astype(np.uint64)
    iy = np.asarray(iy, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        key = _splitmix64(np.uint64(seed) & _MASK64)
        key = _splitmix64(key ^ ix)
        key = _splitmix64(key ^ iy)
    return (key >> np.uint64(63)).astype(np.int64)


def _checkerboard(eps, seed):
    def fn(x, y):
        ix = np.floor(x / eps).astype(np.int64)
        iy = np.floor(y / eps).astype(np.int64)
        return 1.0 + checkerboard_bits(ix, iy, seed)
    return fn


def make_catalog_field(kind, params=None, seed=0):
    """
    Build a slowness field from the catalog.

    Args:
        kind (str): catalog tag, one of config.SLOWNESS_CATALOG
        params (dict): kind parameters
        seed (int): seed for randomized kinds

    Returns:
        SlownessField: immutable, deterministic field
    """
    params = dict(params or {})
    if kind not in SLOWNESS_CATALOG:
        raise ConfigurationError(f"unknown slowness kind '{kind}'")
    for name in SLOWNESS_CATALOG[kind]:
        _param(params, name, kind)

    if kind == "constant":
        c = _positive(params["c"], "c", kind)
        fn = lambda x, y: np.full(np.broadcast(x, y).shape, c)
    elif kind == "gauss1d":
        fn = _gauss1d
    elif kind in ("sine2d", "r1", "r2"):
        defaults = {"r1": (0.99, 2.0), "r2": (0.5, 20.0)}
        A, f = (float(params["A"]), float(params["f"])) if kind == "sine2d" else defaults[kind]
        if abs(A) >= 1.0:
            raise ConfigurationError(f"slowness '{kind}': |A| must be < 1 to stay positive")
        fn = _sine2d(A, f)
    elif kind == "varsine":
        fn = _varsine
    elif kind == "obstacles":
        inside = _positive(params["inside_value"], "inside_value", kind)
        outside = _positive(params.get("outside_value", 1.0), "outside_value", kind)
        fn = _obstacles(params["shapes"], inside, outside, kind)
    elif kind == "maze":
        fn = _obstacles(list(MAZE_SHAPES), BARRIER, 1.0, kind)
    elif kind == "fast_obstacle":
        fn = _obstacles(list(FAST_OBSTACLE_SHAPES), FAST, 1.0, kind)
    elif kind == "barrier_box":
        fn = _obstacles(list(BARRIER_BOX_SHAPES), BARRIER, 1.0, kind)
    elif kind == "squares":
        eps = _positive(params["eps"], "eps", kind)
        line_tol = _positive(params.get("line_tol", 1e-9), "line_tol", kind)
        fn = _squares(eps, line_tol)
    else:
        eps = _positive(params["eps"], "eps", kind)
        fn = _checkerboard(eps, int(seed))

    return SlownessField(kind=kind, params=params, seed=int(seed), fn=fn)
