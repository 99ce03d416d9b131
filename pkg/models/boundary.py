import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from utils.errors import ConfigurationError

EDGES = ("left", "right", "bottom", "top")
G_KINDS = ("zero", "distance")


@dataclass(frozen=True)
class PointSources:
    """u = 0 at each point; nearby nodes start at the locally exact travel time."""

    points: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        if not self.points:
            raise ConfigurationError("point sources need at least one point")
        for point in self.points:
            if not all(0.0 <= c <= 1.0 for c in point):
                raise ConfigurationError(f"point source {point} lies outside the unit domain")

    def fixed(self, spec, lattice, slowness):
        P, Q = lattice.fine_indices()
        scale = float(spec.N * spec.M)
        X, Y = P / scale, Q / scale
        # distances in fine-index units so a source on a node fixes only that node
        dist = np.full(X.shape, np.inf)
        values = np.full(X.shape, np.inf)
        for point in self.points:
            px = point[0]
            py = point[1] if len(point) > 1 else 0.0
            dist = np.minimum(dist, np.hypot(P - px * scale, Q - py * scale))
            values = np.minimum(values, slowness.at((px, py)) * np.hypot(X - px, Y - py))
        return dist < lattice.stride, values


def _g_values(g, anchor, X, Y):
    if g == "zero":
        return np.zeros(X.shape)
    return np.hypot(X - anchor[0], Y - (anchor[1] if len(anchor) > 1 else 0.0))


@dataclass(frozen=True)
class DomainEdges:
    """Γ is a subset of the domain edges, with g zero or the distance to an anchor."""

    edges: Tuple[str, ...] = EDGES
    g: str = "zero"
    anchor: Tuple[float, ...] = (0.0, 0.0)

    def __post_init__(self):
        unknown = set(self.edges) - set(EDGES)
        if unknown or not self.edges:
            raise ConfigurationError(f"edges must be a non-empty subset of {EDGES}, got {self.edges}")
        if self.g not in G_KINDS:
            raise ConfigurationError(f"g must be one of {G_KINDS}, got '{self.g}'")

    def fixed(self, spec, lattice, slowness):
        P, Q = lattice.fine_indices()
        last = spec.N * spec.M
        mask = np.zeros(P.shape, dtype=bool)
        if "left" in self.edges:
            mask |= P == 0
        if "right" in self.edges:
            mask |= P == last
        if spec.d == 2:
            if "bottom" in self.edges:
                mask |= Q == 0
            if "top" in self.edges:
                mask |= Q == last
        X, Y = lattice.coords(spec)
        return mask, _g_values(self.g, self.anchor, X, Y)


@dataclass(frozen=True)
class DomainBoundary(DomainEdges):
    """Γ = the whole boundary of the unit square (or both interval ends)."""

    edges: Tuple[str, ...] = field(default=EDGES, init=False)


def fixed_nodes(boundary, spec, lattice, slowness):
    """
    Fixed-node mask and values of Γ on a lattice of the global fine grid.

    Point sources fix every node closer than the lattice's own spacing, so
    coarse grids get a collar of width H and fine grids of width h.

    Returns:
        tuple: (bool mask, float values) shaped like the lattice
    """
    mask, values = boundary.fixed(spec, lattice, slowness)
    return mask, np.where(mask, values, np.inf)


def make_boundary(spec_dict):
    """Build boundary data from its config mapping."""
    kind = spec_dict.get("kind")
    if kind == "point_sources":
        points = tuple(tuple(float(c) for c in p) for p in spec_dict.get("points", ()))
        return PointSources(points)
    if kind == "domain_boundary":
        return DomainBoundary(g=spec_dict.get("g", "zero"),
                              anchor=tuple(spec_dict.get("anchor", (0.0, 0.0))))
    if kind == "domain_edges":
        return DomainEdges(edges=tuple(spec_dict.get("edges", ())),
                           g=spec_dict.get("g", "zero"),
                           anchor=tuple(spec_dict.get("anchor", (0.0, 0.0))))
    raise ConfigurationError(f"unknown boundary kind '{kind}'")
