"""
Two-level grid geometry.

The unit square (or interval) is split into N subdomains per axis, each
resolved by M fine cells. Every node of every grid family is addressed by
integers; the coordinate of a node is always derived from its global fine
index (p, q) as p / (N*M), never accumulated in floating point.

Families in 2D:
    Coarse(i, j)        -> fine index (iM,     jM)
    HShift(i, l, j)     -> fine index (iM + l, jM),     l = 1..M-1
    VShift(i, j, m)     -> fine index (iM,     jM + m), m = 1..M-1
    Fine(i, j, l, m)    -> fine index (iM + l, jM + m), l, m = 0..M

In 1D only Coarse(i) and Fine(i, l) exist.
"""
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from utils.errors import ConfigurationError, GridRangeError

COARSE = "coarse"
HSHIFT = "hshift"
VSHIFT = "vshift"
FINE = "fine"


@dataclass(frozen=True)
class GridSpec:
    """Coarse/fine geometry on [0,1]^d built from integer counts."""

    d: int
    N: int
    M: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigurationError(f"dimension must be 1 or 2, got {self.d}")
        if int(self.N) != self.N or self.N < 2:
            raise ConfigurationError(f"N must be an integer >= 2, got {self.N}")
        if int(self.M) != self.M or self.M < 2:
            raise ConfigurationError(f"M must be an integer >= 2, got {self.M}")

    @property
    def H(self):
        return 1.0 / self.N

    @property
    def h(self):
        return 1.0 / (self.N * self.M)

    @property
    def n_coarse(self):
        """Coarse nodes per axis."""
        return self.N + 1

    @property
    def n_fine(self):
        """Global fine nodes per axis."""
        return self.N * self.M + 1

    @property
    def fine_shape(self):
        return (self.n_fine, self.n_fine if self.d == 2 else 1)

    def coordinate(self, p):
        return p / (self.N * self.M)


@dataclass(frozen=True)
class NodeId:
    family: str
    index: Tuple[int, ...]

    @classmethod
    def coarse(cls, i, j=None):
        return cls(COARSE, (i,) if j is None else (i, j))

    @classmethod
    def hshift(cls, i, l, j):
        return cls(HSHIFT, (i, l, j))

    @classmethod
    def vshift(cls, i, j, m):
        return cls(VSHIFT, (i, j, m))

    @classmethod
    def fine(cls, i, *rest):
        return cls(FINE, (i,) + tuple(rest))


@dataclass(frozen=True)
class BoundaryEntry:
    node: NodeId
    normals: Tuple[Tuple[int, ...], ...]


@dataclass(frozen=True)
class SubdomainBoundary:
    subdomain: Tuple[int, ...]
    entries: Tuple[BoundaryEntry, ...]


@dataclass(frozen=True)
class Lattice:
    """
    A rectangular block of the global fine grid.

    Node (a, b) of the block sits at global fine index
    (origin[0] + stride * a, origin[1] + stride * b).
    """

    origin: Tuple[int, int]
    stride: int
    shape: Tuple[int, int]
    name: str = ""

    def fine_indices(self):
        p = self.origin[0] + self.stride * np.arange(self.shape[0])
        q = self.origin[1] + self.stride * np.arange(self.shape[1])
        return np.meshgrid(p, q, indexing="ij")

    def coords(self, spec):
        P, Q = self.fine_indices()
        scale = float(spec.N * spec.M)
        return P / scale, Q / scale

    def slices(self):
        """Index expression selecting this block from a global (p, q) array."""
        p0, q0 = self.origin
        s = self.stride
        return (slice(p0, p0 + s * (self.shape[0] - 1) + 1, s),
                slice(q0, q0 + s * (self.shape[1] - 1) + 1, s))


def _check(cond, node):
    if not cond:
        raise GridRangeError(f"index out of range for {node.family}: {node.index}")


def fine_index(spec, node):
    """Global fine index of a node, validating the family's index ranges."""
    N, M = spec.N, spec.M
    idx = node.index
    if spec.d == 1:
        if node.family == COARSE and len(idx) == 1:
            _check(0 <= idx[0] <= N, node)
            return (idx[0] * M,)
        if node.family == FINE and len(idx) == 2:
            i, l = idx
            _check(0 <= i <= N - 1 and 0 <= l <= M, node)
            return (i * M + l,)
        raise GridRangeError(f"family {node.family}{idx} does not exist in 1D")

    if node.family == COARSE and len(idx) == 2:
        i, j = idx
        _check(0 <= i <= N and 0 <= j <= N, node)
        return (i * M, j * M)
    if node.family == HSHIFT and len(idx) == 3:
        i, l, j = idx
        _check(0 <= i <= N - 1 and 1 <= l <= M - 1 and 0 <= j <= N, node)
        return (i * M + l, j * M)
    if node.family == VSHIFT and len(idx) == 3:
        i, j, m = idx
        _check(0 <= i <= N and 0 <= j <= N - 1 and 1 <= m <= M - 1, node)
        return (i * M, j * M + m)
    if node.family == FINE and len(idx) == 4:
        i, j, l, m = idx
        _check(0 <= i <= N - 1 and 0 <= j <= N - 1 and 0 <= l <= M and 0 <= m <= M, node)
        return (i * M + l, j * M + m)
    raise GridRangeError(f"malformed node {node.family}{idx}")


def coords(spec, node):
    """
    Coordinates of a node in [0,1]^d.

    Args:
        spec (GridSpec): grid geometry
        node (NodeId): node of any family

    Returns:
        tuple: d floats, each an integer count divided by N*M
    """
    return tuple(spec.coordinate(p) for p in fine_index(spec, node))


def node_at(spec, p, q=0):
    """Canonical coarse-family NodeId of a skeleton fine index."""
    N, M = spec.N, spec.M
    if spec.d == 1:
        if p % M or not 0 <= p <= N * M:
            raise GridRangeError(f"fine index {p} is not a coarse node")
        return NodeId.coarse(p // M)
    if not (0 <= p <= N * M and 0 <= q <= N * M):
        raise GridRangeError(f"fine index {(p, q)} outside the grid")
    if p % M == 0 and q % M == 0:
        return NodeId.coarse(p // M, q // M)
    if q % M == 0:
        return NodeId.hshift(p // M, p % M, q // M)
    if p % M == 0:
        return NodeId.vshift(p // M, q // M, q % M)
    raise GridRangeError(f"fine index {(p, q)} is not a coarse-family node")


def boundary_of(spec, i, j=0):
    """
    Enumerate the coarse-family nodes on the boundary of subdomain (i, j).

    Corners carry both inward normals, edge nodes one.

    Args:
        spec (GridSpec): grid geometry
        i (int): subdomain index along x
        j (int): subdomain index along y (ignored in 1D)

    Returns:
        SubdomainBoundary: ordered entries (corners first, then W, E, S, N edges)
    """
    N, M = spec.N, spec.M
    if spec.d == 1:
        if not 0 <= i <= N - 1:
            raise GridRangeError(f"subinterval {i} out of range 0..{N - 1}")
        return SubdomainBoundary(
            subdomain=(i,),
            entries=(BoundaryEntry(NodeId.coarse(i), ((1,),)),
                     BoundaryEntry(NodeId.coarse(i + 1), ((-1,),))),
        )

    if not (0 <= i <= N - 1 and 0 <= j <= N - 1):
        raise GridRangeError(f"subdomain {(i, j)} out of range 0..{N - 1}")

    east, west, north, south = (-1, 0), (1, 0), (0, -1), (0, 1)
    entries = [
        BoundaryEntry(NodeId.coarse(i, j), (west, south)),
        BoundaryEntry(NodeId.coarse(i + 1, j), (east, south)),
        BoundaryEntry(NodeId.coarse(i, j + 1), (west, north)),
        BoundaryEntry(NodeId.coarse(i + 1, j + 1), (east, north)),
    ]
    for m in range(1, M):
        entries.append(BoundaryEntry(NodeId.vshift(i, j, m), (west,)))
    for m in range(1, M):
        entries.append(BoundaryEntry(NodeId.vshift(i + 1, j, m), (east,)))
    for l in range(1, M):
        entries.append(BoundaryEntry(NodeId.hshift(i, l, j), (south,)))
    for l in range(1, M):
        entries.append(BoundaryEntry(NodeId.hshift(i, l, j + 1), (north,)))
    return SubdomainBoundary(subdomain=(i, j), entries=tuple(entries))


def adjacent_subdomains(spec, p, q=0):
    """Subdomains whose closed square contains global fine node (p, q)."""
    N, M = spec.N, spec.M

    def along(k):
        if k % M == 0:
            return [a for a in (k // M - 1, k // M) if 0 <= a <= N - 1]
        return [k // M]

    if spec.d == 1:
        return [(a,) for a in along(p)]
    return [(a, b) for a in along(p) for b in along(q)]


def coarse_lattices(spec):
    """
    The 1 + 2(M-1) coarse grids as lattices on the global fine grid (2D),
    or the single coarse grid (1D). Order: Coarse, HShift l=1.., VShift m=1..
    """
    N, M = spec.N, spec.M
    if spec.d == 1:
        return [Lattice((0, 0), M, (N + 1, 1), "coarse")]
    grids = [Lattice((0, 0), M, (N + 1, N + 1), "coarse")]
    grids += [Lattice((l, 0), M, (N, N + 1), f"hshift{l}") for l in range(1, M)]
    grids += [Lattice((0, m), M, (N + 1, N), f"vshift{m}") for m in range(1, M)]
    return grids


def subdomain_lattice(spec, i, j=0):
    M = spec.M
    if spec.d == 1:
        return Lattice((i * M, 0), 1, (M + 1, 1), f"sub{i}")
    return Lattice((i * M, j * M), 1, (M + 1, M + 1), f"sub{i}_{j}")


def subdomain_indices(spec):
    if spec.d == 1:
        return [(i,) for i in range(spec.N)]
    return [(i, j) for i in range(spec.N) for j in range(spec.N)]


def fine_lattice(spec):
    return Lattice((0, 0), 1, spec.fine_shape, "fine")


def skeleton_mask(spec):
    """Boolean mask of coarse-family nodes on the global fine grid."""
    P, Q = fine_lattice(spec).fine_indices()
    if spec.d == 1:
        return P % spec.M == 0
    return (P % spec.M == 0) | (Q % spec.M == 0)
