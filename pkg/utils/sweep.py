"""
Serial Eikonal core: closed-form Godunov upwind update, wind classification
and Gauss-Seidel fast sweeping over the 2^d axis-sign orderings.

Arrays are indexed [i, j] with i along x and j along y; 1D problems use
shape (n, 1). Winds are stored as two int8 arrays (wx, wy); (0, 0) means
Unset. A wind component of +1 means the characteristic flows toward +axis,
so the upwind neighbor sits on the -axis side.
"""
import sys
import os
import logging
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from dataclasses import dataclass

import numba as nb
import numpy as np

from config.config import FSM_MAX_ROUNDS, FSM_TOL_FACTOR
from utils.errors import ShapeMismatchError

logger = logging.getLogger(__name__)

# Numba-settings
_numba_setting = {'nogil': True, 'cache': True}

INF = np.finfo(np.float64).max / 2


@nb.njit(**_numba_setting)
def _godunov(a, b, rs):
    if a >= INF and b >= INF:
        return INF
    if a >= INF:
        return b + rs
    if b >= INF:
        return a + rs
    diff = a - b
    if abs(diff) < rs:
        return 0.5 * (a + b + np.sqrt(2.0 * rs * rs - diff * diff))
    return min(a, b) + rs


@nb.njit(**_numba_setting)
def _candidate(left, right, down, up, rs):
    """Upwind candidate value and wind from the four neighbor values."""
    a = min(left, right)
    b = min(down, up)
    ut = _godunov(a, b, rs)
    if ut >= INF:
        return INF, 0, 0
    wx = 1 if left < right else -1
    wy = 1 if down < up else -1
    if ut < b:
        return ut, wx, 0
    if ut < a:
        return ut, 0, wy
    return ut, wx, wy


@nb.njit(**_numba_setting)
def _neighbors(u, i, j):
    nx, ny = u.shape
    left = u[i - 1, j] if i > 0 else INF
    right = u[i + 1, j] if i < nx - 1 else INF
    down = u[i, j - 1] if j > 0 else INF
    up = u[i, j + 1] if j < ny - 1 else INF
    return left, right, down, up


@nb.njit(**_numba_setting)
def _fsm_round(u, wx, wy, fixed, r, s):
    """One round of 2^d Gauss-Seidel sweeps; returns the largest decrease."""
    nx, ny = u.shape
    n_s2 = 2 if ny > 1 else 1
    change = 0.0
    for o1 in range(2):
        for o2 in range(n_s2):
            for ii in range(nx):
                i = ii if o1 == 0 else nx - 1 - ii
                for jj in range(ny):
                    j = jj if o2 == 0 else ny - 1 - jj
                    if fixed[i, j]:
                        continue
                    left, right, down, up = _neighbors(u, i, j)
                    ut, cx, cy = _candidate(left, right, down, up, r[i, j] * s)
                    if ut < u[i, j]:
                        delta = u[i, j] - ut
                        if delta > change:
                            change = delta
                        u[i, j] = ut
                        wx[i, j] = cx
                        wy[i, j] = cy
    return change


@nb.njit(**_numba_setting)
def _candidates_grid(u, r, s):
    """C_H(nbrs(u)) at every node of a grid, without updating anything."""
    nx, ny = u.shape
    out = np.empty_like(u)
    for i in range(nx):
        for j in range(ny):
            left, right, down, up = _neighbors(u, i, j)
            ut, cx, cy = _candidate(left, right, down, up, r[i, j] * s)
            out[i, j] = ut
    return out


def godunov_solve(a, b, r, s):
    """
    Closed-form Godunov upwind solution at a node.

    Args:
        a (float): smaller x-neighbor value (INF when absent)
        b (float): smaller y-neighbor value (INF when absent)
        r (float): slowness at the node
        s (float): grid spacing

    Returns:
        float: candidate value, INF when both inputs are INF
    """
    return float(_godunov(float(a), float(b), float(r) * float(s)))


def local_update(nbrs, current, r, s, wind=None):
    """
    Min-update of one node from its neighbors.

    Args:
        nbrs (tuple): (left, right) in 1D or (left, right, down, up) in 2D
        current (float): present node value
        r (float): slowness at the node
        s (float): grid spacing
        wind (tuple): present wind, returned when the node keeps its value

    Returns:
        tuple: (value, wind)
    """
    nbrs = tuple(float(v) for v in nbrs)
    if len(nbrs) == 2:
        left, right = nbrs
        down = up = INF
        d = 1
    elif len(nbrs) == 4:
        left, right, down, up = nbrs
        d = 2
    else:
        raise ShapeMismatchError(f"expected 2 or 4 neighbor values, got {len(nbrs)}")
    if wind is None:
        wind = (0,) * d
    ut, cx, cy = _candidate(left, right, down, up, float(r) * float(s))
    if ut < current:
        return float(ut), ((int(cx),) if d == 1 else (int(cx), int(cy)))
    return float(current), tuple(wind)


def grid_candidates(values, r, s):
    """Coarse-solver evaluation C_H(nbrs(U)) at each node of a grid."""
    return _candidates_grid(np.ascontiguousarray(values, dtype=np.float64),
                            np.ascontiguousarray(r, dtype=np.float64), float(s))


@dataclass
class Field:
    """Values, winds and fixed flags on one rectangular grid."""

    values: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    fixed: np.ndarray

    @classmethod
    def empty(cls, shape):
        return cls(values=np.full(shape, INF),
                   wx=np.zeros(shape, dtype=np.int8),
                   wy=np.zeros(shape, dtype=np.int8),
                   fixed=np.zeros(shape, dtype=bool))

    @classmethod
    def from_boundary(cls, mask, values):
        """Field with `mask` nodes fixed at `values`, every other node INF."""
        field = cls.empty(mask.shape)
        field.fixed[mask] = True
        field.values[mask] = values[mask]
        return field

    @property
    def shape(self):
        return self.values.shape

    def wind(self, i, j=0):
        if self.values.shape[1] == 1:
            return (int(self.wx[i, j]),)
        return (int(self.wx[i, j]), int(self.wy[i, j]))


@dataclass(frozen=True)
class SweepReport:
    rounds: int
    converged: bool
    max_change: float


def default_tol(shape, r, s):
    """1e-12 times the grid diameter times the largest slowness."""
    diameter = s * np.hypot(shape[0] - 1, shape[1] - 1)
    return FSM_TOL_FACTOR * diameter * float(np.max(r))


def fsm_solve(field, r, spacing, max_rounds=FSM_MAX_ROUNDS, tol=None):
    """
    Fast sweeping on one grid, in place.

    Rounds of 2^d orderings repeat until a round changes no node by tol or
    more; the confirming round counts toward the rounds used.

    Args:
        field (Field): initialized field (fixed nodes set, others INF)
        r (np.ndarray): slowness sampled at the grid nodes
        spacing (float): grid spacing
        max_rounds (int): round budget
        tol (float): change threshold, default from default_tol

    Returns:
        SweepReport: rounds used, convergence flag and last round's change
    """
    if field.values.ndim != 2 or r.shape != field.values.shape:
        raise ShapeMismatchError(f"slowness shape {r.shape} does not match field {field.values.shape}")
    if tol is None:
        tol = default_tol(field.values.shape, r, spacing)
    r = np.ascontiguousarray(r, dtype=np.float64)

    change = np.inf
    rounds = 0
    while rounds < max_rounds:
        change = _fsm_round(field.values, field.wx, field.wy, field.fixed, r, float(spacing))
        rounds += 1
        if change < tol:
            return SweepReport(rounds=rounds, converged=True, max_change=float(change))

    logger.warning("fast sweeping stopped after %d rounds (last change %.3e)", rounds, change)
    return SweepReport(rounds=rounds, converged=False, max_change=float(change))
