import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from dataclasses import dataclass

import numpy as np

from utils.errors import ConfigurationError, ShapeMismatchError


def _pair(U, ref):
    U = np.asarray(U, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if U.shape != ref.shape:
        raise ShapeMismatchError(f"field shapes differ: {U.shape} vs {ref.shape}")
    return U, ref


def l1_relative(U, ref):
    """Σ|U - ref| / Σ|ref| over the nodes of both fields."""
    U, ref = _pair(U, ref)
    norm = np.sum(np.abs(ref))
    if norm == 0:
        raise ConfigurationError("relative error against an identically zero reference")
    return float(np.sum(np.abs(U - ref)) / norm)


def l1_absolute(U, ref, spacing, d):
    """s^d Σ|U - ref|."""
    U, ref = _pair(U, ref)
    return float(spacing ** d * np.sum(np.abs(U - ref)))


def linf(U, ref):
    U, ref = _pair(U, ref)
    return float(np.max(np.abs(U - ref))) if U.size else 0.0


@dataclass(frozen=True)
class FlopModel:
    """
    Flop counts of whole-grid sweeping versus one two-scale iteration.

    A(n, d) = C 2^d (n + 1)^d is the cost of C rounds of 2^d sweeps over an
    (n + 1)^d grid.
    """

    N: int
    M: int
    d: int = 2
    C: int = 10
    k: int = 1

    def __post_init__(self):
        for name in ("N", "M", "C", "k"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"flop model '{name}' must be a positive integer, got {value}")
        if self.d not in (1, 2):
            raise ConfigurationError(f"flop model dimension must be 1 or 2, got {self.d}")

    def A(self, n):
        return self.C * 2 ** self.d * (n + 1) ** self.d

    @property
    def serial(self):
        """Whole fine grid solved in one go."""
        return self.A(self.N * self.M)

    @property
    def coarse_phase(self):
        """Per iteration: d M coarse grid solves and the causal sweeps."""
        return self.d * self.M * self.A(self.N) + 2 ** self.d * self.M * (self.N + 1) ** 2

    @property
    def fine_phase(self):
        """Per iteration: N^d subdomain solves."""
        return self.N ** self.d * self.A(self.M)

    @property
    def two_scale_total(self):
        return self.k * (self.coarse_phase + self.fine_phase)


def speedup_threshold(model):
    """
    Iteration count below which the parallel two-scale method can win.

    Returns:
        tuple: (threshold, {serial, coarse_phase, fine_phase, two_scale_total})
    """
    threshold = model.A(model.N * model.M) / (
        model.A(model.N) + model.A(model.M) + 2 ** model.d * model.M * (model.N + 1) ** 2
    )
    flops = {"serial": model.serial, "coarse_phase": model.coarse_phase,
             "fine_phase": model.fine_phase, "two_scale_total": model.two_scale_total}
    return float(threshold), flops


def speedup_table(Ns, Ms, d=2, C=10):
    """Rows (N, M, d, C, threshold, serial, coarse_phase, fine_phase) over a parameter grid."""
    rows = []
    for N in Ns:
        for M in Ms:
            threshold, flops = speedup_threshold(FlopModel(N=N, M=M, d=d, C=C))
            rows.append({"N": N, "M": M, "d": d, "C": C, "threshold": threshold,
                         "serial": flops["serial"], "coarse_phase": flops["coarse_phase"],
                         "fine_phase": flops["fine_phase"]})
    return rows
