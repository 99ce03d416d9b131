import numpy as np
import pytest

from utils.errors import ConfigurationError, ShapeMismatchError
from utils.metrics import FlopModel, l1_absolute, l1_relative, linf, speedup_table, speedup_threshold


def test_norms():
    ref = np.array([1.0, 2.0, 3.0, 4.0])
    U = np.array([1.5, 2.0, 2.0, 4.0])
    assert l1_relative(U, ref) == pytest.approx(1.5 / 10.0)
    assert l1_absolute(U, ref, 0.5, 2) == pytest.approx(0.25 * 1.5)
    assert linf(U, ref) == 1.0


def test_norm_errors():
    with pytest.raises(ShapeMismatchError):
        linf(np.zeros(3), np.zeros(4))
    with pytest.raises(ConfigurationError, match="zero reference"):
        l1_relative(np.ones(3), np.zeros(3))
    with pytest.raises(ShapeMismatchError):
        l1_relative(np.ones(3), np.ones(2))


def test_threshold_quoted_value():
    threshold, flops = speedup_threshold(FlopModel(N=20, M=100, d=2, C=10))
    assert threshold == pytest.approx(266.01, abs=0.01)
    assert 250 <= threshold <= 280
    assert flops["serial"] == 10 * 4 * 2001 ** 2
    assert flops["fine_phase"] == 400 * 10 * 4 * 101 ** 2


def test_threshold_small_cases():
    assert speedup_threshold(FlopModel(N=2, M=2, d=2, C=10))[0] == pytest.approx(1000 / 792)
    assert speedup_threshold(FlopModel(N=10, M=10, d=1, C=1))[0] == pytest.approx(202 / 2464)


def test_square_splits_always_pay_off():
    for n in range(2, 65):
        assert speedup_threshold(FlopModel(N=n, M=n, d=2, C=10))[0] > 1.0


def test_threshold_grows_with_subdomain_size():
    for N in (5, 10, 20):
        values = [speedup_threshold(FlopModel(N=N, M=M))[0] for M in (10, 20, 50, 100, 200)]
        assert all(b > a for a, b in zip(values, values[1:]))


def test_two_scale_total_scales_with_iterations():
    one = FlopModel(N=10, M=20, k=1)
    five = FlopModel(N=10, M=20, k=5)
    assert five.two_scale_total == 5 * one.two_scale_total
    assert one.two_scale_total == one.coarse_phase + one.fine_phase


@pytest.mark.parametrize("kwargs", [{"N": 0, "M": 10}, {"N": 10, "M": 10, "d": 3}, {"N": 10, "M": 10, "C": 0}])
def test_invalid_model(kwargs):
    with pytest.raises(ConfigurationError):
        FlopModel(**kwargs)


def test_table():
    rows = speedup_table([10, 20], [50, 100])
    assert [(r["N"], r["M"]) for r in rows] == [(10, 50), (10, 100), (20, 50), (20, 100)]
    assert rows[-1]["threshold"] == pytest.approx(266.01, abs=0.01)
