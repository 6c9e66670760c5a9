import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nomamab.metrics import DataError, aggregate, estimation_error, fit_log_square


def test_self_fit_recovers_coefficient():
    t = np.arange(1, 100_001, dtype=float)
    fit = fit_log_square(t, 5000 * np.log(t) ** 2, t_min=1000)
    assert fit.a == pytest.approx(5000, rel=0.01)
    assert fit.r2 > 0.999
    assert fit.n_points == 99_000


def test_linear_curve_is_poor_fit_and_leaves_band():
    t = np.arange(1, 100_001, dtype=float)
    fit = fit_log_square(t, 10.0 * t, t_min=1000, band=(7000, 22000))
    assert fit.r2 < 0.9
    assert fit.within_band is False and fit.violations


def test_band_check_passes_inside():
    t = np.arange(1, 20_001, dtype=float)
    fit = fit_log_square(t, 9000 * np.log(t) ** 2, band=(7000, 22000))
    assert fit.within_band and not fit.violations


def test_other_log_base():
    t = np.arange(1, 10_001, dtype=float)
    fit = fit_log_square(t, 3 * np.log10(t) ** 2, base=10)
    assert fit.a == pytest.approx(3)


def test_decreasing_curve_is_rejected():
    t = np.arange(1, 1001, dtype=float)
    y = np.log(t) ** 2
    y[500] -= 5
    with pytest.raises(DataError):
        fit_log_square(t, y)


def test_too_few_points_rejected():
    t = np.arange(1, 201, dtype=float)
    with pytest.raises(DataError):
        fit_log_square(t, np.log(t) ** 2, t_min=150)


@settings(max_examples=50)
@given(st.floats(1, 1e5), st.floats(1e-3, 1e3))
def test_fit_is_scale_equivariant(a, scale):
    t = np.arange(1, 2001, dtype=float)
    y = a * np.log(t) ** 2 + np.sqrt(t)
    f1 = fit_log_square(t, y)
    f2 = fit_log_square(t, scale * y)
    assert f2.a == pytest.approx(scale * f1.a, rel=1e-9)
    assert f2.r2 == pytest.approx(f1.r2, abs=1e-9)


def test_aggregate():
    mean, std = aggregate([np.array([1.0, 2.0]), np.array([3.0, 6.0])])
    np.testing.assert_allclose(mean, [2, 4])
    np.testing.assert_allclose(std, [1, 2])
    with pytest.raises(DataError):
        aggregate([np.zeros(2), np.zeros(3)])
    with pytest.raises(DataError):
        aggregate([])


def test_estimation_error():
    assert estimation_error([0.5, 0.2], [0.4, 0.25]) == pytest.approx(0.075)
    assert estimation_error(np.ones(3), np.ones(3)) == 0
