from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracflow.quadrature import NODES, W_GAUSS, W_KRONROD, QuadratureFailure, integrate


def test_rule_weights():
    assert W_KRONROD.sum() == pytest.approx(2.0, rel=1e-15)
    assert W_GAUSS.sum() == pytest.approx(2.0, rel=1e-15)
    # Kronrod rule is exact for degree 22
    assert W_KRONROD @ NODES**22 == pytest.approx(2 / 23, rel=1e-13)


def test_polynomial_single_panel():
    res = integrate(lambda x: x**5 - 3 * x**2, [0.0, 2.0])
    assert res.value == pytest.approx(64 / 6 - 8, rel=1e-14)
    assert res.panels == 1


def test_sqrt_endpoints_with_clustering():
    f = lambda x: np.sqrt(np.clip(x * (1 - x), 0, None))
    res = integrate(f, [0.0, 1.0], [True], atol=1e-13, rtol=1e-13)
    assert res.value == pytest.approx(math.pi / 8, abs=1e-12)


def test_jump_at_break():
    f = lambda x: np.where(x < 0.3, 1.0, -2.0)
    res = integrate(f, [0.0, 0.3, 1.0])
    assert res.value == pytest.approx(0.3 - 1.4, abs=1e-13)


def test_degenerate_edges():
    assert integrate(np.sin, [1.0]).value == 0.0
    assert integrate(np.sin, [0.0, 0.0, 1.0]).value == pytest.approx(1 - math.cos(1.0), rel=1e-13)


def test_failure_reports_estimate():
    with pytest.raises(QuadratureFailure) as info:
        integrate(lambda x: np.sin(1 / np.maximum(x, 1e-300)), [0.0, 1.0], atol=1e-14, rtol=0, max_panels=64)
    assert math.isfinite(info.value.estimate)


def test_nonfinite_integrand():
    with pytest.raises(QuadratureFailure):
        integrate(lambda x: np.where(x > 0.4, np.nan, x), [0.0, 0.5])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 20.0), st.floats(-3, 3), st.floats(0.1, 5))
def test_exponential(a, lo, width):
    res = integrate(lambda x: np.exp(-a * x), [lo, lo + width], atol=1e-13, rtol=1e-12)
    exact = (math.exp(-a * lo) - math.exp(-a * (lo + width))) / a
    assert res.value == pytest.approx(exact, rel=1e-10, abs=1e-12)
    assert res.error <= max(1e-13, 1e-12 * abs(res.value)) * 1.0000001
