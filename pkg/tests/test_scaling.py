from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracflow.scaling import (
    HALF_BRANCH_T_CAP,
    Branch,
    ScalingDomainError,
    ScalingLaw,
    sigma,
    sigma_inverse_check,
)


def test_quarter_identity():
    assert ScalingLaw(0.25)(1e-3) == pytest.approx(0.1, rel=4 * np.finfo(float).eps)


def test_three_quarter_identity():
    assert ScalingLaw(0.75)(1e-4) == pytest.approx(1e-3, rel=4 * np.finfo(float).eps)


def test_half_identity():
    assert abs(ScalingLaw(0.5)(math.exp(-2)) - math.exp(-1)) <= 1e-12


def test_half_round_trip_random():
    law = ScalingLaw(0.5)
    rng = np.random.default_rng(2024)
    for t in np.exp(rng.uniform(np.log(1e-12), np.log(0.18), 100)):
        sig = law(t)
        assert abs(sigma_inverse_check(law, sig) - t) <= 1e-12 * t


def test_branches():
    assert Branch.of(0.2) is Branch.SUB_HALF
    assert Branch.of(0.5) is Branch.HALF
    assert Branch.of(0.9) is Branch.SUPER_HALF


def test_half_branch_domain():
    law = ScalingLaw(0.5)
    with pytest.raises(ScalingDomainError):
        law(HALF_BRANCH_T_CAP)
    with pytest.raises(ScalingDomainError):
        law(0.0)
    with pytest.raises(ScalingDomainError):
        sigma_inverse_check(law, 0.7)


def test_rejects_bad_order():
    for s in (0.0, 1.0, -0.2):
        with pytest.raises(ScalingDomainError):
            ScalingLaw(s)


def test_power_laws():
    assert sigma(ScalingLaw(0.3), 0.01) == pytest.approx(0.01 ** (0.6 / 1.6), rel=1e-15)
    assert sigma(ScalingLaw(0.8), 0.01) == pytest.approx(0.01**0.8, rel=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.95]), st.floats(-25, -2))
def test_inverse_round_trip(s, log_t):
    law = ScalingLaw(s)
    t = math.exp(log_t)
    assert law.inverse(law(t)) == pytest.approx(t, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([0.25, 0.5, 0.75]), st.floats(-20, -2), st.floats(0.01, 1.5))
def test_monotone_increasing(s, log_t, gap):
    law = ScalingLaw(s)
    t1 = math.exp(log_t)
    t2 = min(t1 * (1 + gap), 0.18)
    if t2 > t1:
        assert law(t2) > law(t1)


def test_half_branch_small_sigma():
    sig = ScalingLaw(0.5)(1e-300)
    assert 0 < sig < 1e-149
    assert sig**2 * abs(math.log(sig)) == pytest.approx(1e-300, rel=1e-12)
