import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tempering_lab import kernels as K
from tempering_lab.errors import DomainError

# 50-digit mpmath evaluations, rounded to 20 digits
H_01 = 0.46899559358928122125
H_03 = 0.88129089923069261822
HINV_05 = 0.11002786443835955126
KL_05_01 = 0.73696559416620616642

probs = st.floats(0.0, 1.0, allow_nan=False)
interior = st.floats(1e-12, 1 - 1e-12)


def test_entropy_values():
    assert K.binary_entropy(0.5) == 1.0
    assert K.binary_entropy(0.0) == 0.0
    assert K.binary_entropy(1.0) == 0.0
    assert K.binary_entropy(0.1) == pytest.approx(H_01, abs=1e-15)
    assert K.binary_entropy(0.3) == pytest.approx(H_03, abs=1e-15)


@pytest.mark.parametrize("bad", [-0.1, 1.1, math.nan, math.inf])
def test_entropy_rejects_out_of_range(bad):
    with pytest.raises(DomainError):
        K.binary_entropy(bad)


def test_deriv_values():
    assert K.binary_entropy_deriv(0.5) == 0.0
    assert K.binary_entropy_deriv(0.2) == pytest.approx(2.0, abs=1e-15)
    assert K.binary_entropy_deriv(0.8) == pytest.approx(-2.0, abs=1e-15)
    for p in (0.0, 1.0):
        with pytest.raises(DomainError):
            K.binary_entropy_deriv(p)


def test_deriv_inv_values():
    assert K.binary_entropy_deriv_inv(0.0) == 0.5
    assert K.binary_entropy_deriv_inv(2.0) == pytest.approx(0.2, abs=1e-16)
    tail = K.binary_entropy_deriv_inv(1000.0)
    assert 0.0 <= tail <= 1e-300


def test_entropy_inverse_values():
    assert K.binary_entropy_inv_lower(1.0) == 0.5
    assert K.binary_entropy_inv_lower(0.0) == 0.0
    assert K.binary_entropy_inv_lower(0.468995) == pytest.approx(0.1, abs=1e-6)
    assert K.binary_entropy_inv_lower(0.5) == pytest.approx(HINV_05, abs=1e-14)
    with pytest.raises(DomainError):
        K.binary_entropy_inv_lower(1.5)


def test_kl_values():
    assert K.binary_kl(0.3, 0.3) == 0.0
    assert K.binary_kl(0.0, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert K.binary_kl(0.5, 0.1) == pytest.approx(KL_05_01, abs=1e-14)
    assert K.binary_kl(0.2, 0.0) == math.inf


def test_sigmoid_values():
    assert K.sigmoid_e(0.0) == 0.5
    assert K.sigmoid_e(K.logit_e(0.1)) == pytest.approx(0.1, abs=1e-14)
    s = K.sigmoid_e(-50.0)
    assert 0.0 < s < 1e-21


@given(probs)
def test_entropy_symmetric_and_bounded(p):
    h = K.binary_entropy(p)
    assert 0.0 <= h <= 1.0
    assert abs(h - K.binary_entropy(1.0 - p)) <= 2e-15


@given(st.floats(1e-4, 1 - 1e-4))
def test_deriv_antisymmetric(p):
    assert K.binary_entropy_deriv(p) == pytest.approx(-K.binary_entropy_deriv(1.0 - p), abs=1e-9)


@given(st.floats(-20.0, 60.0))
def test_deriv_round_trip(beta):
    p = K.binary_entropy_deriv_inv(beta)
    if 0.0 < p < 1.0:
        assert K.binary_entropy_deriv(p) == pytest.approx(beta, rel=1e-9, abs=1e-9)


@given(st.floats(0.0, 0.5))
def test_entropy_inverse_round_trip(p):
    assert K.binary_entropy_inv_lower(K.binary_entropy(p)) == pytest.approx(p, abs=1e-9)


@given(probs, probs)
def test_kl_nonnegative(p, q):
    assert K.binary_kl(p, q) >= 0.0


@given(st.floats(-700, 15))
def test_logit_round_trip(t):
    p = K.sigmoid_e(t)
    if 1e-300 < p < 1 - 1e-15:
        assert K.logit_e(p) == pytest.approx(t, rel=1e-8, abs=1e-8)


def test_array_versions_match_scalars():
    p = np.linspace(0.0, 1.0, 101)
    assert np.allclose(K.entropy_array(p), [K.binary_entropy(x) for x in p], atol=1e-15)
    assert np.allclose(K.kl_array(p, 0.3), [K.binary_kl(x, 0.3) for x in p], atol=1e-14)


def test_pure():
    assert K.binary_entropy(0.123) == K.binary_entropy(0.123)
    assert K.binary_kl(0.2, 0.7) == K.binary_kl(0.2, 0.7)
