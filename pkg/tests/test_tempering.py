import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tempering_lab import kernels as K
from tempering_lab import tempering as T
from tempering_lab.errors import DomainError
from tempering_lab.oracles import grid_min_t

ELL_1_01 = 0.27753259441579238611
ELL_15_01 = 0.19891354944048824849
ELL_1_049 = 0.49989998333026601349
T_05_03 = 0.25728658641487912021
U_15_025 = 0.59632253897119794628
U_1E6_03 = 0.88129079047889542150
GAP_100_03 = 0.0091057937615885760113

lams = st.floats(0.05, 200.0)
lstars = st.floats(0.0, 0.4999)


def test_t_lambda_values():
    assert T.t_lambda(1.0, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert T.t_lambda(2.0, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert T.t_lambda(0.5, 0.3) == pytest.approx(T_05_03, abs=1e-14)
    assert T.t_lambda(0.5, 0.3) == pytest.approx(grid_min_t(0.5, 0.3), abs=1e-8)


def test_u_lambda_values():
    assert T.u_lambda(2.0, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert T.u_lambda(1.5, 0.25) == pytest.approx(U_15_025, abs=1e-13)
    assert T.u_lambda(1.5, 0.25) == pytest.approx(grid_min_t(1.5, 0.25), abs=1e-8)
    # lam * KL amplifies rounding in KL by 1e6
    assert T.u_lambda(1e6, 0.3) == pytest.approx(U_1E6_03, abs=1e-10)
    assert abs(T.u_lambda(1e6, 0.3) - K.binary_entropy(0.3)) <= 1e-4


def test_ell_values():
    assert T.ell_lambda(1.0, 0.0) == 0.0
    assert T.ell_lambda(1.0, 0.1) == pytest.approx(ELL_1_01, abs=1e-14)
    assert T.ell_lambda(1.0, 0.49) == pytest.approx(ELL_1_049, abs=1e-14)
    assert T.ell_lambda(1.5, 0.1) == pytest.approx(ELL_15_01, abs=1e-10)
    assert abs(T.ell_lambda(3.0, 0.499999) - 0.5) <= 1e-3


def test_u_inverse_values():
    assert T.u_lambda_inverse(2.0, 1.0) == pytest.approx(0.5, abs=1e-12)
    assert T.u_lambda_inverse(2.0, T.u_lambda(2.0, 0.2)) == pytest.approx(0.2, abs=1e-9)
    assert T.u_lambda_inverse(1.5, K.binary_entropy(0.1)) == T.ell_lambda(1.5, 0.1)


def test_lemma9_values():
    assert T.lemma9_gap(2.0, 0.5) == pytest.approx(2.0, abs=1e-14)
    g = T.lemma9_gap(100.0, 0.3)
    assert 0 < g < 0.02
    assert g == pytest.approx(GAP_100_03, abs=1e-12)
    assert T.lemma9_gap(1.0001, 0.25) > 0


@pytest.mark.parametrize("lam", [0.0, -1.0, math.inf, math.nan])
def test_bad_lambda(lam):
    with pytest.raises(DomainError):
        T.ell_lambda(lam, 0.1)


def test_lemma9_needs_lambda_above_one():
    with pytest.raises(DomainError):
        T.lemma9_gap(1.0, 0.3)


@given(lams, lstars)
def test_ell_round_trip_and_dominance(lam, x):
    e = T.ell_lambda(lam, x)
    assert e >= x
    if lam >= 1:
        assert e < 0.5
    assert abs(T.t_lambda(lam, e) - K.binary_entropy(x)) <= 1e-9


@given(st.floats(1.001, 100.0), st.floats(0.001, 0.499))
def test_lemma9_limit_bound(lam, q):
    assert abs(T.u_lambda(lam, q) - K.binary_entropy(q)) <= lam / (lam - 1) ** 2 + 1e-12


@given(st.floats(0.05, 0.999))
def test_crossing_is_entropy_inverse(lam):
    c = T.tempering_crossing(lam)
    assert c == pytest.approx(K.binary_entropy_inv_lower(lam), abs=1e-9)
    assert T.ell_lambda(lam, c) == pytest.approx(0.5, abs=1e-6)


def test_crossing_none_above_one():
    assert T.tempering_crossing(1.0) is None
    assert T.tempering_crossing(4.0) is None


@given(lstars)
def test_continuity_at_one(x):
    assert T.ell_lambda(1.0 + 1e-9, x) == pytest.approx(T.ell_lambda(1.0, x), abs=1e-6)


@given(st.floats(0.1, 20.0), st.floats(0.0, 0.5))
def test_t_lambda_monotone_in_q(lam, q):
    assert T.t_lambda(lam, min(q + 0.01, 0.5)) >= T.t_lambda(lam, q) - 1e-12


def test_grid_emission_values_and_csv():
    curves = T.emit_tempering_grid([1.0], [0.0, 0.25, 0.49])
    want = [0.0, 1 - 2 ** -K.binary_entropy(0.25), 1 - 2 ** -K.binary_entropy(0.49)]
    assert np.allclose(curves[0].values, want, atol=1e-14)
    buf = io.StringIO()
    T.write_curves_csv(curves, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "lambda,l_star,ell"
    assert len(lines) == 4


def test_more_regularization_tempers_more():
    c2, c4 = T.emit_tempering_grid([2.0, 4.0], T.default_grid(points=64))
    assert all(b <= a for a, b in zip(c2.values, c4.values))


def test_crossing_at_half():
    (c,) = T.emit_tempering_grid([0.5], [0.1])
    assert c.crossing == pytest.approx(0.11002786443835955, abs=1e-6)


def test_curves_json_envelope():
    curves = T.emit_tempering_grid([0.5, 2.0], T.default_grid(points=5))
    buf = io.StringIO()
    T.dump_curves_json(curves, buf, {"points": 5})
    d = json.loads(buf.getvalue())
    assert [c["lambda"] for c in d["curves"]] == [0.5, 2.0]
    assert d["curves"][0]["crossing"] == pytest.approx(K.binary_entropy_inv_lower(0.5))


def test_schedules():
    m = 1024
    assert T.LambdaSchedule.constant(2.0)(m) == 2.0
    assert T.LambdaSchedule.linear(100.0)(m) == 100.0 * m
    assert T.LambdaSchedule.power(3.0, 0.5)(m) == pytest.approx(3.0 * 32.0)
    assert T.LambdaSchedule.inverse_log(1.0)(m) == pytest.approx(1.0 / math.log2(1026))
    s = T.LambdaSchedule.sqrt_optimal()
    vals = [s(10**j) for j in range(1, 7)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert all(v < 10**j / math.log2(10**j) for j, v in zip(range(1, 7), vals))


def test_schedule_round_trip():
    for s in (T.LambdaSchedule.constant(1.0), T.LambdaSchedule.power(2.0, 0.3), T.LambdaSchedule.sqrt_optimal(),
              T.LambdaSchedule.linear(5.0), T.LambdaSchedule.inverse_log(2.0)):
        assert T.LambdaSchedule.from_dict(s.to_dict()) == s


def test_schedule_rejects_unknown_kind():
    with pytest.raises(DomainError):
        T.LambdaSchedule.from_dict({"kind": "cubic"})
