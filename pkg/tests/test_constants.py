from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from convexmoments import constants as C
from convexmoments.constants import ConstantError

MP_GAMMA_3 = 1.1685752549624656  # (E|g|^3)^{1/3}, mpmath


def test_c2_examples():
    assert C.constant_bundle(2, 4, 2).c2_factor == pytest.approx((4 / 3) ** 3 * 16)
    assert C.c2_factor(2, math.inf) == 1.0
    assert C.c2_factor(2, 1e9) == pytest.approx(1.0, rel=1e-7)
    rs = np.linspace(2.0, 200.0, 500)
    vals = [C.c2_factor(r / 2, r) for r in rs]
    np.testing.assert_allclose(vals, [(r / (r - 1)) ** 3 * 16 for r in rs])
    assert max(vals) <= 16 * 8


def test_c1_piecewise():
    assert C.c1_factor(2.0, 4.0) == 2.0
    assert C.c1_factor(2.0, 2.5) == pytest.approx(2.5 / 0.5 ** 0.5)


def test_bundle_rejects_bad_order_and_serializes_inf():
    with pytest.raises(ConstantError):
        C.constant_bundle(4, 4)
    with pytest.raises(ConstantError):
        C.constant_bundle(2, 0.5)
    js = C.constant_bundle(2, math.inf).to_json()
    assert js["r"] == "inf" and js["alpha_factor"] == pytest.approx(math.exp(7 / 2))
    assert C.constant_bundle(2.5, 10).m == 3


@pytest.mark.parametrize("r", [3.0, 5.0, 10.0, 40.0])
def test_factors_increasing_in_p(r):
    ps = np.linspace(1.0, r - 0.05, 60)
    for fn in (C.c2_factor, C.restriction_factor):
        vals = np.array([fn(p, r) for p in ps])
        assert np.all(np.diff(vals) > 0), fn.__name__
    vals = np.array([C.alpha_factor(p, r, 1) for p in ps])
    assert np.all(np.diff(vals) > 0)
    vals = np.array([C.lemma5_alpha(p, r) for p in ps])
    assert np.all(np.diff(vals) > 0)


@pytest.mark.parametrize("r", [3.0, 5.0, 10.0, 40.0])
def test_c3_dips_then_rises(r):
    # (1 + 1/(r-p))^{1/p} falls from p = 1 before the pole at p = r takes over
    ps = np.linspace(1.0, r - 0.05, 200)
    vals = np.array([C.c3_factor(p, r) for p in ps])
    k = int(np.argmin(vals))
    assert 0 < k < len(ps) - 1
    assert np.all(np.diff(vals[:k + 1]) < 0) and np.all(np.diff(vals[k:]) > 0)


def test_c4_structure_bounded_on_half_range():
    for r in np.linspace(2.5, 100, 50):
        for p in np.linspace(1.0, r / 2, 10):
            growth = C.c4_factor(p, r) * C.c3_factor(p, r)
            assert 1 / 64 - 1e-12 <= growth <= 1.0


def test_alpha_factor_log_space_and_limit():
    r, p, m = 4.0, 1.0, 1
    expect = (25 / 9) ** 5
    assert C.alpha_factor(p, r, m) == pytest.approx(expect)
    assert C.alpha_factor(p, 1e7, 1) == pytest.approx(math.exp(4.0), rel=1e-5)
    assert C.alpha_factor(1.0, math.inf, 1) == pytest.approx(math.exp(4.0))
    assert C.alpha_factor(2.0, math.inf, 2) == pytest.approx(math.exp(7 / 2))
    assert C.alpha_factor(1.0, math.inf, 1, c=2.0) == math.inf
    assert C.alpha_factor(1.0, 500.0, 1, c=8.0) == math.inf


def test_gamma_p_examples():
    assert C.gamma_p(2) == pytest.approx(1.0)
    assert C.gamma_p(1) == pytest.approx(math.sqrt(2 / math.pi))
    assert C.gamma_p(4) == pytest.approx(3 ** 0.25)
    assert C.gamma_p(3) == pytest.approx(MP_GAMMA_3, rel=1e-12)
    q, _ = integrate.quad(lambda x: abs(x) ** 1.5 * stats.norm.pdf(x), -np.inf, np.inf)
    assert C.gamma_p(1.5) == pytest.approx(q ** (1 / 1.5), rel=1e-9)


def test_gamma_p_over_sqrt_p_decreasing():
    ps = np.linspace(2, 64, 200)
    v = np.array([C.gamma_p(p) / math.sqrt(p) for p in ps])
    assert np.all(np.diff(v) < 0)
    assert v.min() >= 0.6 and v.max() <= 1.0
    assert C.gamma_p(1e6) / 1e3 == pytest.approx(math.exp(-0.5), rel=1e-4)


def test_beta_and_tails():
    assert C.beta_fn(2, 2) == pytest.approx(1 / 6)
    with pytest.raises(ConstantError):
        C.beta_fn(0, 2)
    assert C.borell_tail(1, 2) == pytest.approx((7 / 6) ** -2)
    ts = np.linspace(0.01, 50, 400)
    v = np.array([C.borell_tail(t, 3.0) for t in ts])
    assert np.all(np.diff(v) < 0)
    assert np.all(np.diff(np.log(v), 2) > -1e-12)
    assert C.borell_tail(1e9, 3.0) < 1e-20
    assert C.paouris_tail(2, 16, 4, 1) == pytest.approx(0.25)
    assert C.paouris_tail(4 / 3, 9, 4, 1) == pytest.approx(1.0)
    with pytest.raises(ConstantError):
        C.paouris_tail(1, 4, 2.0)


def test_subgaussian_ratio():
    assert C.subgaussian_ratio(1) == pytest.approx(1.0)
    assert C.subgaussian_ratio(2) == pytest.approx(math.sqrt(math.pi) / 2)
    assert max(C.subgaussian_ratio(p) for p in np.linspace(1, 64, 300)) <= 1.0 + 1e-12


@settings(max_examples=60, deadline=None)
@given(r=st.floats(1.5, 500.0), frac=st.floats(0.01, 0.99))
def test_factor_limits_and_positivity(r, frac):
    p = 1.0 + frac * (r - 1.0) if r > 1.0 else 1.0
    if not p < r:
        return
    b = C.constant_bundle(p, r, 1)
    for v in (b.c2_factor, b.c3_factor, b.c4_factor, b.restriction_factor):
        assert v > 0 and math.isfinite(v)
    assert b.c2_factor >= 1 and b.c3_factor >= 1 and b.c4_factor <= 1
    assert C.level_ratio(p, r) >= 1
