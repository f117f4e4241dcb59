from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from convexmoments import estimators as E
from convexmoments.constants import gamma_p
from convexmoments.distributions import make_distribution, sample
from convexmoments.estimators import EstimatorError

# mpmath reference values
MP_CHI2_INV_MEAN = 1.2533141373155003      # E|X|^{-1}, chi_2
MP_CHI16_INV_MEAN = 0.26253504145915508    # E|X|^{-1}, chi_16
MP_CHI16_P4 = 4.1195342878142355
MP_SMALLBALL_01 = 0.0078232197074385394    # P(chi_2 <= 0.1 sqrt(pi/2))
MP_SMALLBALL_1 = 0.54406187223400376
MP_NORMAL_MEDIAN = 0.67448975019608174


@pytest.fixture(scope="module")
def gauss16():
    return sample(make_distribution("gaussian", 16), 11, 1_000_000)


def contains(est, value):
    return est.ci_low <= value <= est.ci_high


def test_strong_moment_gaussian(gauss16):
    e2 = E.strong_moment(gauss16, 2.0)
    assert e2.value == pytest.approx(4.0, abs=0.01)
    assert contains(e2, 4.0)
    e4 = E.strong_moment(gauss16, 4.0)
    assert e4.value == pytest.approx(MP_CHI16_P4, abs=0.01)
    assert e4.ci_low <= e4.value <= e4.ci_high
    assert e4.method == "median_of_means" and e4.n_samples == 1_000_000


def test_strong_moment_pareto_and_guards():
    spec = make_distribution("radial_pareto", 2, r=6.0)
    e = E.strong_moment(sample(spec, 5, 1_000_000), 1.0)
    assert abs(e.value - 0.4) <= 3 * e.stderr
    with pytest.raises(EstimatorError, match="finite-variance"):
        E.strong_moment(sample(spec, 5, 20_000), 3.0)
    with pytest.raises(EstimatorError):
        E.strong_moment(sample(spec, 5, 100), 1.0)


def test_lyapunov_on_fixed_batch(gauss16):
    vals = [E.strong_moment(gauss16, p).value for p in (1, 1.5, 2, 3, 4, 6)]
    assert np.all(np.diff(vals) >= 0)


def test_weak_moment_oracles():
    for n in (1, 3, 16):
        for p in (1.0, 2.0, 4.0):
            assert E.weak_moment(make_distribution("gaussian", n), p).value == pytest.approx(gamma_p(p))
    t = make_distribution("student_t", 4, r=8.0, normalize=True)
    assert E.weak_moment(t, 2.0).value == pytest.approx(1.0)
    rp = make_distribution("radial_pareto", 2, r=6.0)
    w = E.weak_moment(rp, 1.0)
    assert w.value == pytest.approx(0.4 * 2 / math.pi) and w.ci_low == w.ci_high == w.value
    assert w.method == "oracle"


def test_weak_moment_laplace_even_oracle_and_search():
    spec = make_distribution("laplace_product", 3)
    assert E.weak_moment_oracle(spec, 4.0) == pytest.approx(24 ** 0.25)
    b = sample(spec, 3, 200_000)
    est = E.weak_moment(b, 4.0, seed=1)
    assert abs(est.value - 24 ** 0.25) <= 0.05
    with pytest.raises(EstimatorError):
        E.weak_moment_oracle(spec, 3.0)


def test_weak_below_strong_oracle_mode():
    for spec in (make_distribution("gaussian", 5), make_distribution("student_t", 3, r=7.0),
                 make_distribution("uniform_ball", 4)):
        for p in (1.0, 2.0, 3.0):
            from convexmoments.distributions import radial_moment_oracle
            assert E.weak_moment(spec, p).value <= radial_moment_oracle(spec, p) ** (1 / p)


def test_negative_moment_examples(gauss16):
    b2 = sample(make_distribution("gaussian", 2), 4, 200_000)
    with pytest.raises(EstimatorError, match="n/2"):
        E.negative_moment(b2, 1.0)
    e = E.negative_moment(gauss16, 1.0)
    assert e.ci_low <= 1 / MP_CHI16_INV_MEAN <= e.ci_high
    assert e.value <= E.strong_moment(gauss16, 1.0).value
    ub = sample(make_distribution("uniform_ball", 4), 6, 1_000_000)
    e = E.negative_moment(ub, 1.0)
    assert abs(e.value - 0.75) <= 0.003


def test_chi2_inverse_mean_oracle():
    from convexmoments.distributions import radial_moment_oracle
    assert radial_moment_oracle(make_distribution("gaussian", 2), -1.0) == pytest.approx(MP_CHI2_INV_MEAN)


def test_median_norm():
    e = E.median_norm(sample(make_distribution("gaussian", 1), 2, 400_000))
    assert e.ci_low <= MP_NORMAL_MEDIAN <= e.ci_high or abs(e.value - MP_NORMAL_MEDIAN) < 0.005
    pt = np.zeros((5000, 3))
    pt[:, 0] = 2.5
    assert E.median_norm(pt).value == 2.5
    e = E.median_norm(sample(make_distribution("pareto_1d", 1, r=3.0), 2, 400_000))
    assert e.value == pytest.approx(2 ** (1 / 3) - 1, abs=0.003)


def test_tail_probability():
    b = sample(make_distribution("gaussian", 1), 9, 400_000)
    assert E.tail_probability(b, 0.0).value == 1.0
    e = E.tail_probability(b, 1.96)
    assert e.ci_low - 0.002 <= 2 * stats.norm.sf(1.96) <= e.ci_high + 0.002
    t = sample(make_distribution("student_t", 1, r=4.0), 9, 1_000_000)
    ts = np.array([4.0, 6.0, 9.0])
    probs = np.array([E.tail_probability(t, x).value for x in ts])
    slope = np.polyfit(np.log(ts), np.log(probs), 1)[0]
    assert -4.6 <= slope <= -3.2
    with pytest.raises(EstimatorError):
        E.tail_probability(b, -1.0)


def test_small_ball_probability():
    b = sample(make_distribution("gaussian", 2), 8, 1_000_000)
    assert E.small_ball_probability(b, 0.0).value == 0.0
    e1 = E.small_ball_probability(b, 1.0)
    assert abs(e1.value - MP_SMALLBALL_1) <= 0.002
    e = E.small_ball_probability(b, 0.1)
    assert e.ci_low <= MP_SMALLBALL_01 <= e.ci_high
    assert MP_SMALLBALL_01 == pytest.approx(1 - math.exp(-(0.1 * math.sqrt(math.pi / 2)) ** 2 / 2))
    with pytest.raises(EstimatorError):
        E.small_ball_probability(b, 1.5)


def test_small_ball_calibration_is_independent():
    b = sample(make_distribution("laplace_product", 3), 8, 100_000)
    loc = E.small_ball_location(b)
    assert loc != float(b.norms.mean())
    assert loc == pytest.approx(b.norms.mean(), rel=0.02)


def test_covariance_deviation():
    n = 8
    Q = np.linalg.qr(np.random.default_rng(0).normal(size=(64, n)))[0] * math.sqrt(64)
    assert E.covariance_deviation(Q) == pytest.approx(0.0, abs=1e-10)
    spec = make_distribution("gaussian", n)
    small = E.covariance_deviation(sample(spec, 1, 2_000))
    large = E.covariance_deviation(sample(spec, 1, 200_000))
    assert large < small
    assert large == pytest.approx(np.abs(np.linalg.eigvalsh(
        (lambda x: x.T @ x / len(x) - np.eye(n))(sample(spec, 1, 200_000).data))).max(), rel=1e-4)
    with pytest.raises(EstimatorError):
        E.covariance_deviation(sample(make_distribution("student_t", 3, r=5.0), 1, 100))


def test_covariance_fitted_constant():
    n, N = 16, 16 * 2 ** 8
    spec = make_distribution("gaussian", n)
    devs = [E.covariance_deviation(sample(spec, s, N)) for s in range(20)]
    c = float(np.median(devs)) / math.sqrt(n / N)
    assert 0.5 <= c <= 4


def test_determinism():
    spec = make_distribution("student_t", 6, r=9.0)
    a = E.strong_moment(sample(spec, 21, 50_000), 2.0)
    b = E.strong_moment(sample(spec, 21, 50_000, threads=3), 2.0)
    assert a == b
    assert a.to_json()["ci"] == [a.ci_low, a.ci_high]


def test_wilson_interval_at_zero():
    lo, hi = E.wilson_interval(0, 1000)
    assert lo == 0.0 and 0 < hi < 0.01


@settings(max_examples=40, deadline=None)
@given(k=st.integers(0, 500), extra=st.integers(0, 500))
def test_wilson_contains_point(k, extra):
    n = k + extra
    if n == 0:
        return
    lo, hi = E.wilson_interval(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 40), p=st.floats(1.0, 3.0))
def test_estimate_interval_ordering(seed, p):
    b = sample(make_distribution("gaussian", 4), seed, 20_000)
    for est in (E.strong_moment(b, p), E.directional_moment(b, [1, 0, 0, 0], p), E.median_norm(b)):
        assert est.ci_low <= est.value <= est.ci_high
    assert E.strong_moment(b, p).value >= E.strong_moment(b, 1.0).value
