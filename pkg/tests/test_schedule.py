import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgvc.errors import InvalidSchedule, ShapeMismatch
from fgvc.schedule import (build_schedule, estimate_x0, posterior_params,
                           reverse_mean)

# direct product of (1 - beta_t) for T=1000 linear 1e-4..0.02, evaluated at
# 60 decimal digits
ALPHA_BAR_1000 = 4.035829765375683314817635e-5


def test_single_step_schedule():
    s = build_schedule(1, 0.5, 0.5)
    assert s.alpha_bar[1] == pytest.approx(0.5)
    assert s.beta_tilde[1] == 0.0
    assert s.alpha_bar[0] == 1.0


def test_two_step_product():
    s = build_schedule(2, 0.1, 0.2)
    assert s.alpha_bar[2] == pytest.approx(0.9 * 0.8, abs=1e-15)
    assert s.beta[1] == pytest.approx(0.1)
    assert s.beta[2] == pytest.approx(0.2)


def test_long_schedule_matches_extended_precision_product():
    s = build_schedule(1000, 1e-4, 0.02)
    assert s.alpha_bar[1000] == pytest.approx(ALPHA_BAR_1000, rel=1e-12)


def test_invariants_default_schedule():
    s = build_schedule(512, 1e-4, 0.02)
    assert (np.diff(s.beta[1:]) > 0).all()
    assert (np.diff(s.alpha_bar) < 0).all()
    assert 0 < s.alpha_bar[-1] < 1
    assert s.beta_tilde[1] == 0.0
    assert (s.beta_tilde[2:] >= 0).all()
    assert (s.beta_tilde[2:] < s.beta[2:]).all()


def test_bad_bounds_rejected():
    with pytest.raises(InvalidSchedule):
        build_schedule(0, 0.1, 0.2)
    with pytest.raises(InvalidSchedule):
        build_schedule(10, 0.0, 0.2)
    with pytest.raises(InvalidSchedule):
        build_schedule(10, 0.3, 0.2)
    with pytest.raises(InvalidSchedule):
        build_schedule(10, 0.1, 1.0)
    with pytest.raises(InvalidSchedule):
        build_schedule(10, 0.1, 0.1)  # constant: not strictly increasing


def test_reproducible_bit_for_bit():
    a = build_schedule(512, 1e-4, 0.02)
    b = build_schedule(512, 1e-4, 0.02)
    assert np.array_equal(a.alpha_bar, b.alpha_bar)
    assert np.array_equal(a.beta_tilde, b.beta_tilde)


def test_posterior_t1_degenerate(tiny_sched):
    y = np.array([3.0, -1.0])
    z = np.array([9.9, 2.5])
    mu, var = posterior_params(tiny_sched, 1, z, y)
    assert var == 0.0
    np.testing.assert_allclose(mu, y, atol=1e-12)


def test_posterior_zero_inputs(tiny_sched):
    mu, _ = posterior_params(tiny_sched, 2, np.zeros(4), np.zeros(4))
    np.testing.assert_array_equal(mu, np.zeros(4))


def test_posterior_hand_evaluated(tiny_sched):
    # T=2 schedule: ab1=0.9, ab2=0.72, beta2=0.2; coefficients evaluated at
    # 60 digits: c_y=0.67763092717893842829, c_z=0.31943828249996995663
    mu, var = posterior_params(tiny_sched, 2, np.array([2.0]), np.array([1.0]))
    assert mu[0] == pytest.approx(1.3165074921788783415, rel=1e-14)
    assert var == pytest.approx(0.071428571428571428571, rel=1e-14)


def test_estimate_x0_direct():
    s = build_schedule(8, 0.1, 0.4)
    t = 5
    ab = s.alpha_bar[t]
    z = np.array([1.0])
    assert estimate_x0(s, t, z, np.zeros(1))[0] == pytest.approx(1.0 / np.sqrt(ab))


def test_estimate_x0_exact_inversion(small_sched):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 4))
    eps = rng.standard_normal((3, 4))
    t = 17
    ab = small_sched.alpha_bar[t]
    z = np.sqrt(ab) * x + np.sqrt(1 - ab) * eps
    np.testing.assert_allclose(estimate_x0(small_sched, t, z, eps), x, atol=1e-12)


def test_estimate_x0_duplicate_formula(small_sched):
    rng = np.random.default_rng(1)
    z = rng.standard_normal(6)
    eps = rng.standard_normal(6)
    t = 9
    ab = small_sched.alpha_bar[t]
    expected = (z - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)  # independent eval
    np.testing.assert_allclose(estimate_x0(small_sched, t, z, eps), expected,
                               rtol=1e-15)


def test_reverse_mean_zero_noise(small_sched):
    z = np.array([2.0, -3.0])
    t = 11
    mu, var = reverse_mean(small_sched, t, z, np.zeros(2))
    np.testing.assert_allclose(mu, z / np.sqrt(small_sched.alpha[t]), rtol=1e-15)
    assert var == small_sched.beta_tilde[t]


def test_reverse_mean_duplicate_formula(small_sched):
    rng = np.random.default_rng(2)
    z = rng.standard_normal(5)
    eps = rng.standard_normal(5)
    t = 20
    ab = small_sched.alpha_bar[t]
    expected = (z - small_sched.beta[t] / np.sqrt(1 - ab) * eps) \
        / np.sqrt(small_sched.alpha[t])
    mu, _ = reverse_mean(small_sched, t, z, eps)
    np.testing.assert_allclose(mu, expected, rtol=1e-15)


def test_shape_mismatch_raises(small_sched):
    with pytest.raises(ShapeMismatch):
        posterior_params(small_sched, 3, np.zeros(3), np.zeros(4))
    with pytest.raises(ShapeMismatch):
        estimate_x0(small_sched, 3, np.zeros(3), np.zeros((3, 1)))
    with pytest.raises(ShapeMismatch):
        reverse_mean(small_sched, 3, np.zeros(2), np.zeros(3))


@settings(max_examples=40, deadline=None)
@given(t=st.integers(min_value=2, max_value=32), seed=st.integers(0, 10 ** 6))
def test_posterior_equals_reverse_with_consistent_noise(t, seed):
    sched = build_schedule(32, 1e-3, 0.05)
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(8)
    z = rng.standard_normal(8)
    ab = sched.alpha_bar[t]
    eps = (z - np.sqrt(ab) * y) / np.sqrt(1 - ab)
    mu_q, var_q = posterior_params(sched, t, z, y)
    mu_p, var_p = reverse_mean(sched, t, z, eps)
    np.testing.assert_allclose(mu_p, mu_q, rtol=1e-10, atol=1e-12)
    assert var_p == var_q


@settings(max_examples=25, deadline=None)
@given(T=st.integers(min_value=2, max_value=400),
       b0=st.floats(min_value=1e-6, max_value=0.01),
       spread=st.floats(min_value=1e-4, max_value=0.3))
def test_schedule_invariants_property(T, b0, spread):
    s = build_schedule(T, b0, b0 + spread)
    assert (np.diff(s.beta[1:]) > 0).all()
    assert (np.diff(s.alpha_bar) < 0).all()
    assert (s.beta_tilde[1:] <= s.beta[1:]).all()
    # strictness is representable until alpha_bar underflows float64 spacing
    strict = s.alpha_bar[:-1] > 1e-12  # alpha_bar[t-1] aligned with steps 1..T
    assert (s.beta_tilde[1:][strict] < s.beta[1:][strict]).all()
    assert s.beta_tilde[1] == 0.0
