import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orderpick.marl.advantages import gae, standardize


def brute_force_gae(r, v, d, gamma, lam, k):
    """A_t = sum_j (prod_{i<j} gamma^k_i * lam * live_i) * delta_j, summed term by term."""
    T = len(r)
    delta = [r[t] + gamma ** k[t] * v[t + 1] * (1 - d[t]) - v[t] for t in range(T)]
    out = []
    for t in range(T):
        total = 0.0
        for j in range(t, T):
            w = 1.0
            for i in range(t, j):
                w *= gamma ** k[i] * lam * (1 - d[i])
            total += w * delta[j]
        out.append(total)
    return np.array(out)


def test_gae_matches_double_sum():
    rng = np.random.default_rng(0)
    for _ in range(50):
        T = int(rng.integers(1, 40))
        r = rng.normal(size=T)
        v = rng.normal(size=T + 1)
        d = (rng.random(T) < 0.1).astype(float)
        k = rng.integers(1, 5, T)
        gamma, lam = rng.uniform(0.8, 1.0), rng.uniform(0.0, 1.0)
        adv, ret = gae(r, v, d, gamma, lam, k)
        np.testing.assert_allclose(adv, brute_force_gae(r, v, d, gamma, lam, k), rtol=0, atol=1e-9)
        np.testing.assert_allclose(ret, adv + v[:-1], rtol=0, atol=1e-12)


def test_gae_unit_durations_default():
    rng = np.random.default_rng(1)
    r, v, d = rng.normal(size=10), rng.normal(size=11), np.zeros(10)
    np.testing.assert_array_equal(gae(r, v, d, 0.9, 0.8)[0], gae(r, v, d, 0.9, 0.8, np.ones(10))[0])


def test_lambda_one_zero_values_is_discounted_return():
    r = np.array([1.0, 0.0, 2.0, -1.0])
    adv, _ = gae(r, np.zeros(5), np.zeros(4), 0.9, 1.0)
    expected = [sum(0.9 ** (j - t) * r[j] for j in range(t, 4)) for t in range(4)]
    np.testing.assert_allclose(adv, expected, atol=1e-12)


def test_done_cuts_bootstrap():
    adv, _ = gae([1.0, 1.0], [0.0, 0.0, 100.0], [0.0, 1.0], 0.99, 0.95)
    assert adv[1] == 1.0
    assert adv[0] == pytest.approx(1.0 + 0.99 * 0.95 * 1.0)


def test_length_mismatch():
    with pytest.raises(ValueError):
        gae([1.0], [0.0], [0.0], 0.9, 0.9)
    with pytest.raises(ValueError):
        gae([1.0], [0.0, 0.0], [0.0], 0.9, 0.9, durations=[1, 2])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=300),
       st.floats(1e-3, 1e3))
def test_standardize_moments(values, scale):
    a = np.array(values) * scale
    out = standardize(a)
    if np.ptp(a) <= 1e-9 * max(1.0, np.abs(a).max()):
        return
    assert abs(out.mean()) < 1e-6
    assert abs(out.std() - 1) < 1e-6


def test_standardize_constant_and_single():
    assert standardize(np.full(5, 3.0)).tolist() == [0.0] * 5
    assert standardize(np.array([4.0])).tolist() == [4.0]
