"""k-winner targets, smoothing, homeostatic thresholds."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from selftarget.target import (Homeostasis, kwta, kwta_target, one_hot,
                               smooth_target, win_freq_cv, win_frequencies)

# ---------------------------------------------------------------------------
# k-winner selection
# ---------------------------------------------------------------------------


def test_kwta_frozen_example():
    y = np.array([[0.2, 0.9, 0.1, 0.7, 0.5]])
    np.testing.assert_array_equal(kwta(y, 2), [[0, 1, 0, 1, 0]])
    np.testing.assert_array_equal(kwta(y, 1), [[0, 1, 0, 0, 0]])
    np.testing.assert_array_equal(kwta(y, 5), [[1, 1, 1, 1, 1]])


def test_kwta_tie_goes_to_lowest_index():
    y = np.array([[0.9, 0.9, 0.9]])
    np.testing.assert_array_equal(kwta(y, 1), [[1, 0, 0]])
    np.testing.assert_array_equal(kwta(y, 2), [[1, 1, 0]])
    y = np.array([[0.3, 0.9, 0.9]])
    np.testing.assert_array_equal(kwta(y, 1), [[0, 1, 0]])


def test_kwta_rows_are_independent():
    y = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(kwta(y, 1), [[1, 0], [0, 1]])


def test_kwta_validates():
    with pytest.raises(ValueError):
        kwta(np.zeros((2, 3)), 0)
    with pytest.raises(ValueError):
        kwta(np.zeros((2, 3)), 4)
    with pytest.raises(ValueError):
        kwta(np.zeros(3), 1)


finite_rows = hnp.arrays(
    np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1,
                                 max_side=8),
    elements=st.floats(-1e6, 1e6, allow_nan=False))


@given(finite_rows, st.data())
@settings(max_examples=200, deadline=None)
def test_kwta_row_sums_exactly_k(y, data):
    k = data.draw(st.integers(1, y.shape[1]))
    d = kwta(y, k)
    np.testing.assert_array_equal(d.sum(axis=1), np.full(y.shape[0], k))
    assert set(np.unique(d)) <= {0.0, 1.0}


@given(finite_rows, st.data())
@settings(max_examples=100, deadline=None)
def test_kwta_winners_dominate_losers(y, data):
    k = data.draw(st.integers(1, y.shape[1]))
    d = kwta(y, k)
    for row, drow in zip(y, d):
        if 0 < k < len(row):
            assert row[drow == 1].min() >= row[drow == 0].max()


# Values and shifts on a dyadic grid: y + c is then exact in float64, so
# invariance must hold exactly (arbitrary floats can merge near-ties).
dyadic_rows = hnp.arrays(
    np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1,
                                 max_side=8),
    elements=st.integers(-(2 ** 20), 2 ** 20).map(lambda n: n / 256.0))


@given(dyadic_rows, st.data())
@settings(max_examples=100, deadline=None)
def test_kwta_shift_invariance(y, data):
    k = data.draw(st.integers(1, y.shape[1]))
    c = data.draw(st.integers(-256000, 256000)) / 256.0
    np.testing.assert_array_equal(kwta(y, k), kwta(y + c, k))


def test_kwta_target_subtracts_thresholds():
    y = np.array([[1.0, 0.8]], dtype=np.float32)
    h = np.array([0.5, 0.0])
    np.testing.assert_array_equal(kwta_target(y, h, 1), [[0, 1]])
    assert kwta_target(y, h, 1).dtype == np.float32


# ---------------------------------------------------------------------------
# one-hot and smoothing
# ---------------------------------------------------------------------------


def test_one_hot():
    out = one_hot(np.array([2, 0]), 3)
    np.testing.assert_array_equal(out, [[0, 0, 1], [1, 0, 0]])
    with pytest.raises(ValueError):
        one_hot(np.array([3]), 3)


def test_smoothing_frozen_values():
    d = np.array([[1.0, 0.0] + [0.0] * 8])
    s = smooth_target(d, 0.3, 1)
    assert s[0, 0] == pytest.approx(0.73)
    assert s[0, 1] == pytest.approx(0.03)
    d2 = np.array([[1.0, 0.0]])
    s2 = smooth_target(d2, 0.3, 1)
    assert s2[0, 0] == pytest.approx(0.85)
    assert s2[0, 1] == pytest.approx(0.15)


@given(st.integers(1, 6), st.integers(2, 12),
       st.floats(0.01, 0.99, allow_nan=False), st.integers(0, 2 ** 31 - 1))
@settings(max_examples=100, deadline=None)
def test_smoothing_preserves_row_sum_and_winners(k, n, alpha, seed):
    if k > n:
        k = n
    rng = np.random.default_rng(seed)
    d = kwta(rng.standard_normal((3, n)), k)
    s = smooth_target(d, alpha, k)
    np.testing.assert_allclose(s.sum(axis=1), np.full(3, float(k)), rtol=1e-9)
    np.testing.assert_array_equal(kwta(s, k), d)   # winner set unchanged


def test_smoothing_alpha_zero_is_identity():
    d = np.array([[1.0, 0.0]])
    assert smooth_target(d, 0.0, 1) is d


def test_smoothing_validates_alpha():
    with pytest.raises(ValueError):
        smooth_target(np.ones((1, 2)), 1.0, 1)


# ---------------------------------------------------------------------------
# homeostasis
# ---------------------------------------------------------------------------


def test_homeostasis_frozen_first_update():
    h = Homeostasis(n=10, k=1, gamma=0.5)
    d = one_hot(np.array([0]), 10)
    h.update(d)
    assert h.thresholds[0] == pytest.approx(0.45)      # 0.5 * (1 - 0.1)
    np.testing.assert_allclose(h.thresholds[1:], np.full(9, -0.05))


def test_homeostasis_batch_uses_batch_mean():
    h = Homeostasis(n=2, k=1, gamma=1.0)
    d = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    h.update(d)
    np.testing.assert_allclose(h.thresholds, [0.0, 0.0])   # both at rate 0.5


def test_homeostasis_sequential_ema_frozen():
    h = Homeostasis(n=4, k=1, gamma=1.0, mode="sequential", eta=1e-3)
    h.update(np.array([[1.0, 0.0, 0.0, 0.0]]))
    assert h.avg[0] == pytest.approx(0.001)
    assert h.thresholds[0] == pytest.approx(0.001 - 0.25)
    h.update(np.array([[1.0, 0.0, 0.0, 0.0]]))
    assert h.avg[0] == pytest.approx(1e-3 + (1 - 1e-3) * 1e-3)


def test_homeostasis_sequential_rejects_batches():
    h = Homeostasis(n=2, k=1, gamma=1.0, mode="sequential")
    with pytest.raises(ValueError):
        h.update(np.ones((2, 2)))


def test_homeostasis_drift_sign():
    # a unit winning every time drifts up; one never winning drifts down
    h = Homeostasis(n=3, k=1, gamma=0.2)
    for _ in range(5):
        h.update(np.array([[1.0, 0.0, 0.0]]))
    assert h.thresholds[0] > 0
    assert (h.thresholds[1:] < 0).all()


def test_homeostasis_thresholds_are_float64():
    h = Homeostasis(n=3, k=1, gamma=0.5)
    h.update(np.array([[1.0, 0.0, 0.0]], dtype=np.float32))
    assert h.thresholds.dtype == np.float64
    assert h.avg.dtype == np.float64


def test_homeostasis_reset():
    h = Homeostasis(n=3, k=1, gamma=0.5)
    h.update(np.array([[1.0, 0.0, 0.0]]))
    h.reset()
    np.testing.assert_array_equal(h.thresholds, np.zeros(3))
    np.testing.assert_array_equal(h.avg, np.zeros(3))


def test_homeostasis_validates():
    with pytest.raises(ValueError):
        Homeostasis(n=2, k=1, gamma=0.5, mode="weird")
    h = Homeostasis(n=2, k=1, gamma=0.5)
    with pytest.raises(ValueError):
        h.update(np.ones((1, 3)))


def test_homeostasis_equalizes_win_rates():
    # feedback loop: fixed unit propensities plus thresholds; without the
    # thresholds one unit always wins, with them wins spread toward uniform
    rng = np.random.default_rng(0)
    base = np.array([1.0, 0.4, 0.2, 0.0])
    h = Homeostasis(n=4, k=1, gamma=0.3)
    wins = np.zeros(4)
    for _ in range(400):
        y = base + 0.05 * rng.standard_normal((1, 4))
        d = kwta_target(y, h.thresholds, 1)
        wins += d[0]
        h.update(d)
    freqs = win_frequencies(wins, 400)
    assert win_freq_cv(freqs) < 0.5
    assert freqs.max() < 0.5          # no unit dominates


def test_win_freq_cv_frozen():
    assert win_freq_cv(np.array([0.25, 0.25, 0.25, 0.25])) == 0.0
    assert win_freq_cv(np.zeros(3)) == float("inf")
    # one unit winning always, three never: mean 0.25, std sqrt(3)/4
    cv = win_freq_cv(np.array([1.0, 0.0, 0.0, 0.0]))
    assert cv == pytest.approx(np.sqrt(3))
