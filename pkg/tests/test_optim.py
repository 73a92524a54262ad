"""Optimizer algebra and learning-rate schedules."""

import numpy as np
import pytest

from selftarget.optim import Adam, Sgd, lr_ratio, make_optimizer


def _params(rng, shape=(4, 3)):
    w = rng.standard_normal(shape).astype(np.float32)
    b = rng.standard_normal(shape[1]).astype(np.float32)
    return w, b


def test_sgd_is_plain_descent(rng):
    w, b = _params(rng)
    dw = rng.standard_normal(w.shape).astype(np.float32)
    db = rng.standard_normal(b.shape).astype(np.float32)
    w0, b0 = w.copy(), b.copy()
    Sgd().step([(w, b)], [(dw, db)], [0.25])
    np.testing.assert_allclose(w, w0 - 0.25 * dw, rtol=1e-6)
    np.testing.assert_allclose(b, b0 - 0.25 * db, rtol=1e-6)


def test_sgd_per_layer_rates(rng):
    w1, b1 = _params(rng)
    w2, b2 = _params(rng, (2, 5))
    dw1 = np.ones_like(w1)
    dw2 = np.ones_like(w2)
    w1_0, w2_0 = w1.copy(), w2.copy()
    Sgd().step([(w1, b1), (w2, b2)],
               [(dw1, np.zeros_like(b1)), (dw2, np.zeros_like(b2))],
               [0.1, 0.01])
    np.testing.assert_allclose(w1, w1_0 - 0.1, rtol=1e-6)
    np.testing.assert_allclose(w2, w2_0 - 0.01, rtol=1e-6)


def test_adam_first_step_is_signed_lr(rng):
    """With zero state, one Adam step moves every weight by about
    lr * sign(gradient) regardless of gradient magnitude."""
    w, b = _params(rng)
    dw = (rng.standard_normal(w.shape).astype(np.float32) * 100)
    db = rng.standard_normal(b.shape).astype(np.float32)
    w0 = w.copy()
    Adam().step([(w, b)], [(dw, db)], [1e-3])
    step = w - w0
    np.testing.assert_allclose(step, -1e-3 * np.sign(dw), rtol=1e-3)


def test_adam_matches_reference_updates(rng):
    """Cross-check several steps against a direct transcription of the
    bias-corrected moment recursion in float64."""
    w = rng.standard_normal((3, 2)).astype(np.float64)
    b = rng.standard_normal(2).astype(np.float64)
    ref_w, ref_b = w.copy(), b.copy()
    m = {"w": np.zeros_like(w), "b": np.zeros_like(b)}
    v = {"w": np.zeros_like(w), "b": np.zeros_like(b)}
    opt = Adam()
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    for t in range(1, 6):
        dw = rng.standard_normal(w.shape)
        db = rng.standard_normal(b.shape)
        opt.step([(w, b)], [(dw, db)], [lr])
        for name, p, g in (("w", ref_w, dw), ("b", ref_b, db)):
            m[name] = b1 * m[name] + (1 - b1) * g
            v[name] = b2 * v[name] + (1 - b2) * g * g
            mhat = m[name] / (1 - b1 ** t)
            vhat = v[name] / (1 - b2 ** t)
            p -= lr * mhat / (np.sqrt(vhat) + eps)
        np.testing.assert_allclose(w, ref_w, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(b, ref_b, rtol=1e-9, atol=1e-12)


def test_adam_state_survives_across_layers(rng):
    """Moments are tracked per parameter, not shared."""
    w1, b1 = _params(rng)
    w2, b2 = _params(rng)
    opt = Adam()
    big = np.full(w1.shape, 100.0, dtype=np.float32)
    tiny = np.full(w2.shape, 1e-4, dtype=np.float32)
    zb = np.zeros_like(b1)
    w1_0, w2_0 = w1.copy(), w2.copy()
    for _ in range(3):
        opt.step([(w1, b1), (w2, b2)], [(big, zb), (tiny, zb)], [0.01, 0.01])
    # both saw constant gradients, so both should have moved ~3 * lr
    np.testing.assert_allclose(w1 - w1_0, np.full_like(w1, -0.03), rtol=0.05)
    np.testing.assert_allclose(w2 - w2_0, np.full_like(w2, -0.03), rtol=0.05)


@pytest.mark.parametrize("opt_factory", [Sgd, Adam])
def test_masks_reapplied_every_step(rng, opt_factory):
    w, b = _params(rng, (6, 4))
    mask = (rng.random(w.shape) > 0.5).astype(np.float32)
    w *= mask
    opt = opt_factory()
    for _ in range(4):
        dw = rng.standard_normal(w.shape).astype(np.float32)
        db = rng.standard_normal(b.shape).astype(np.float32)
        opt.step([(w, b)], [(dw, db)], [0.1], masks=[mask])
        assert (w[mask == 0] == 0).all()
        assert (w[mask == 1] != 0).any()


def test_make_optimizer():
    assert isinstance(make_optimizer("sgd"), Sgd)
    assert isinstance(make_optimizer("adam"), Adam)
    with pytest.raises(ValueError):
        make_optimizer("rmsprop")


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------


def test_constant_schedule():
    assert lr_ratio("constant", 0, 10) == 1.0
    assert lr_ratio("constant", 9, 10) == 1.0


def test_exponential_schedule():
    assert lr_ratio("exponential", 0, 10, decay=0.9) == 1.0
    assert lr_ratio("exponential", 3, 10, decay=0.9) == pytest.approx(0.9 ** 3)
    assert lr_ratio("exponential", 50, 100, decay=0.97) == pytest.approx(0.97 ** 50)


def test_linear_schedule_endpoints_inclusive():
    total = 100
    assert lr_ratio("linear", 0, total, start=1.0, end=5e-4) == 1.0
    assert lr_ratio("linear", total - 1, total, start=1.0, end=5e-4) == \
        pytest.approx(5e-4)
    mid = lr_ratio("linear", 49, 100, start=1.0, end=0.0)
    assert mid == pytest.approx(1.0 - 49 / 99)


def test_linear_schedule_degenerate_total():
    assert lr_ratio("linear", 0, 1, start=0.7, end=0.05) == 0.7
    assert lr_ratio("linear", 0, 0, start=0.7, end=0.05) == 0.7


def test_unknown_schedule():
    with pytest.raises(ValueError):
        lr_ratio("cosine", 0, 10)
