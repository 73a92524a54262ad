"""Initialization, forward pass, dropout, pruning, checkpoints."""

import numpy as np
import pytest

from selftarget.network import (CheckpointError, LayerSpec, Network, forward,
                                init_network, layer_shapes, load_checkpoint,
                                outputs, save_checkpoint, shape_after)
from selftarget.ops import ShapeError
from selftarget.optim import Adam, Sgd
from selftarget.rng import DROPOUT, RngStream

MLP = [LayerSpec("dense", units=2000, activation="hardsigmoid")]
STACK = [
    LayerSpec("conv", units=4, kernel=3, padding=1, stride=1,
              activation="relu"),
    LayerSpec("pool", kernel=2, padding=0, stride=2, pool="max"),
    LayerSpec("flatten"),
    LayerSpec("dense", units=5, activation="hardsigmoid"),
]


# ---------------------------------------------------------------------------
# specs and shapes
# ---------------------------------------------------------------------------


def test_layer_spec_validation():
    with pytest.raises(ValueError):
        LayerSpec("lstm")
    with pytest.raises(ValueError):
        LayerSpec("dense", units=0)
    with pytest.raises(ValueError):
        LayerSpec("conv", units=3, kernel=0)
    with pytest.raises(ValueError):
        LayerSpec("dense", units=3, dropout=1.0)
    with pytest.raises(ValueError):
        LayerSpec("dense", units=3, activation="gelu")


def test_shape_flow_through_stack():
    shapes = layer_shapes((1, 8, 8), STACK)
    assert shapes == [(1, 8, 8), (4, 8, 8), (4, 4, 4), (64,), (5,)]


def test_dense_needs_flat_input():
    with pytest.raises(ShapeError, match="flatten"):
        shape_after(LayerSpec("dense", units=3), (1, 8, 8))


def test_conv_needs_spatial_input():
    with pytest.raises(ShapeError):
        shape_after(LayerSpec("conv", units=3, kernel=3), (64,))


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def test_init_bound_frozen_dense():
    net = init_network((784,), MLP, seed=1)
    bound = np.sqrt(6.0 / (784 + 2000))
    assert bound == pytest.approx(0.046424, abs=1e-6)
    w = net.weights[0]
    assert float(np.abs(w).max()) <= bound
    assert float(np.abs(w).max()) > 0.99 * bound    # samples reach the edge
    assert abs(float(w.mean())) < 1e-3
    np.testing.assert_array_equal(net.biases[0], np.zeros(2000))


def test_init_bound_conv_uses_receptive_field_fan():
    net = init_network((3, 8, 8),
                       [LayerSpec("conv", units=16, kernel=5, padding=2),
                        LayerSpec("flatten"),
                        LayerSpec("dense", units=4)], seed=1)
    bound = np.sqrt(6.0 / (3 * 25 + 16 * 25))
    assert float(np.abs(net.weights[0]).max()) <= bound
    assert float(np.abs(net.weights[0]).max()) > 0.98 * bound


def test_init_deterministic_in_seed():
    a = init_network((20,), [LayerSpec("dense", units=7)], seed=5)
    b = init_network((20,), [LayerSpec("dense", units=7)], seed=5)
    c = init_network((20,), [LayerSpec("dense", units=7)], seed=6)
    np.testing.assert_array_equal(a.weights[0], b.weights[0])
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_init_rejects_empty_stack():
    with pytest.raises(ValueError):
        init_network((20,), [], seed=1)


def test_init_dtype():
    net = init_network((4,), [LayerSpec("dense", units=2)], seed=1,
                       dtype=np.float64)
    assert net.weights[0].dtype == np.float64
    assert net.dtype == np.float64


# ---------------------------------------------------------------------------
# pruning
# ---------------------------------------------------------------------------


def test_prune_exact_count():
    net = init_network((100,), [LayerSpec("dense", units=50)], seed=3,
                       prune_fraction=0.3)
    assert net.masks[0] is not None
    assert int((net.masks[0] == 0).sum()) == round(0.3 * 100 * 50)
    assert int((net.weights[0] == 0).sum()) >= round(0.3 * 100 * 50)


def test_pruned_weights_stay_zero_through_optimizer_steps(rng):
    for opt in (Sgd(), Adam()):
        net = init_network((10,), [LayerSpec("dense", units=8)], seed=3,
                           prune_fraction=0.25)
        zero_at = net.masks[0] == 0
        for _ in range(5):
            g = rng.standard_normal((10, 8)).astype(np.float32)
            gb = rng.standard_normal(8).astype(np.float32)
            opt.step([(net.weights[0], net.biases[0])], [(g, gb)], [0.1],
                     masks=[net.masks[0]])
        assert (net.weights[0][zero_at] == 0).all()


def test_prune_zero_fraction_has_no_mask():
    net = init_network((10,), [LayerSpec("dense", units=8)], seed=3)
    assert net.masks[0] is None


# ---------------------------------------------------------------------------
# forward pass and dropout
# ---------------------------------------------------------------------------


def test_forward_eval_deterministic(rng):
    net = init_network((1, 8, 8), STACK, seed=2, input_dropout=0.3)
    x = rng.random((4, 1, 8, 8)).astype(np.float32)
    a = forward(net, x).output
    b = forward(net, x).output
    np.testing.assert_array_equal(a, b)
    assert a.shape == (4, 5)


def test_forward_train_requires_rng():
    net = init_network((4,), [LayerSpec("dense", units=2)], seed=1)
    with pytest.raises(ValueError):
        forward(net, np.zeros((1, 4), dtype=np.float32), train=True)


def test_dropout_monte_carlo_rate():
    p = 0.2
    net = init_network(
        (100000,),
        [LayerSpec("dense", units=1, dropout=0.0)], seed=1, input_dropout=p)
    x = np.ones((1, 100000), dtype=np.float32)
    cache = forward(net, x, train=True, rng=RngStream(9, DROPOUT))
    mask = cache.input_mask
    dropped = float((mask == 0).mean())
    assert dropped == pytest.approx(p, abs=0.01)
    kept = mask[mask > 0]
    np.testing.assert_allclose(kept, np.full(kept.shape, 1 / (1 - p)),
                               rtol=1e-6)
    assert float(mask.mean()) == pytest.approx(1.0, abs=0.02)


def test_dropout_only_in_train_mode():
    net = init_network((50,), [LayerSpec("dense", units=20, dropout=0.5)],
                       seed=1)
    x = np.ones((2, 50), dtype=np.float32)
    ev = forward(net, x)
    assert ev.masks[0] is None
    tr = forward(net, x, train=True, rng=RngStream(1, DROPOUT))
    assert tr.masks[0] is not None
    assert (tr.output[tr.masks[0] == 0] == 0).all()


def test_dropout_masks_differ_across_draws():
    net = init_network((100,), [LayerSpec("dense", units=2)], seed=1,
                       input_dropout=0.5)
    x = np.ones((1, 100), dtype=np.float32)
    s = RngStream(1, DROPOUT)
    a = forward(net, x, train=True, rng=s).input_mask
    b = forward(net, x, train=True, rng=s).input_mask
    assert not np.array_equal(a, b)
    # but replaying the stream reproduces both
    s2 = RngStream(1, DROPOUT)
    np.testing.assert_array_equal(forward(net, x, train=True, rng=s2).input_mask, a)
    np.testing.assert_array_equal(forward(net, x, train=True, rng=s2).input_mask, b)


def test_outputs_batching_matches_single_pass(rng):
    net = init_network((1, 8, 8), STACK, seed=2)
    x = rng.random((10, 1, 8, 8)).astype(np.float32)
    # one chunk: identical; many chunks: equal up to f32 summation order
    np.testing.assert_array_equal(outputs(net, x, batch=64),
                                  forward(net, x).output)
    np.testing.assert_allclose(outputs(net, x, batch=3),
                               forward(net, x).output, rtol=1e-5, atol=1e-6)
    empty = outputs(net, x[:0], batch=3)
    assert empty.shape == (0, 5)
    assert empty.dtype == net.dtype


def test_forward_checks_matmul_shapes():
    net = init_network((4,), [LayerSpec("dense", units=2)], seed=1)
    with pytest.raises(ShapeError, match=r"\(1, 5\)"):
        forward(net, np.zeros((1, 5), dtype=np.float32))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def _make_net():
    net = init_network((1, 8, 8), STACK, seed=7, input_dropout=0.25,
                       prune_fraction=0.2)
    return net


def test_checkpoint_roundtrip_bit_identical(tmp_path):
    net = _make_net()
    path = tmp_path / "net.stck"
    save_checkpoint(path, net, rng_states={"dropout_draws": 42},
                    meta={"note": "hello"},
                    extra_arrays={"thresholds": np.arange(5.0)})
    loaded, rng_states, meta, extra = load_checkpoint(path)
    assert rng_states == {"dropout_draws": 42}
    assert meta == {"note": "hello"}
    np.testing.assert_array_equal(extra["thresholds"], np.arange(5.0))
    assert loaded.input_shape == net.input_shape
    assert loaded.input_dropout == net.input_dropout
    assert loaded.dtype == net.dtype
    assert [s.kind for s in loaded.specs] == [s.kind for s in net.specs]
    for i in net.param_layers():
        np.testing.assert_array_equal(loaded.weights[i], net.weights[i])
        np.testing.assert_array_equal(loaded.biases[i], net.biases[i])
        np.testing.assert_array_equal(loaded.masks[i], net.masks[i])
    # and the file itself is byte-stable
    save_checkpoint(tmp_path / "net2.stck", net,
                    rng_states={"dropout_draws": 42}, meta={"note": "hello"},
                    extra_arrays={"thresholds": np.arange(5.0)})
    assert (tmp_path / "net.stck").read_bytes() == \
        (tmp_path / "net2.stck").read_bytes()


def test_checkpoint_detects_corruption(tmp_path):
    net = _make_net()
    path = tmp_path / "net.stck"
    save_checkpoint(path, net)
    raw = bytearray(path.read_bytes())

    flipped = bytearray(raw)
    flipped[len(raw) // 2] ^= 0xFF
    (tmp_path / "bad.stck").write_bytes(flipped)
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(tmp_path / "bad.stck")

    (tmp_path / "trunc.stck").write_bytes(raw[:len(raw) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "trunc.stck")

    (tmp_path / "magic.stck").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "magic.stck")

    versioned = bytearray(raw)
    versioned[4] = 99
    (tmp_path / "ver.stck").write_bytes(versioned)
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(tmp_path / "ver.stck")


def test_checkpoint_forward_identical_after_reload(tmp_path, rng):
    net = _make_net()
    x = rng.random((3, 1, 8, 8)).astype(np.float32)
    save_checkpoint(tmp_path / "net.stck", net)
    loaded, _, _, _ = load_checkpoint(tmp_path / "net.stck")
    np.testing.assert_array_equal(forward(net, x).output,
                                  forward(loaded, x).output)
