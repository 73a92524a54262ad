"""Config grammar, typing, architecture strings, validation, presets."""

import numpy as np
import pytest

from selftarget.config import (ConfigError, RunConfig, apply_flat, from_flat,
                               load_config, load_preset, parse_arch,
                               parse_config_text, preset_names, to_flat,
                               validate_config)
from selftarget.network import layer_shapes


def _cfg(text):
    return apply_flat(RunConfig(), parse_config_text(text))


# ---------------------------------------------------------------------------
# grammar
# ---------------------------------------------------------------------------


def test_grammar_basics():
    flat = parse_config_text(
        "run.seed = 7\n"
        "\n"
        "# a comment line\n"
        "train.lr = 0.5   # trailing comment\n"
        "model.arch = 784-2000\n")
    assert flat == {"run.seed": "7", "train.lr": "0.5",
                    "model.arch": "784-2000"}


def test_grammar_rejects_bare_lines():
    with pytest.raises(ConfigError, match=":2"):
        parse_config_text("run.seed = 1\nnot a key value line\n")


def test_unknown_section_and_key():
    with pytest.raises(ConfigError, match="unknown config section"):
        _cfg("nosuch.key = 1")
    with pytest.raises(ConfigError, match="unknown key"):
        _cfg("run.nosuch = 1")
    with pytest.raises(ConfigError, match="section.key"):
        apply_flat(RunConfig(), {"seed": "1"})


def test_typing():
    cfg = _cfg("run.seed = 9\n"
               "train.lr = 1e-3\n"
               "train.drop_last = true\n"
               "target.homeostasis = off\n"
               "model.arch = 784-100\n"
               "train.lr_per_layer = 1e-3, 2e-3, 3e-3\n"
               "data.synthetic_shape = 1x28x28\n")
    assert cfg.run.seed == 9 and isinstance(cfg.run.seed, int)
    assert cfg.train.lr == pytest.approx(1e-3)
    assert cfg.train.drop_last is True
    assert cfg.target.homeostasis is False
    assert cfg.train.lr_per_layer == (1e-3, 2e-3, 3e-3)
    assert cfg.data.synthetic_shape == (1, 28, 28)


def test_typing_errors_name_the_key():
    with pytest.raises(ConfigError, match="run.seed"):
        _cfg("run.seed = soon")
    with pytest.raises(ConfigError, match="train.lr"):
        _cfg("train.lr = fast")
    with pytest.raises(ConfigError, match="train.drop_last"):
        _cfg("train.drop_last = maybe")


def test_duplicate_keys_last_wins():
    cfg = _cfg("run.seed = 1\nrun.seed = 2\n")
    assert cfg.run.seed == 2


def test_flat_roundtrip():
    cfg = _cfg("model.arch = 784-500\ntrain.lr_per_layer = 0.1,0.2\n"
               "run.seed = 3\n")
    back = from_flat(to_flat(cfg))
    assert back == cfg
    assert back.train.lr_per_layer == (0.1, 0.2)
    with pytest.raises(ConfigError):
        from_flat({"bogus.key": 1})


def test_load_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("run.seed = 4\nmodel.arch = 16-8\n")
    cfg = load_config(p)
    assert cfg.run.seed == 4
    assert cfg.model.arch == "16-8"


# ---------------------------------------------------------------------------
# architecture strings
# ---------------------------------------------------------------------------


def test_parse_arch_dense():
    cfg = _cfg("model.arch = 784-2000-10\n"
               "model.hidden_activation = hardsigmoid\n"
               "model.output_activation = sigmoid\n"
               "model.hidden_dropout = 0.2\n"
               "model.output_dropout = 0.3\n")
    shape, specs = parse_arch(cfg.model)
    assert shape == (784,)
    assert [s.units for s in specs] == [2000, 10]
    assert specs[0].activation == "hardsigmoid"
    assert specs[0].dropout == pytest.approx(0.2)
    assert specs[1].activation == "sigmoid"
    assert specs[1].dropout == pytest.approx(0.3)


def test_parse_arch_cnn_mnist_shapes():
    cfg = _cfg("model.arch = 1x28x28-conv32f5p2s1-poolavg4p1s2-"
               "conv128f3p1s1-poolmax4p1s2-flatten-3000\n"
               "model.hidden_activation = relu\n"
               "model.output_activation = hardsigmoid\n"
               "model.hidden_dropout = 0.2\n")
    shape, specs = parse_arch(cfg.model)
    shapes = layer_shapes(shape, specs)
    assert shapes == [(1, 28, 28), (32, 28, 28), (32, 14, 14),
                      (128, 14, 14), (128, 7, 7), (6272,), (3000,)]
    assert specs[1].pool == "avg"
    assert specs[3].pool == "max"
    assert specs[4].kind == "flatten"
    assert specs[4].dropout == pytest.approx(0.2)    # hidden dropout on flatten
    assert specs[0].dropout == 0.0                   # none on conv outputs


def test_parse_arch_cnn_svhn_flatten_width():
    cfg = _cfg("model.arch = 3x32x32-conv32f5p2s1-poolavg4p1s2-"
               "conv128f3p1s1-poolmax4p1s2-flatten-3000\n")
    shape, specs = parse_arch(cfg.model)
    assert layer_shapes(shape, specs)[-2] == (8192,)


def test_parse_arch_errors():
    for arch, frag in [
        ("784", "at least one layer"),
        ("axb-100", "bad input shape"),
        ("784-wat", "unknown token"),
        ("784-conv3f", "missing"),
        ("1x28x28-conv32f5p2s1", "final layer must be dense"),
        ("784-100-flatten", "final layer must be dense"),
        ("784-conv32f5p2s1x-100", "trailing"),
    ]:
        cfg = _cfg(f"model.arch = {arch}")
        with pytest.raises(ConfigError, match=frag):
            parse_arch(cfg.model)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _valid_base():
    return _cfg("model.arch = 64-32\n"
                "data.format = synthetic\n"
                "data.classes = 4\n"
                "target.k = 3\n")


def test_validate_accepts_base():
    assert validate_config(_valid_base()) == []


def _expect_error(extra, frag):
    cfg = _valid_base()
    apply_flat(cfg, parse_config_text(extra))
    errs = validate_config(cfg)
    assert any(frag in e for e in errs), (frag, errs)


def test_validate_cross_field_rules():
    _expect_error("train.trainer = ep\nmodel.hidden_activation = relu\n"
                  "model.output_activation = relu", "hardsigmoid")
    _expect_error("train.lr = 0", "train.lr")
    _expect_error("target.k = 999", "target.k")
    _expect_error("model.input_dropout = 1.0", "input_dropout")
    _expect_error("run.kind = mixed", "run.kind")
    _expect_error("train.lr_per_layer = 0.1,0.2", "lr_per_layer")
    _expect_error("homeo.mode = sequential\ntrain.batch_size = 8",
                  "batch_size = 1")
    _expect_error("eval.label_fraction = 0", "label_fraction")
    _expect_error("eval.protocol = argmax", "argmax")
    _expect_error("target.kind = one_hot", "one_hot")


def test_validate_ep_forbids_conv():
    cfg = _cfg("model.arch = 1x8x8-conv4f3p1s1-flatten-10\n"
               "train.trainer = ep\n"
               "data.format = synthetic\n"
               "target.k = 1\n")
    errs = validate_config(cfg)
    assert any("ep forbids" in e for e in errs)


def test_validate_semisupervised_rules():
    cfg = _cfg("run.kind = semisupervised\n"
               "model.arch = 64-32-4\n"
               "data.format = synthetic\n"
               "data.classes = 4\n"
               "target.k = 1\n"
               "train.labels = 40\n")
    assert validate_config(cfg) == []
    bad = _cfg("run.kind = semisupervised\n"
               "model.arch = 64-32-5\n"
               "data.classes = 4\n"
               "target.k = 2\n"
               "train.labels = 41\n")
    errs = validate_config(bad)
    assert any("k = 1" in e for e in errs)
    assert any("must equal" in e for e in errs)
    assert any("divisible" in e for e in errs)


def test_validate_collects_multiple_errors():
    cfg = _cfg("model.arch = 784\ntrain.lr = 0\n")
    errs = validate_config(cfg)
    assert len(errs) >= 2


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def test_preset_listing_and_unknown():
    names = preset_names()
    assert "synthetic_smoke" in names
    assert "mnist_bp_1layer" in names
    assert "cnn_mnist" in names
    with pytest.raises(ConfigError, match="unknown preset"):
        load_preset("nope")


@pytest.mark.parametrize("name", sorted([
    n for n in __import__("selftarget.config", fromlist=["preset_names"])
    .preset_names()]))
def test_every_shipped_preset_validates(name):
    cfg = load_preset(name)
    assert validate_config(cfg) == []


def test_preset_details_frozen():
    smoke = load_preset("synthetic_smoke")
    assert smoke.data.format == "synthetic"
    assert smoke.run.epochs == 3
    ep2 = load_preset("mnist_ep_2layer")
    assert ep2.train.trainer == "ep"
    assert ep2.ep.t_free == 60
    assert ep2.ep.k_nudge == 20
    assert ep2.target.smoothing == pytest.approx(0.3)
    assert ep2.model.arch == "784-2000-2000"
    cnn = load_preset("cnn_mnist")
    assert cnn.train.optimizer == "adam"
    assert cnn.model.prune_fraction == pytest.approx(0.3)
    assert len(cnn.train.lr_per_layer) == 3
    semi = load_preset("semi_bp_600")
    assert semi.run.kind == "semisupervised"
    assert semi.train.labels == 600
    assert semi.model.arch == "784-5000-10"
