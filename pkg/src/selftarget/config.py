"""Run configuration: the key-value file format, typing, validation, presets.

File grammar: one `section.key = value` per line, `#` starts a comment,
blank lines ignored. Every RunConfig field is addressable. Values are typed
per the schema below; lists are comma-separated; shapes use `x` (1x28x28).
"""

import dataclasses
from dataclasses import dataclass, field
from importlib import resources

from .network import LayerSpec, layer_shapes
from .ops import ShapeError


class ConfigError(ValueError):
    pass


@dataclass
class RunSection:
    kind: str = "unsupervised"        # unsupervised | semisupervised
    seed: int = 1
    epochs: int = 1                   # unsupervised epochs
    epochs_pretrain: int = 0          # supervised pre-training epochs
    epochs_alternate: int = 0         # unsupervised+supervised alternations
    precision: str = "f32"            # f32 | f64
    eval_every: int = 1               # 0 = evaluate at the end only
    checkpoint_every: int = 0         # 0 = final checkpoint only


@dataclass
class DataConfig:
    format: str = "idx"               # idx | wted | synthetic
    dir: str = ""                     # idx: directory with standard filenames
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    train: str = ""                   # wted container paths
    test: str = ""
    classes: int = 10                 # declared class count (checked at load)
    synthetic_train: int = 2048
    synthetic_test: int = 512
    synthetic_shape: tuple = (1, 8, 8)
    synthetic_noise: float = 0.15
    synthetic_seed: int = 0


@dataclass
class ModelConfig:
    arch: str = ""
    hidden_activation: str = "hardsigmoid"
    output_activation: str = "hardsigmoid"
    input_dropout: float = 0.0
    hidden_dropout: float = 0.0
    output_dropout: float = 0.0
    prune_fraction: float = 0.0


@dataclass
class TargetConfig:
    kind: str = "self_defined"        # self_defined | one_hot
    k: int = 1
    smoothing: float = 0.0
    homeostasis: bool = True


@dataclass
class HomeoConfig:
    gamma: float = 0.5
    mode: str = "batch"               # batch | sequential
    eta: float = 0.001
    reset_each_epoch: bool = True


@dataclass
class TrainConfig:
    trainer: str = "bp"               # bp | ep
    loss: str = "mse"                 # mse | cross_entropy
    optimizer: str = "sgd"            # sgd | adam
    lr: float = 0.01
    lr_per_layer: tuple = ()          # overrides lr when nonempty
    batch_size: int = 16
    drop_last: bool = False
    scheduler: str = "constant"       # constant | exponential | linear
    sched_decay: float = 0.9
    sched_start: float = 1.0
    sched_end: float = 1.0
    # semi-supervised schedule
    batch_size_supervised: int = 32
    batch_size_unsupervised: int = 256
    lr_pretrain: float = 0.0017
    lr_semi: float = 0.00045
    pretrain_decay: float = 0.97
    sup_start: float = 0.7
    sup_end: float = 0.05
    unsup_start: float = 0.001
    unsup_end: float = 0.18
    labels: int = 600


@dataclass
class EpConfig:
    t_free: int = 40
    k_nudge: int = 10
    beta: float = 0.2
    symmetric: bool = False


@dataclass
class EvalConfig:
    protocol: str = "direct"          # direct | readout | argmax
    label_fraction: float = 0.02
    readout_epochs: int = 0           # 0 = 50 for bp / 100 for ep
    readout_lr: float = 0.0           # 0 = published table by label fraction
    readout_batch: int = 256


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    target: TargetConfig = field(default_factory=TargetConfig)
    homeo: HomeoConfig = field(default_factory=HomeoConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ep: EpConfig = field(default_factory=EpConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


_SECTIONS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _convert(raw, kind, key):
    raw = raw.strip()
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind is tuple:
            if not raw:
                return ()
            parts = raw.split("x") if "x" in raw and "," not in raw else raw.split(",")

            def num(p):
                p = p.strip()
                try:
                    return int(p)
                except ValueError:
                    return float(p)
            return tuple(num(p) for p in parts)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_config_text(text, source="<config>"):
    """Flat dict of raw string values from the key-value grammar."""
    flat = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, _, value = line.partition("=")
        flat[key.strip()] = value.strip()
    return flat


def apply_flat(cfg, flat):
    """Set typed fields from a flat {section.key: raw-string} dict."""
    for key, raw in flat.items():
        if "." not in key:
            raise ConfigError(f"unknown key {key!r} (expected section.key)")
        section, _, name = key.partition(".")
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section {section!r} in {key!r}")
        sub = getattr(cfg, section)
        fields = {f.name: f for f in dataclasses.fields(sub)}
        if name not in fields:
            raise ConfigError(f"unknown key {key!r}")
        current = getattr(sub, name)
        kind = type(current) if current is not None else str
        if isinstance(current, tuple):
            kind = tuple
        setattr(sub, name, _convert(raw, kind, key))
    return cfg


def to_flat(cfg):
    """Flat JSON-friendly echo of every field (for artifacts and metadata)."""
    flat = {}
    for section in _SECTIONS:
        sub = getattr(cfg, section)
        for f in dataclasses.fields(sub):
            v = getattr(sub, f.name)
            flat[f"{section}.{f.name}"] = list(v) if isinstance(v, tuple) else v
    return flat


def from_flat(flat):
    """RunConfig from a typed flat dict, as stored in run artifacts."""
    cfg = RunConfig()
    for key, value in flat.items():
        section, _, name = key.partition(".")
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section {section!r} in {key!r}")
        sub = getattr(cfg, section)
        if name not in {f.name for f in dataclasses.fields(sub)}:
            raise ConfigError(f"unknown key {key!r}")
        setattr(sub, name, tuple(value) if isinstance(value, list) else value)
    return cfg


def load_config(path):
    with open(path) as f:
        text = f.read()
    return apply_flat(RunConfig(), parse_config_text(text, source=str(path)))


def preset_names():
    root = resources.files("selftarget") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name):
    root = resources.files("selftarget") / "presets"
    entry = root / f"{name}.cfg"
    if not entry.is_file():
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return apply_flat(RunConfig(), parse_config_text(entry.read_text(),
                                                     source=f"preset {name}"))


# ---------------------------------------------------------------------------
# Architecture strings: tokens joined by "-". First token is the input shape
# ("784" or "1x28x28"); then "2000" (dense), "conv32f5p2s1", "poolavg4p1s2",
# "poolmax4p1s2", "flatten". Activations and dropout come from ModelConfig:
# hidden activation on every non-final dense/conv layer, output activation on
# the final layer; hidden dropout on non-final dense and flatten outputs,
# output dropout on the final layer's output.
# ---------------------------------------------------------------------------

def _parse_int_fields(token, head, names, key):
    body = token[len(head):]
    out = []
    for i, (sep, name) in enumerate(names):
        nxt = names[i + 1][0] if i + 1 < len(names) else None
        if sep and not body.startswith(sep):
            raise ConfigError(f"{key}: expected '{sep}' in token {token!r}")
        body = body[len(sep):]
        digits = ""
        while body and body[0].isdigit():
            digits += body[0]
            body = body[1:]
        if not digits:
            raise ConfigError(f"{key}: missing {name} in token {token!r}")
        out.append(int(digits))
    if body:
        raise ConfigError(f"{key}: trailing {body!r} in token {token!r}")
    return out


def parse_arch(model):
    """(input_shape, [LayerSpec]) from a ModelConfig."""
    key = "model.arch"
    tokens = [t for t in model.arch.split("-") if t]
    if len(tokens) < 2:
        raise ConfigError(f"{key}: need an input shape and at least one layer")
    try:
        input_shape = tuple(int(p) for p in tokens[0].split("x"))
    except ValueError:
        raise ConfigError(f"{key}: bad input shape {tokens[0]!r}") from None
    if len(input_shape) not in (1, 3) or min(input_shape) < 1:
        raise ConfigError(f"{key}: input shape must be N or CxHxW, got {tokens[0]!r}")

    specs = []
    last = len(tokens) - 1
    for pos, tok in enumerate(tokens[1:], 1):
        final = pos == last
        if tok == "flatten":
            specs.append(LayerSpec("flatten", dropout=model.hidden_dropout))
        elif tok.startswith("conv"):
            units, kernel, pad, stride = _parse_int_fields(
                tok, "conv", [("", "channels"), ("f", "kernel"),
                              ("p", "padding"), ("s", "stride")], key)
            specs.append(LayerSpec("conv", units=units, kernel=kernel,
                                   padding=pad, stride=stride,
                                   activation=model.hidden_activation))
        elif tok.startswith("poolmax") or tok.startswith("poolavg"):
            mode = tok[4:7]
            size, pad, stride = _parse_int_fields(
                tok, tok[:7], [("", "size"), ("p", "padding"), ("s", "stride")], key)
            specs.append(LayerSpec("pool", kernel=size, padding=pad,
                                   stride=stride, pool=mode))
        elif tok.isdigit():
            units = int(tok)
            specs.append(LayerSpec(
                "dense", units=units,
                activation=model.output_activation if final else model.hidden_activation,
                dropout=model.output_dropout if final else model.hidden_dropout))
        else:
            raise ConfigError(f"{key}: unknown token {tok!r}")
        if final and specs[-1].kind != "dense":
            raise ConfigError(f"{key}: the final layer must be dense, got {tok!r}")
    return input_shape, specs


def validate_config(cfg):
    """Cross-field consistency; returns a list of error strings (empty = ok)."""
    errors = []

    def need(cond, msg):
        if not cond:
            errors.append(msg)

    r, m, t, h, tr, e, ev, d = (cfg.run, cfg.model, cfg.target, cfg.homeo,
                                cfg.train, cfg.ep, cfg.eval, cfg.data)
    need(r.kind in ("unsupervised", "semisupervised"),
         f"run.kind: unknown kind {r.kind!r}")
    need(r.precision in ("f32", "f64"), f"run.precision: {r.precision!r}")
    need(r.epochs >= 0, "run.epochs: must be >= 0")
    need(r.epochs_pretrain >= 0, "run.epochs_pretrain: must be >= 0")
    need(r.epochs_alternate >= 0, "run.epochs_alternate: must be >= 0")
    need(d.format in ("idx", "wted", "synthetic"), f"data.format: {d.format!r}")
    need(d.classes >= 1, "data.classes: must be >= 1")

    specs = None
    n_output = None
    try:
        input_shape, specs = parse_arch(m)
        shapes = layer_shapes(input_shape, specs)
        n_output = shapes[-1][0]
    except (ConfigError, ShapeError, ValueError) as exc:
        errors.append(str(exc))

    for name, p in (("model.input_dropout", m.input_dropout),
                    ("model.hidden_dropout", m.hidden_dropout),
                    ("model.output_dropout", m.output_dropout)):
        need(0 <= p < 1, f"{name}: must be in [0, 1), got {p}")
    need(0 <= m.prune_fraction < 1,
         f"model.prune_fraction: must be in [0, 1), got {m.prune_fraction}")

    need(t.kind in ("self_defined", "one_hot"), f"target.kind: {t.kind!r}")
    need(0 <= t.smoothing < 1, f"target.smoothing: must be in [0, 1), got {t.smoothing}")
    if n_output is not None:
        if t.kind == "self_defined":
            need(1 <= t.k <= n_output,
                 f"target.k: {t.k} outside [1, {n_output}] for this architecture")
        if t.kind == "one_hot":
            need(n_output == d.classes,
                 f"target.kind: one_hot needs model output {n_output} == data.classes {d.classes}")

    need(h.gamma >= 0, "homeo.gamma: must be >= 0")
    need(h.mode in ("batch", "sequential"), f"homeo.mode: {h.mode!r}")
    need(0 < h.eta <= 1, f"homeo.eta: must be in (0, 1], got {h.eta}")
    if h.mode == "sequential" and r.kind == "unsupervised":
        need(tr.batch_size == 1,
             "homeo.mode: sequential averaging needs train.batch_size = 1")

    need(tr.trainer in ("bp", "ep"), f"train.trainer: {tr.trainer!r}")
    need(tr.loss in ("mse", "cross_entropy"), f"train.loss: {tr.loss!r}")
    need(tr.optimizer in ("sgd", "adam"), f"train.optimizer: {tr.optimizer!r}")
    need(tr.scheduler in ("constant", "exponential", "linear"),
         f"train.scheduler: {tr.scheduler!r}")
    need(tr.lr > 0, "train.lr: must be > 0")
    need(tr.batch_size >= 1, "train.batch_size: must be >= 1")
    need(tr.batch_size_supervised >= 1, "train.batch_size_supervised: must be >= 1")
    need(tr.batch_size_unsupervised >= 1, "train.batch_size_unsupervised: must be >= 1")
    if specs is not None and tr.lr_per_layer:
        n_param = sum(1 for s in specs if s.kind in ("dense", "conv"))
        need(len(tr.lr_per_layer) == n_param,
             f"train.lr_per_layer: {len(tr.lr_per_layer)} rates for "
             f"{n_param} parameterized layers")

    if tr.trainer == "ep":
        if specs is not None:
            for s in specs:
                need(s.kind == "dense",
                     f"train.trainer: ep forbids {s.kind} layers (model.arch)")
                if s.kind == "dense":
                    need(s.activation == "hardsigmoid",
                         "train.trainer: ep requires hardsigmoid activations "
                         "(model.hidden_activation/model.output_activation)")
        need(e.k_nudge >= 1, "ep.k_nudge: must be >= 1")
        need(e.t_free >= e.k_nudge,
             f"ep.t_free: {e.t_free} must be >= ep.k_nudge {e.k_nudge}")
        need(e.beta > 0, f"ep.beta: must be > 0, got {e.beta}")

    if r.kind == "unsupervised":
        need(t.kind == "self_defined",
             "target.kind: unsupervised runs need the self_defined target")
    else:
        need(t.kind == "self_defined" and t.k == 1,
             "target.k: semi-supervised runs need self_defined targets with k = 1")
        if n_output is not None:
            need(n_output == d.classes,
                 f"model.arch: semi-supervised output {n_output} must equal "
                 f"data.classes {d.classes}")
        need(tr.labels >= 1, "train.labels: must be >= 1")
        need(tr.labels % max(d.classes, 1) == 0,
             f"train.labels: {tr.labels} not divisible by data.classes {d.classes}")

    need(ev.protocol in ("direct", "readout", "argmax"), f"eval.protocol: {ev.protocol!r}")
    need(0 < ev.label_fraction <= 1,
         f"eval.label_fraction: must be in (0, 1], got {ev.label_fraction}")
    if ev.protocol == "argmax" and n_output is not None:
        need(n_output == d.classes,
             f"eval.protocol: argmax needs model output {n_output} == data.classes {d.classes}")
    need(ev.readout_batch >= 1, "eval.readout_batch: must be >= 1")
    return errors
