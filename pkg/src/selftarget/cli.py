"""Command line entry points.

Exit codes: 0 success, 1 configuration problem, 2 training divergence,
3 file or format problem.
"""

import argparse
import json
import os
import sys

from . import evaluate as eval_mod
from .config import (ConfigError, apply_flat, from_flat, load_config,
                     load_preset, preset_names)
from .data import FormatError
from .network import CheckpointError, load_checkpoint
from .run import DivergenceError, final_evaluation, load_datasets, run_config


def _apply_overrides(cfg, overrides):
    flat = {}
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, _, value = item.partition("=")
        flat[key.strip()] = value.strip()
    return apply_flat(cfg, flat)


def _resolve_config(target):
    if os.path.sep in target or target.endswith(".cfg") or os.path.exists(target):
        return load_config(target), os.path.splitext(os.path.basename(target))[0]
    return load_preset(target), target


def cmd_run(args):
    cfg, name = _resolve_config(args.config)
    _apply_overrides(cfg, args.override)
    if args.seed is not None:
        cfg.run.seed = args.seed
    out_dir = args.out or os.path.join("runs", f"{name}_s{cfg.run.seed}")
    art = run_config(cfg, out_dir)
    print(f"run complete: test accuracy {art.final_test_accuracy:.4f}")
    print(f"artifacts in {art.out_dir}")
    return 0


def cmd_eval(args):
    net, _, meta, _ = load_checkpoint(args.checkpoint)
    if "config" not in meta:
        raise CheckpointError(f"{args.checkpoint}: no config stored in checkpoint")
    cfg = from_flat(meta["config"])
    _apply_overrides(cfg, args.override)
    if args.protocol:
        cfg.eval.protocol = args.protocol
    if args.labels is not None:
        cfg.eval.label_fraction = args.labels
    train, test = load_datasets(cfg)
    result = final_evaluation(cfg, net, train, test)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def cmd_export_weights(args):
    net, _, _, _ = load_checkpoint(args.checkpoint)
    out = args.out or os.path.join(
        os.path.dirname(os.path.abspath(args.checkpoint)), "weights.pgm")
    grid = eval_mod.weight_grid(net, max_tiles=args.max_tiles)
    eval_mod.write_pgm(out, grid)
    print(f"wrote {out}")
    return 0


def _build_parser():
    p = argparse.ArgumentParser(
        prog="selftarget",
        description="Train networks on their own k-winner targets and evaluate them.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train from a preset name or config file")
    r.add_argument("config",
                   help=f"preset name ({', '.join(preset_names())}) or .cfg path")
    r.add_argument("--override", action="append", metavar="SECTION.KEY=VALUE",
                   help="config override, repeatable")
    r.add_argument("--seed", type=int, default=None, help="replaces run.seed")
    r.add_argument("--out", default=None, help="artifact directory")
    r.set_defaults(fn=cmd_run)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--protocol", choices=("direct", "readout", "argmax"),
                   default=None)
    e.add_argument("--labels", type=float, default=None,
                   metavar="FRACTION", help="labeled fraction of the training set")
    e.add_argument("--override", action="append", metavar="SECTION.KEY=VALUE",
                   help="config override (e.g. relocated data.dir), repeatable")
    e.set_defaults(fn=cmd_eval)

    x = sub.add_parser("export-weights",
                       help="write the first-layer weight grid as a PGM image")
    x.add_argument("checkpoint")
    x.add_argument("--out", default=None, help="output .pgm path")
    x.add_argument("--max-tiles", type=int, default=400)
    x.set_defaults(fn=cmd_export_weights)
    return p


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:        # argparse exits 2 on usage errors
        return 0 if exc.code in (0, None) else 1
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 2
    except (FormatError, CheckpointError, OSError) as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
