"""Command line entry: ``treerange <experiment> [flags]``."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, DomainError, TreeRangeError, ValidationError
from .harness import EXPERIMENTS, ExperimentConfig, load_config, run


def _option(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError("options look like key=value")
    key, val = text.split("=", 1)
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treerange", description="Range of tree-indexed random walks: experiments.")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config; inline flags override it")
        sp.add_argument("--dim", type=int)
        sp.add_argument("--n", type=int)
        sp.add_argument("--p", type=int)
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--j-max", dest="j_max", type=int)
        sp.add_argument("--reps", type=int)
        sp.add_argument("--seed", type=lambda s: int(s, 0))
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out")
        sp.add_argument("--option", "-o", action="append", type=_option, default=[],
                        help="experiment option key=value (value parsed as JSON)")
        if name == "green":
            sp.add_argument("--x", type=lambda s: [int(v) for v in s.split(",")], help="lattice point, e.g. 1,0,0,0")
            sp.add_argument("--eps", type=float)
        if name == "verify":
            sp.add_argument("--level", choices=("fast", "full"))
            sp.add_argument("--corrupt-green", action="store_true")
    return ap


def config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"config is for {cfg.experiment!r}, command is {args.experiment!r}")
    else:
        cfg = ExperimentConfig(args.experiment)
    for key in ("dim", "n", "p", "horizon", "j_max", "reps", "seed", "workers", "out"):
        v = getattr(args, key)
        if v is not None:
            setattr(cfg, key, v)
    cfg.options.update(dict(args.option))
    if args.experiment == "green":
        if args.x is not None:
            cfg.options["x"] = args.x
            if args.dim is None and not cfg.jump:
                cfg.dim = len(args.x)
        if args.eps is not None:
            cfg.options["eps"] = args.eps
    if args.experiment == "verify":
        if args.level:
            cfg.options["level"] = args.level
        if args.corrupt_green:
            cfg.options["corrupt_green"] = True
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        _, code = run(cfg)
    except (ConfigError, ValidationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TreeRangeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return code


if __name__ == "__main__":
    sys.exit(main())
