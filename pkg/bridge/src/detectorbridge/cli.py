"""Bridge command line: `run` for inference, `recipe` for training defaults."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from .config import BridgeConfig, BridgeError, load_bridge_config
from .inference import run_inference
from .recipe import emit_training_recipe

DEFAULT_CLASS_MAP = {
    "0": "Laughing Gull Adult",
    "1": "Brown Pelican Adult",
    "2": "Other",
}


def cmd_run(args: argparse.Namespace) -> int:
    if args.config:
        cfg = load_bridge_config(args.config)
    else:
        cfg = BridgeConfig(model=args.model, class_map=dict(DEFAULT_CLASS_MAP))
    written = run_inference(args.manifest, args.tiles, cfg, args.out)
    print(f"wrote {written} detections to {args.out}")
    return 0


def cmd_recipe(args: argparse.Namespace) -> int:
    emit_training_recipe(args.out)
    print(f"wrote training recipe to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detector-bridge",
        description="Run an object detector over a tiles manifest.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="emit wire-format detections for a manifest")
    p.add_argument("--manifest", required=True, help="tiles manifest JSON")
    p.add_argument("--tiles", required=True, help="directory of tile PNGs")
    p.add_argument("--out", required=True, help="output detections JSONL")
    p.add_argument("--config", help="bridge config JSON")
    p.add_argument("--model", default="stub:fixed", help="model identifier when no config given")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("recipe", help="write the documented training defaults")
    p.add_argument("--out", required=True, help="output recipe JSON")
    p.set_defaults(func=cmd_recipe)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - unexpected bug surface
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
