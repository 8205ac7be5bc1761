"""Command-line front end for the activation capture shim."""

from __future__ import annotations

import argparse
import sys

from .shim import CaptureConfig, capture_run

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmtkit-capture",
        description="Capture per-token transformer activations into rmtkit containers or frames.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--model", required=True, help="model identifier or local checkpoint path")
    parser.add_argument(
        "--layers",
        default=None,
        help="comma-separated block indices to capture (default: every 4th block)",
    )
    parser.add_argument("--max-new-tokens", type=int, default=128)
    parser.add_argument("--temperature", type=float, default=0.2)
    parser.add_argument("--greedy", action="store_true", help="argmax decoding (ignores temperature)")
    parser.add_argument("--seed", type=int, default=0, help="sampling seed")
    parser.add_argument(
        "--final-norm",
        action="store_true",
        help="pass captured states through the model's final normalization layer",
    )
    parser.add_argument(
        "--structured-flag",
        action="store_true",
        help="set the container's structured-label header bit",
    )
    dest = parser.add_mutually_exclusive_group(required=True)
    dest.add_argument("--out", help="SPAC container output path")
    dest.add_argument("--stream", help="HOST:PORT to stream length-prefixed frames to")
    src = parser.add_mutually_exclusive_group(required=True)
    src.add_argument("--prompt", help="prompt text (requires the model's tokenizer)")
    src.add_argument("--prompt-ids", help="comma-separated raw token ids, bypassing the tokenizer")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        layers = None if args.layers is None else [int(x) for x in args.layers.split(",") if x]
        config = CaptureConfig(
            model=args.model,
            layers=layers,
            max_new_tokens=args.max_new_tokens,
            temperature=args.temperature,
            greedy=args.greedy,
            seed=args.seed,
            final_norm=args.final_norm,
            structured_flag=args.structured_flag,
            out=args.out,
            stream=args.stream,
        )
        prompt_ids = None if args.prompt_ids is None else [int(x) for x in args.prompt_ids.split(",") if x]
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        tokens, width = capture_run(config, prompt=args.prompt, prompt_ids=prompt_ids)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # load/runtime failures: nonzero exit with message
        print(f"capture failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"captured {tokens} tokens x {width} dims")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
