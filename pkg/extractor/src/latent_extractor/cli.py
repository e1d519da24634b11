"""Command line front end.

    latent-extract text --backbone DIR --input sentences.txt --out latents.ltnt
    latent-extract text --backbone DIR --input sentences.txt \
        --pooling per-token --out token_dump/
    latent-extract vision --backbone DIR --input images.txt --out latents.ltnt
    latent-extract vision --backbone DIR --image a.png --image b.png --out latents.ltnt

Each run prints a JSON report on success. Failing inputs are listed one per
line on stderr and nothing is written.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ArgumentError, ExtractionFailure, ExtractorError
from .text import TextSpec, extract_text, read_sentences
from .vision import VisionSpec, extract_vision

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


def _print_report(command: str, report) -> None:
    payload = {
        "command": command,
        "count": report.count,
        "dim": report.dim,
        "out": report.out,
        "files": list(report.files),
    }
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_text(args) -> int:
    spec = TextSpec(
        backbone=args.backbone,
        pooling=args.pooling,
        batch=args.batch,
        max_length=args.max_length,
        dataset=args.dataset,
        split=args.split,
    )
    report = extract_text(spec, read_sentences(args.input), args.out)
    _print_report("text", report)
    return EXIT_OK


def cmd_vision(args) -> int:
    paths = list(args.image)
    if args.input:
        paths.extend(Path(args.input).read_text(encoding="utf-8").splitlines())
    paths = [p for p in paths if p.strip()]
    spec = VisionSpec(
        backbone=args.backbone,
        resolution=args.resolution,
        celeba_protocol=args.celeba_protocol,
        use_pooler=args.use_pooler,
        batch=args.batch,
        dataset=args.dataset,
        split=args.split,
    )
    report = extract_vision(spec, paths, args.out)
    _print_report("vision", report)
    return EXIT_OK


def _add_common(parser) -> None:
    parser.add_argument("--backbone", required=True, help="local checkpoint directory")
    parser.add_argument("--out", required=True, help="output path")
    parser.add_argument("--dataset", default="", help="dataset name for the sidecar")
    parser.add_argument("--split", default="", help="split name for the sidecar")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latent-extract",
        description="Extract frozen encoder latents into LTNT files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_text = sub.add_parser("text", help="pool token hidden states per sentence")
    _add_common(p_text)
    p_text.add_argument("--input", required=True, help="text file, one input per line")
    p_text.add_argument(
        "--pooling",
        choices=["smp", "per-token"],
        default="smp",
        help="smp: one mean-pooled row per input; per-token: one LTNT per "
        "sequence plus a 0/1 mask sidecar",
    )
    p_text.add_argument("--batch", type=int, default=16)
    p_text.add_argument("--max-length", type=int, default=None, dest="max_length")
    p_text.set_defaults(func=cmd_text)

    p_vis = sub.add_parser("vision", help="one class-token row per image")
    _add_common(p_vis)
    p_vis.add_argument("--input", help="text file listing image paths, one per line")
    p_vis.add_argument(
        "--image", action="append", default=[], metavar="PATH", help="repeatable"
    )
    p_vis.add_argument(
        "--resolution", type=int, default=None, help="override the model input size"
    )
    p_vis.add_argument(
        "--celeba-protocol",
        action="store_true",
        dest="celeba_protocol",
        help="resize to 32x32 before the model resolution",
    )
    p_vis.add_argument(
        "--use-pooler",
        action="store_true",
        dest="use_pooler",
        help="read the backbone's pooled-output field instead of the class token",
    )
    p_vis.add_argument("--batch", type=int, default=8)
    p_vis.set_defaults(func=cmd_vision)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except ArgumentError as exc:
        print(f"latent-extract: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExtractionFailure as exc:
        for label, message in exc.items:
            print(f"latent-extract: error: {label}: {message}", file=sys.stderr)
        return EXIT_DATA
    except ExtractorError as exc:
        print(f"latent-extract: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"latent-extract: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
