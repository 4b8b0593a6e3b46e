"""emb-export: encode images or captions into EMB1 files."""

from __future__ import annotations

import argparse
import json
import sys

from .encoders import get_encoder
from .export import export_captions, export_images


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emb-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("images", help="encode a directory of images")
    p.add_argument("--dir", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--model", default="lite-512", help="lite-512 or clip:<local model dir>")

    p = sub.add_parser("captions", help="encode a captions JSONL corpus")
    p.add_argument("--jsonl", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--model", default="lite-512", help="lite-512 or clip:<local model dir>")

    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        encoder = get_encoder(args.model)
        if args.command == "images":
            manifest = export_images(args.dir, args.out_prefix, encoder)
        else:
            manifest = export_captions(args.jsonl, args.out_prefix, encoder)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({
        "source_model": manifest.source_model,
        "dim": manifest.dim,
        "files": manifest.files,
        "warnings": manifest.warnings,
    }))
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
