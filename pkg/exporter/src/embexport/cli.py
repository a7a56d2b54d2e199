"""embexport command line: `embexport export --corpus X --out Y [...]`.

Exit codes: 0 success, 1 runtime error (encoder, alignment, IO),
2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Sequence

from .encode import DEFAULT_ENCODER, ExportJob, export
from .errors import ExportError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Export frozen-encoder token embeddings to EMBV1.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser(
        "export",
        help="embed a CoNLL corpus",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--corpus", required=True, help="two-column CoNLL corpus path")
    p.add_argument("--out", required=True, help="EMBV1 output path")
    p.add_argument(
        "--encoder", default=DEFAULT_ENCODER,
        help="model name or local path of the frozen encoder",
    )
    p.add_argument(
        "--pooling", choices=["first", "mean"], default="first",
        help="word-piece to word pooling",
    )
    p.add_argument("--batch-size", type=int, default=8, help="sentences per batch")
    p.add_argument("--device", default="cpu", help="torch device for the encoder")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else int(exc.code)
    if not os.path.isfile(args.corpus):
        print(f"error: --corpus: file not found: {args.corpus}", file=sys.stderr)
        return 2
    if args.batch_size < 1:
        print("error: --batch-size must be >= 1", file=sys.stderr)
        return 2
    try:
        job = ExportJob(
            corpus_path=args.corpus,
            out_path=args.out,
            encoder=args.encoder,
            pooling=args.pooling,
            batch_size=args.batch_size,
            device=args.device,
        )
        count = export(job)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} records to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
