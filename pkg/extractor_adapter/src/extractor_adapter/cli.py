"""CLI for extracting feature banks from image folders.

Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .extract import DatasetError, ExtractionJob, extract
from .registry import RegistryError, model_names


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise DatasetError(message)


def build_parser():
    parser = _Parser(
        prog="extract-bank",
        description="Extract a feature-bank directory from an image folder.",
    )
    parser.add_argument("--model", required=True,
                        help=f"backbone name ({', '.join(model_names())})")
    parser.add_argument("--dataset", required=True,
                        help="root folder with one subdirectory per class")
    parser.add_argument("--out", required=True, help="bank directory to write")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--include-source-probs", action="store_true")
    parser.add_argument("--weights", default="pretrained",
                        choices=("pretrained", "random"))
    parser.add_argument("--strict", action="store_true",
                        help="fail on undecodable images instead of skipping them")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        job = ExtractionJob(
            model=args.model,
            dataset_root=args.dataset,
            out=args.out,
            batch_size=args.batch_size,
            device=args.device,
            include_source_probs=args.include_source_probs,
            weights=args.weights,
            strict=args.strict,
        )
        out = extract(job)
    except (DatasetError, RegistryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote bank to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
