"""Command-line entry point: embed-export export --manifest M --model TAG ..."""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, ManifestError, run_export
from .models import MODEL_TAGS, EncoderLoadError, UnknownModelTag


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embed-export")
    sub = parser.add_subparsers(dest="command", required=True)
    exp = sub.add_parser("export", help="export encoder states for a manifest")
    exp.add_argument("--manifest", required=True)
    exp.add_argument("--model", required=True, choices=sorted(MODEL_TAGS))
    exp.add_argument("--pooling", default="none", choices=["none", "mean"])
    exp.add_argument("--out", required=True)
    exp.add_argument("--encoder-impl", default="auto",
                     choices=["auto", "huggingface", "reference"],
                     help="auto tries the pretrained checkpoint, then falls "
                          "back to the deterministic reference encoder")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(manifest=args.manifest, model_tag=args.model,
                        out_dir=args.out, pooling=args.pooling,
                        prefer=args.encoder_impl)
        index = run_export(job)
    except (UnknownModelTag, EncoderLoadError, ManifestError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    n_ok, n_fail = len(index["clips"]), len(index["failed"])
    print(f"exported {n_ok} clips ({index['encoder_impl']} encoder), "
          f"{n_fail} failed")
    for clip_id, msg in index["failed"].items():
        print(f"  failed {clip_id}: {msg}", file=sys.stderr)
    return 0 if n_fail == 0 else 2


if __name__ == "__main__":
    sys.exit(main())
