"""Command line: radioml-convert --src release.h5 --dst frames.gamc
[--classes A,B,...] [--snrs -10,0,10] [--limit N] [--classes-json path].

Writes the frame file plus a structured-text manifest at <dst>.manifest.txt.
Exit code 2 on schema or argument problems.
"""

from __future__ import annotations

import argparse
import sys

from .convert import AmbiguousLabel, SchemaError, convert


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radioml-convert", description=__doc__)
    parser.add_argument("--src", required=True, help="RadioML 2018.01A HDF5 file")
    parser.add_argument("--dst", required=True, help="output GAMC frame file")
    parser.add_argument("--classes", help="comma-separated canonical class names to keep")
    parser.add_argument("--snrs", help="comma-separated SNR values (dB) to keep")
    parser.add_argument("--limit", type=int, default=None,
                        help="max frames per (class, SNR) cell")
    parser.add_argument("--classes-json",
                        help="the release's classes.json, overriding the built-in order")
    parser.add_argument("--chunk-size", type=int, default=4096,
                        help="rows read per chunk (memory bound)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    classes = args.classes.split(",") if args.classes else None
    snrs = [float(s) for s in args.snrs.split(",")] if args.snrs else None
    try:
        manifest = convert(
            args.src, args.dst,
            class_subset=classes, snr_subset=snrs,
            max_frames_per_cell=args.limit, classes_json=args.classes_json,
            chunk_size=args.chunk_size,
        )
    except (SchemaError, AmbiguousLabel, OSError) as exc:
        print(f"radioml-convert: error: {exc}", file=sys.stderr)
        return 2
    manifest_path = f"{args.dst}.manifest.txt"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(manifest.to_text())
    print(f"wrote {manifest.total_frames} frames to {args.dst}")
    print(f"manifest: {manifest_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
