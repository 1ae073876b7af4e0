"""Command line entry point: video file in, detection record stream out.

The output feeds straight into ``gestpipe build-graph``.
"""

from __future__ import annotations

import argparse
import logging
import sys

from gestextract import __version__
from gestextract.extract import ExtractError, ExtractorConfig, extract


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gestextract", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gestextract {__version__}")
    parser.add_argument("video", help="input video file")
    parser.add_argument("--out", required=True, help="output record stream (.jsonl)")
    parser.add_argument("--stride", type=int, default=1, help="process every Nth frame")
    parser.add_argument("--sample-cap", type=int, default=2048, help="max pixel samples per person per frame")
    parser.add_argument("--seed", type=int, default=0, help="pixel sampling seed")
    parser.add_argument("--scene-label", help="fixed scene label (skips the scene classifier)")
    parser.add_argument(
        "--strict", action="store_true", help="fail on per-frame inference errors instead of skipping"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    for role, default in (
        ("person-detector", "builtin-motion"),
        ("tracker", "builtin-iou"),
        ("action-classifier", "builtin-motion"),
        ("object-detector", "builtin-color"),
        ("depth-estimator", "builtin-intensity"),
        ("scene-classifier", "builtin-heuristic"),
    ):
        parser.add_argument(f"--{role}", default=default, help=f"adapter name (default {default})")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    cfg = ExtractorConfig(
        person_detector=args.person_detector,
        tracker=args.tracker,
        action_classifier=args.action_classifier,
        object_detector=args.object_detector,
        depth_estimator=args.depth_estimator,
        scene_classifier="fixed" if args.scene_label else args.scene_classifier,
        scene_label=args.scene_label,
        frame_stride=args.stride,
        pixel_sample_cap=args.sample_cap,
        sample_seed=args.seed,
        strict=args.strict,
    )
    try:
        written = extract(args.video, cfg, args.out)
    except (ExtractError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{args.video} -> {args.out} ({written} frame records)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
