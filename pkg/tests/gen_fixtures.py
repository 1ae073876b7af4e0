#!/usr/bin/env python3
"""Regenerate the bundled test fixtures under tests/data/.

Usage: python3 tests/gen_fixtures.py
"""

from __future__ import annotations

from pathlib import Path

from gestpipe.ingest import PipelineConfig, serialize_video_record, validate
from gestpipe.pipeline import build_gest, render_graph_description

import scenarios

DATA_DIR = Path(__file__).parent / "data"


def main() -> None:
    DATA_DIR.mkdir(exist_ok=True)
    cfg = PipelineConfig().validated()

    meta, frames = scenarios.synthetic_300()
    report = validate(meta, frames, cfg)
    assert report.ok, report.summary()
    (DATA_DIR / "synthetic_300.jsonl").write_text(serialize_video_record(meta, frames), encoding="utf-8")
    print(f"wrote synthetic_300.jsonl ({len(frames)} frames)")

    meta, frames = scenarios.two_actor_scenario()
    report = validate(meta, frames, cfg)
    assert report.ok, report.summary()
    graph = build_gest(meta, frames, cfg)
    proto = render_graph_description(graph)
    (DATA_DIR / "golden_two_actor.proto.txt").write_text(proto.to_text(), encoding="utf-8")
    print("wrote golden_two_actor.proto.txt:")
    print(proto.to_text())


if __name__ == "__main__":
    main()
