"""Command line surface: build-graph, describe, eval, export-dot.

Stage artifacts are persisted between commands so each stage is independently
resumable: ``build-graph`` writes the graph dump consumed by ``describe`` and
``export-dot``. Every command writes a run manifest recording inputs, outputs,
the effective config hash, and stage timings.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from gestpipe import __version__
from gestpipe.graph import export_dot, graph_to_json, load_graph
from gestpipe.ingest import (
    ConfigError,
    ParseError,
    PipelineConfig,
    SchemaError,
    parse_video_record,
    validate,
)
from gestpipe.llm import (
    CompletionClient,
    CompletionConfig,
    CompletionError,
    EmptyProtoError,
    ReplayStore,
    build_description_prompt,
)
from gestpipe.metrics import EvalPair, evaluate_corpus
from gestpipe.pipeline import build_gest, render_graph_description
from gestpipe.report import save_report_figure

logger = logging.getLogger(__name__)


class CliError(RuntimeError):
    """Fatal command error; the message goes to stderr and the exit code is 1."""


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        config_path = Path(args.config)
        if not config_path.exists():
            raise CliError(f"config file not found: {config_path}")
        cfg = PipelineConfig.from_file(config_path)
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg.validated()


def _write_manifest(
    out_dir: Path,
    command: str,
    inputs: list[Path],
    outputs: list[Path],
    cfg: PipelineConfig,
    timings: dict[str, float],
    name: str = "manifest.json",
) -> Path:
    effective = dataclasses.asdict(cfg)
    effective["hsv_bins"] = list(effective["hsv_bins"])
    manifest = {
        "tool_version": __version__,
        "command": command,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "config_hash": cfg.config_hash(),
        "effective_config": effective,
        "timings": {stage: round(seconds, 6) for stage, seconds in sorted(timings.items())},
    }
    path = out_dir / name
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _process_one_video(detections: Path, out_dir: Path, cfg: PipelineConfig, args: argparse.Namespace) -> None:
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    with open(detections, "rb") as handle:
        meta, frames = parse_video_record(handle, strict=args.strict)
    timings["parse"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    report = validate(meta, frames, cfg)
    timings["validate"] = time.perf_counter() - t0
    if report.issues:
        print(report.summary(), file=sys.stderr)
    if not report.ok and not args.force:
        raise CliError(f"validation failed for {detections} (use --force to run anyway)")

    graph = build_gest(meta, frames, cfg, timings=timings)

    prefix = f"{meta.video_id}." if len(args.detections) > 1 else args.prefix
    graph_path = out_dir / f"{prefix}graph.json"
    dot_path = out_dir / f"{prefix}graph.dot"
    graph_path.write_text(graph_to_json(graph), encoding="utf-8")
    dot_path.write_text(export_dot(graph), encoding="utf-8")
    manifest_name = f"{prefix}manifest.json" if prefix else "manifest.json"
    _write_manifest(out_dir, "build-graph", [detections], [graph_path, dot_path], cfg, timings, manifest_name)
    print(f"{detections} -> {graph_path} ({len(graph.events)} events, {len(graph.relations)} relations)")


def cmd_build_graph(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    inputs = [Path(p) for p in args.detections]
    for path in inputs:
        if not path.exists():
            raise CliError(f"detections file not found: {path}")

    if args.workers > 1 and len(inputs) > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_process_one_video, p, out_dir, cfg, args) for p in inputs]
            for future in futures:
                future.result()
    else:
        for path in inputs:
            _process_one_video(path, out_dir, cfg, args)
    return 0


def cmd_describe(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    graph_path = Path(args.graph)
    if not graph_path.exists():
        raise CliError(f"graph dump not found: {graph_path}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    graph = load_graph(graph_path)
    proto = render_graph_description(graph, scene=args.scene)
    timings["render"] = time.perf_counter() - t0

    proto_path = out_dir / f"{args.prefix}proto.txt"
    sidecar_path = out_dir / f"{args.prefix}proto.json"
    proto_path.write_text(proto.to_text(), encoding="utf-8")
    sidecar_path.write_text(proto.to_sidecar_json(), encoding="utf-8")
    outputs = [proto_path, sidecar_path]
    print(f"{graph_path} -> {proto_path} ({len(proto.statements)} statements)")

    exit_code = 0
    if not args.dry_run:
        completion_cfg = CompletionConfig(
            endpoint_url=args.endpoint,
            model_name=args.model,
            api_key_env_name=args.api_key_env or None,
            timeout=args.timeout,
            retry_count=args.retry_count,
        )
        replay = ReplayStore(args.replay_dir) if args.replay_dir else None
        client = CompletionClient(completion_cfg, mode=args.llm_mode, replay=replay)
        t0 = time.perf_counter()
        try:
            bundle = build_description_prompt(proto)
            description = client.complete(bundle)
        except (CompletionError, EmptyProtoError) as exc:
            # proto output above is already persisted; report and fail
            print(f"description generation failed: {exc}", file=sys.stderr)
            exit_code = 1
        else:
            description_path = out_dir / f"{args.prefix}description.txt"
            description_path.write_text(description + "\n", encoding="utf-8")
            outputs.append(description_path)
            print(f"description -> {description_path}")
        timings["complete"] = time.perf_counter() - t0

    manifest_name = f"{args.prefix}manifest.json" if args.prefix else "manifest.json"
    _write_manifest(out_dir, "describe", [graph_path], outputs, cfg, timings, manifest_name)
    return exit_code


def _read_jsonl(path: Path, what: str) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CliError(f"{what} line {line_number}: invalid JSON: {exc.msg}") from None
            if "video_id" not in data:
                raise CliError(f"{what} line {line_number}: missing video_id")
            records.append(data)
    return records


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    candidates_path = Path(args.candidates)
    references_path = Path(args.references)
    for path in (candidates_path, references_path):
        if not path.exists():
            raise CliError(f"input file not found: {path}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    candidates = {r["video_id"]: r for r in _read_jsonl(candidates_path, "candidates")}
    references = {r["video_id"]: r for r in _read_jsonl(references_path, "references")}

    missing_refs = sorted(set(candidates) - set(references))
    missing_cands = sorted(set(references) - set(candidates))
    if missing_refs or missing_cands:
        detail = []
        if missing_refs:
            detail.append(f"no reference for: {', '.join(missing_refs)}")
        if missing_cands:
            detail.append(f"no candidate for: {', '.join(missing_cands)}")
        raise CliError("candidate/reference id mismatch — " + "; ".join(detail))

    pairs = []
    grouping = {}
    for video_id in sorted(candidates):
        cand = candidates[video_id]
        ref = references[video_id]
        ref_texts = ref.get("references") or ([ref["text"]] if "text" in ref else [])
        if not ref_texts:
            raise CliError(f"references entry for {video_id!r} has neither 'references' nor 'text'")
        pairs.append(EvalPair(candidate=cand.get("text", ""), references=tuple(ref_texts), video_id=video_id))
        if "dataset" in cand:
            grouping[video_id] = cand["dataset"]
        elif "dataset" in ref:
            grouping[video_id] = ref["dataset"]

    report = evaluate_corpus(pairs, grouping or None)
    timings["evaluate"] = time.perf_counter() - t0

    tsv_path = out_dir / "report.tsv"
    text_path = out_dir / "report.txt"
    figure_path = out_dir / "report.png"
    tsv_path.write_text(report.to_tsv(), encoding="utf-8")
    text_path.write_text(report.to_text(), encoding="utf-8")
    t0 = time.perf_counter()
    save_report_figure(report, figure_path)
    timings["figure"] = time.perf_counter() - t0

    _write_manifest(
        out_dir,
        "eval",
        [candidates_path, references_path],
        [tsv_path, text_path, figure_path],
        cfg,
        timings,
    )
    sys.stdout.write(report.to_text())
    return 0


def cmd_export_dot(args: argparse.Namespace) -> int:
    graph_path = Path(args.graph)
    if not graph_path.exists():
        raise CliError(f"graph dump not found: {graph_path}")
    graph = load_graph(graph_path)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(export_dot(graph), encoding="utf-8")
    print(f"{graph_path} -> {out_path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gestpipe", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gestpipe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="pipeline config file (key = value lines)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("-v", "--verbose", action="store_true", help="info-level logging")

    p = sub.add_parser("build-graph", help="detections -> graph dump + DOT + manifest")
    add_common(p)
    p.add_argument("detections", nargs="+", help="detection record stream(s)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--strict", action="store_true", help="fail on malformed lines instead of skipping")
    p.add_argument("--force", action="store_true", help="run even when validation reports errors")
    p.add_argument("--workers", type=int, default=1, help="parallel videos (default 1)")
    p.add_argument("--prefix", default="", help="output filename prefix (single input only)")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("describe", help="graph dump -> proto-language (+ LLM description)")
    add_common(p)
    p.add_argument("graph", help="graph dump from build-graph")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dry-run", action="store_true", help="stop after the proto-language")
    p.add_argument("--scene", help="override the scene label from the graph metadata")
    p.add_argument("--llm-mode", choices=("live", "replay", "record"), default="live")
    p.add_argument("--replay-dir", help="recorded responses directory (replay/record modes)")
    p.add_argument("--endpoint", default="http://localhost:8000/v1/chat/completions")
    p.add_argument("--model", default="default")
    p.add_argument("--api-key-env", default="", help="env var holding the API key")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--retry-count", type=int, default=2, help="retries on transient endpoint failures")
    p.add_argument("--prefix", default="", help="output filename prefix")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("eval", help="score candidate descriptions against references")
    add_common(p)
    p.add_argument("--candidates", required=True, help="JSONL: {video_id, text[, dataset]}")
    p.add_argument("--references", required=True, help="JSONL: {video_id, references | text}")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-dot", help="re-export DOT from a graph dump")
    add_common(p)
    p.add_argument("graph", help="graph dump from build-graph")
    p.add_argument("--out", required=True, help="output DOT path")
    p.set_defaults(func=cmd_export_dot)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (CliError, ConfigError, ParseError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
