from __future__ import annotations

import json
from pathlib import Path

import pytest

from gestpipe.cli import main
from gestpipe.graph import load_graph
from gestpipe.llm import ReplayStore, build_description_prompt
from gestpipe.pipeline import render_graph_description

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "synthetic_300.jsonl"


def run(*argv: str) -> int:
    return main(list(argv))


class TestBuildGraph:
    def test_valid_fixture(self, tmp_path, capsys):
        assert run("build-graph", str(FIXTURE), "--out", str(tmp_path)) == 0
        assert (tmp_path / "graph.json").exists()
        assert (tmp_path / "graph.dot").exists()
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "build-graph"
        assert manifest["config_hash"]
        assert manifest["effective_config"]["action_min_confidence"] == 0.75
        assert "identity" in manifest["timings"]

    def test_missing_input_names_path(self, tmp_path, capsys):
        missing = tmp_path / "nope.jsonl"
        assert run("build-graph", str(missing), "--out", str(tmp_path)) == 1
        assert str(missing) in capsys.readouterr().err

    def test_invalid_config_fails_before_processing(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(
            "build-graph", str(FIXTURE), "--out", str(out), "--set", "action_min_confidence=2.0"
        ) == 1
        assert "action_min_confidence" in capsys.readouterr().err
        assert not (out / "graph.json").exists()

    def test_validation_error_requires_force(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(
            '{"video_id": "b", "fps": 30.0, "width": 100, "height": 100}\n'
            '{"frame_index": 0, "persons": [], '
            '"actions": [{"track_id": 1, "label": "walk", "confidence": 1.7, "bbox": [0, 0, 5, 5]}], '
            '"objects": []}\n'
        )
        out = tmp_path / "out"
        assert run("build-graph", str(bad), "--out", str(out)) == 1
        assert run("build-graph", str(bad), "--out", str(out), "--force") == 0

    def test_multiple_inputs_prefixed_outputs(self, tmp_path):
        second = tmp_path / "copy.jsonl"
        text = FIXTURE.read_text().replace('"synthetic-300"', '"copy-300"', 1)
        second.write_text(text)
        out = tmp_path / "out"
        assert run("build-graph", str(FIXTURE), str(second), "--out", str(out), "--workers", "2") == 0
        assert (out / "synthetic-300.graph.json").exists()
        assert (out / "copy-300.graph.json").exists()


@pytest.fixture
def graph_dir(tmp_path):
    out = tmp_path / "graph-out"
    assert run("build-graph", str(FIXTURE), "--out", str(out)) == 0
    return out


class TestDescribe:
    def test_dry_run_writes_proto_only(self, graph_dir, tmp_path):
        out = tmp_path / "desc"
        assert run("describe", str(graph_dir / "graph.json"), "--out", str(out), "--dry-run") == 0
        assert (out / "proto.txt").exists()
        assert (out / "proto.json").exists()
        assert not (out / "description.txt").exists()

    def test_replay_mode_writes_description(self, graph_dir, tmp_path):
        graph = load_graph(graph_dir / "graph.json")
        proto = render_graph_description(graph)
        store = ReplayStore(tmp_path / "replay")
        store.put(build_description_prompt(proto), "A person walks around an office.")
        out = tmp_path / "desc"
        code = run(
            "describe",
            str(graph_dir / "graph.json"),
            "--out", str(out),
            "--llm-mode", "replay",
            "--replay-dir", str(tmp_path / "replay"),
        )
        assert code == 0
        assert (out / "description.txt").read_text().strip() == "A person walks around an office."

    def test_unreachable_endpoint_persists_proto_and_fails(self, graph_dir, tmp_path, capsys):
        out = tmp_path / "desc"
        code = run(
            "describe",
            str(graph_dir / "graph.json"),
            "--out", str(out),
            "--endpoint", "http://127.0.0.1:1/unreachable",
            "--retry-count", "0",
        )
        assert code == 1
        assert (out / "proto.txt").exists()
        assert "failed" in capsys.readouterr().err

    def test_missing_graph(self, tmp_path, capsys):
        assert run("describe", str(tmp_path / "none.json"), "--out", str(tmp_path), "--dry-run") == 1


class TestEval:
    def write_jsonl(self, path: Path, rows: list[dict]) -> Path:
        path.write_text("\n".join(json.dumps(r) for r in rows) + ("\n" if rows else ""))
        return path

    def test_aligned_fixtures_produce_report(self, tmp_path, capsys):
        cands = self.write_jsonl(
            tmp_path / "c.jsonl",
            [
                {"video_id": "v1", "text": "a person reads a book", "dataset": "ds1"},
                {"video_id": "v2", "text": "someone walks", "dataset": "ds2"},
            ],
        )
        refs = self.write_jsonl(
            tmp_path / "r.jsonl",
            [
                {"video_id": "v1", "references": ["a person reads a book", "reading a book"]},
                {"video_id": "v2", "text": "a person walks around"},
            ],
        )
        out = tmp_path / "out"
        assert run("eval", "--candidates", str(cands), "--references", str(refs), "--out", str(out)) == 0
        assert (out / "report.tsv").exists()
        assert (out / "report.txt").exists()
        assert (out / "report.png").stat().st_size > 0
        tsv = (out / "report.tsv").read_text().splitlines()
        assert len(tsv) == 3
        assert "ds1" in capsys.readouterr().out

    def test_id_mismatch_listed(self, tmp_path, capsys):
        cands = self.write_jsonl(tmp_path / "c.jsonl", [{"video_id": "v1", "text": "a"}])
        refs = self.write_jsonl(tmp_path / "r.jsonl", [{"video_id": "v2", "text": "b"}])
        out = tmp_path / "out"
        assert run("eval", "--candidates", str(cands), "--references", str(refs), "--out", str(out)) == 1
        err = capsys.readouterr().err
        assert "v1" in err and "v2" in err

    def test_empty_files_empty_report(self, tmp_path):
        cands = self.write_jsonl(tmp_path / "c.jsonl", [])
        refs = self.write_jsonl(tmp_path / "r.jsonl", [])
        out = tmp_path / "out"
        assert run("eval", "--candidates", str(cands), "--references", str(refs), "--out", str(out)) == 0
        assert "no pairs" in (out / "report.txt").read_text()


class TestExportDot:
    def test_round_trip(self, graph_dir, tmp_path):
        out = tmp_path / "g.dot"
        assert run("export-dot", str(graph_dir / "graph.json"), "--out", str(out)) == 0
        assert out.read_text() == (graph_dir / "graph.dot").read_text()


class TestManifest:
    def test_config_hash_changes_with_overrides(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert run("build-graph", str(FIXTURE), "--out", str(out_a)) == 0
        assert run("build-graph", str(FIXTURE), "--out", str(out_b), "--set", "vote_radius=4") == 0
        hash_a = json.loads((out_a / "manifest.json").read_text())["config_hash"]
        hash_b = json.loads((out_b / "manifest.json").read_text())["config_hash"]
        assert hash_a != hash_b
