from __future__ import annotations

import random

from gestpipe.actions import (
    ActionObservation,
    filter_by_confidence,
    filter_stream_by_confidence,
    observations_from_frames,
    temporal_vote,
)
from gestpipe.identity import IdMapping
from gestpipe.ingest import ActionDetection, BBox, FrameRecord, PipelineConfig

from oracles import vote_oracle

BOX = BBox(0, 0, 10, 10)


def obs(frame: int, person: int = 1, label: str = "walk", confidence: float = 0.9) -> ActionObservation:
    return ActionObservation(frame, person, label, confidence, BOX)


class TestFilterByConfidence:
    def test_top_two_kept(self, cfg):
        frame = [obs(0, 1, "a", 0.9), obs(0, 2, "b", 0.8), obs(0, 3, "c", 0.76)]
        kept = filter_by_confidence(frame, cfg)
        assert [(o.label, o.confidence) for o in kept] == [("a", 0.9), ("b", 0.8)]

    def test_all_below_threshold(self, cfg):
        assert filter_by_confidence([obs(0, confidence=0.5), obs(0, confidence=0.74)], cfg) == []

    def test_exactly_threshold_kept(self, cfg):
        kept = filter_by_confidence([obs(0, confidence=0.75)], cfg)
        assert len(kept) == 1

    def test_just_below_threshold_dropped(self, cfg):
        assert filter_by_confidence([obs(0, confidence=0.7499)], cfg) == []

    def test_tie_break_label_then_person(self, cfg):
        frame = [obs(0, 9, "zoom", 0.8), obs(0, 2, "aim", 0.8), obs(0, 1, "aim", 0.8)]
        kept = filter_by_confidence(frame, cfg)
        assert [(o.label, o.person_id) for o in kept] == [("aim", 1), ("aim", 2)]

    def test_never_exceeds_cap(self, cfg):
        rng = random.Random(0)
        for _ in range(50):
            frame = [obs(0, p, "l", round(rng.uniform(0.7, 1.0), 3)) for p in range(rng.randint(0, 8))]
            assert len(filter_by_confidence(frame, cfg)) <= cfg.actions_per_frame

    def test_per_person_scope_flag(self):
        cfg = PipelineConfig(topk_per_person=True)
        frame = [
            obs(0, 1, "a", 0.9),
            obs(0, 1, "b", 0.85),
            obs(0, 1, "c", 0.8),
            obs(0, 2, "d", 0.76),
        ]
        kept = filter_by_confidence(frame, cfg)
        assert sorted((o.person_id, o.label) for o in kept) == [(1, "a"), (1, "b"), (2, "d")]


class TestTemporalVote:
    def test_full_window_survives(self, cfg):
        stream = [obs(f) for f in range(0, 11)]
        survivors = temporal_vote(stream, cfg)
        assert obs(5) in survivors  # 11 votes in its window

    def test_four_in_window_discarded(self, cfg):
        stream = [obs(f) for f in (0, 2, 4, 6)]
        assert temporal_vote(stream, cfg) == []

    def test_isolated_detection_discarded(self, cfg):
        assert temporal_vote([obs(50)], cfg) == []

    def test_five_votes_boundary(self, cfg):
        stream = [obs(f) for f in range(0, 5)]  # frames 0-4, all within radius 5
        survivors = temporal_vote(stream, cfg)
        assert survivors == stream

    def test_window_truncated_at_video_start(self, cfg):
        # a run at the very start still counts only existing frames
        stream = [obs(f) for f in range(0, 7)]
        assert obs(1) in temporal_vote(stream, cfg)

    def test_single_pass_semantics(self, cfg):
        # frame 3 survives thanks to frame 8, even though frame 8 itself dies;
        # fixpoint iteration would have dropped frame 3 as well
        stream = [obs(f) for f in (0, 1, 2, 3, 8)]
        survivors = temporal_vote(stream, cfg)
        assert [o.frame_index for o in survivors] == [3]

    def test_keys_are_independent(self, cfg):
        stream = [obs(f, 1, "walk") for f in range(0, 6)] + [obs(3, 2, "walk")] + [obs(3, 1, "sit")]
        survivors = temporal_vote(stream, cfg)
        labels = {(o.person_id, o.label) for o in survivors}
        assert labels == {(1, "walk")}

    def test_output_subset_and_ordered(self, cfg):
        rng = random.Random(3)
        stream = [
            obs(rng.randint(0, 60), rng.randint(1, 3), rng.choice("ab"))
            for _ in range(80)
        ]
        survivors = temporal_vote(stream, cfg)
        assert all(s in stream for s in survivors)
        positions = [stream.index(s) for s in survivors]
        assert positions == sorted(positions)

    def test_matches_exhaustive_oracle(self, cfg):
        rng = random.Random(11)
        for _ in range(40):
            stream = [
                obs(rng.randint(0, 100), rng.randint(1, 3), rng.choice("abc"))
                for _ in range(rng.randint(0, 60))
            ]
            assert temporal_vote(stream, cfg) == vote_oracle(stream, cfg.vote_radius, cfg.vote_min_count)


class TestObservationBuilding:
    def test_orphans_dropped_and_ids_mapped(self):
        frames = [
            FrameRecord(
                0,
                persons=(),
                actions=(
                    ActionDetection(7, "walk", 0.9, BOX),
                    ActionDetection(99, "run", 0.9, BOX),
                ),
            )
        ]
        observations = observations_from_frames(frames, IdMapping({7: 1}))
        assert [(o.person_id, o.label) for o in observations] == [(1, "walk")]

    def test_stream_filter_applies_per_frame(self, cfg):
        stream = [obs(0, p, "l", 0.8 + 0.01 * p) for p in range(4)] + [obs(1, 1, "l", 0.9)]
        kept = filter_stream_by_confidence(stream, cfg)
        per_frame = {}
        for o in kept:
            per_frame.setdefault(o.frame_index, []).append(o)
        assert len(per_frame[0]) == 2 and len(per_frame[1]) == 1
