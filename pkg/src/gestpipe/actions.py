"""Action stream denoising: confidence cutoff, top-k per frame, temporal voting."""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass

from gestpipe.identity import IdMapping
from gestpipe.ingest import BBox, FrameRecord, PipelineConfig


@dataclass(frozen=True)
class ActionObservation:
    """One action detection attributed to a stable person id.

    ``objects`` holds the per-frame candidate object labels once association
    has run (empty until then).
    """

    frame_index: int
    person_id: int
    label: str
    confidence: float
    bbox: BBox
    objects: tuple[str, ...] = ()


def observations_from_frames(frames: list[FrameRecord], mapping: IdMapping) -> list[ActionObservation]:
    """Attach stable person ids to raw action detections; orphans are dropped."""
    observations = []
    for frame in frames:
        for action in frame.actions:
            stable = mapping.get(action.track_id)
            if stable is None:
                continue
            observations.append(
                ActionObservation(
                    frame_index=frame.frame_index,
                    person_id=stable,
                    label=action.label,
                    confidence=action.confidence,
                    bbox=action.bbox,
                )
            )
    return observations


def filter_by_confidence(frame_actions: list[ActionObservation], cfg: PipelineConfig) -> list[ActionObservation]:
    """Keep the top ``actions_per_frame`` observations of one frame.

    Observations with confidence strictly below ``action_min_confidence`` are
    dropped first (exactly 0.75 survives the default cutoff). Ties on
    confidence break by label, then person id. With ``topk_per_person`` the
    cap applies per person instead of across the whole frame.
    """
    kept = [o for o in frame_actions if o.confidence >= cfg.action_min_confidence]
    key = lambda o: (-o.confidence, o.label, o.person_id)
    if cfg.topk_per_person:
        by_person: dict[int, list[ActionObservation]] = {}
        for obs in kept:
            by_person.setdefault(obs.person_id, []).append(obs)
        result = []
        for person_id in sorted(by_person):
            result.extend(sorted(by_person[person_id], key=key)[: cfg.actions_per_frame])
        result.sort(key=key)
        return result
    return sorted(kept, key=key)[: cfg.actions_per_frame]


def filter_stream_by_confidence(
    observations: list[ActionObservation], cfg: PipelineConfig
) -> list[ActionObservation]:
    """Apply :func:`filter_by_confidence` frame by frame over a whole stream."""
    by_frame: dict[int, list[ActionObservation]] = {}
    for obs in observations:
        by_frame.setdefault(obs.frame_index, []).append(obs)
    result = []
    for frame_index in sorted(by_frame):
        result.extend(filter_by_confidence(by_frame[frame_index], cfg))
    return result


def temporal_vote(observations: list[ActionObservation], cfg: PipelineConfig) -> list[ActionObservation]:
    """Single-pass sliding-window vote over the pre-vote stream.

    An observation at frame f survives iff its (person, label) pair appears in
    at least ``vote_min_count`` distinct frames within [f - r, f + r], the
    observation's own frame included. Windows truncate at video boundaries.
    The output preserves input order and is a subset of the input.
    """
    frame_sets: dict[tuple[int, str], set[int]] = {}
    for obs in observations:
        frame_sets.setdefault((obs.person_id, obs.label), set()).add(obs.frame_index)
    frames_by_key = {key: sorted(frames) for key, frames in frame_sets.items()}

    survivors = []
    for obs in observations:
        frames = frames_by_key[(obs.person_id, obs.label)]
        lo = bisect_left(frames, obs.frame_index - cfg.vote_radius)
        hi = bisect_right(frames, obs.frame_index + cfg.vote_radius)
        if hi - lo >= cfg.vote_min_count:
            survivors.append(obs)
    return survivors
