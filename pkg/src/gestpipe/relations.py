"""Spatial and temporal edges between events.

Temporal kinds: ``same_time`` (both endpoints aligned within a tolerance),
``meanwhile`` (any other overlap), ``next`` (bounded gap, earlier -> later).
Spatial ``space_close`` edges require the actors to be near each other in
most of the frames the two events share.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum

from gestpipe.events import Event
from gestpipe.ingest import BBox, PipelineConfig


class RelationKind(str, Enum):
    SPACE_CLOSE = "space_close"
    NEXT = "next"
    SAME_TIME = "same_time"
    MEANWHILE = "meanwhile"


@dataclass(frozen=True)
class Relation:
    """Typed edge; evidence is a frame fraction (spatial) or a frame count (temporal)."""

    src_event_id: int
    dst_event_id: int
    kind: RelationKind
    evidence: float


def event_bbox_at(event: Event, frame_index: int) -> BBox:
    """Box of an event at a frame, holding the nearest stored box for gaps."""
    stored = event.per_frame_bboxes.get(frame_index)
    if stored is not None:
        return stored
    frames = sorted(event.per_frame_bboxes)
    if not frames:
        raise ValueError(f"event {event.event_id} has no stored bboxes")
    pos = bisect_left(frames, frame_index)
    if pos == 0:
        return event.per_frame_bboxes[frames[0]]
    if pos == len(frames):
        return event.per_frame_bboxes[frames[-1]]
    before, after = frames[pos - 1], frames[pos]
    # ties go to the earlier frame
    nearest = before if frame_index - before <= after - frame_index else after
    return event.per_frame_bboxes[nearest]


def spatial_relation(a: Event, b: Event, cfg: PipelineConfig) -> Relation | None:
    """space_close edge when the actors stay near through the shared frames.

    A frame qualifies when centroid distance over the sum of box diagonals is
    strictly below ``spatial_ratio_threshold``; the edge exists when strictly
    more than ``spatial_min_overlap_fraction`` of the overlapping frames
    qualify. Symmetric by construction.
    """
    lo = max(a.start_frame, b.start_frame)
    hi = min(a.end_frame, b.end_frame)
    if lo > hi:
        return None
    qualifying = 0
    total = hi - lo + 1
    for frame_index in range(lo, hi + 1):
        box_a = event_bbox_at(a, frame_index)
        box_b = event_bbox_at(b, frame_index)
        denom = box_a.diagonal + box_b.diagonal
        if denom <= 0:
            continue
        (ax, ay), (bx, by) = box_a.center, box_b.center
        if math.hypot(ax - bx, ay - by) / denom < cfg.spatial_ratio_threshold:
            qualifying += 1
    fraction = qualifying / total
    if fraction > cfg.spatial_min_overlap_fraction:
        return Relation(a.event_id, b.event_id, RelationKind.SPACE_CLOSE, fraction)
    return None


def temporal_relation(a: Event, b: Event, cfg: PipelineConfig) -> Relation | None:
    """Classify the ordered pair (a starts no later than b) into one temporal kind.

    Exactly one of same_time / meanwhile / next / none applies. Evidence is
    the overlap length for the symmetric kinds and the gap for ``next``.
    """
    if a.start_frame > b.start_frame:
        raise ValueError("temporal_relation expects a.start_frame <= b.start_frame")
    overlap = min(a.end_frame, b.end_frame) - max(a.start_frame, b.start_frame) + 1
    if (
        abs(a.start_frame - b.start_frame) <= cfg.same_time_tolerance
        and abs(a.end_frame - b.end_frame) <= cfg.same_time_tolerance
    ):
        return Relation(a.event_id, b.event_id, RelationKind.SAME_TIME, float(max(overlap, 0)))
    if overlap >= 1:
        return Relation(a.event_id, b.event_id, RelationKind.MEANWHILE, float(overlap))
    gap = b.start_frame - a.end_frame
    if 0 <= gap <= cfg.next_max_gap:
        return Relation(a.event_id, b.event_id, RelationKind.NEXT, float(gap))
    return None


def build_relations(events: list[Event], cfg: PipelineConfig) -> list[Relation]:
    """All pairwise edges: one temporal and one spatial attempt per event pair.

    Temporal edges run earlier -> later (ties broken by end frame then id);
    spatial edges run lower id -> higher id.
    """
    relations: list[Relation] = []
    ordered = sorted(events, key=lambda e: (e.start_frame, e.end_frame, e.event_id))
    for i, a in enumerate(ordered):
        for b in ordered[i + 1 :]:
            temporal = temporal_relation(a, b, cfg)
            if temporal is not None:
                relations.append(temporal)
            first, second = (a, b) if a.event_id < b.event_id else (b, a)
            spatial = spatial_relation(first, second, cfg)
            if spatial is not None:
                relations.append(spatial)
    relations.sort(key=lambda r: (r.src_event_id, r.dst_event_id, r.kind.value))
    return relations
