"""Object association, event aggregation, and event unification.

An event is one actor performing one action over a contiguous frame span.
Candidate objects stay deliberately over-complete: every object that was near
the actor often enough is kept, and the final pick is deferred to the
description model downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import groupby

from gestpipe.actions import ActionObservation
from gestpipe.identity import iou
from gestpipe.ingest import BBox, FrameRecord, PersonDetection, PipelineConfig, VideoMeta

PERSON_CLASS_LABELS = frozenset({"person"})


@dataclass
class Event:
    """Actor + action over [start_frame, end_frame] with locations and objects.

    ``object_frame_counts`` keeps the raw per-label frame counts so presence
    fractions can be recomputed exactly when events merge; ``candidate_objects``
    is the thresholded view, sorted by descending presence then label.
    """

    event_id: int
    person_id: int
    action_label: str
    start_frame: int
    end_frame: int
    per_frame_bboxes: dict[int, BBox] = field(default_factory=dict)
    candidate_objects: list[tuple[str, float]] = field(default_factory=list)
    object_frame_counts: dict[str, int] = field(default_factory=dict)
    observed_frames: int = 0
    observation_count: int = 0

    @property
    def span(self) -> int:
        return self.end_frame - self.start_frame + 1

    @property
    def density(self) -> float:
        return self.observed_frames / self.span


def enlarge_bbox(bbox: BBox, fraction: float, width: int, height: int) -> BBox:
    """Grow a box by ``fraction`` of its size per side, clamped to the frame."""
    dx = bbox.width * fraction
    dy = bbox.height * fraction
    return BBox(
        x1=max(0.0, bbox.x1 - dx),
        y1=max(0.0, bbox.y1 - dy),
        x2=min(float(width), bbox.x2 + dx),
        y2=min(float(height), bbox.y2 + dy),
    )


def boxes_touch(a: BBox, b: BBox) -> bool:
    """True when the closed boxes intersect or share a boundary point."""
    return min(a.x2, b.x2) >= max(a.x1, b.x1) and min(a.y2, b.y2) >= max(a.y1, b.y1)


def associate_objects(
    action: ActionObservation,
    frame: FrameRecord,
    person: PersonDetection,
    meta: VideoMeta,
    cfg: PipelineConfig,
) -> list[str]:
    """Candidate object labels for one action in one frame.

    The person box is slightly enlarged to capture the surroundings; objects
    must touch the enlarged box, clear the IoU floor against it, and — when
    both depths are present — sit within ``depth_diff_threshold`` of the
    person's depth. Person-class objects are excluded. The result is a sorted
    set of labels, independent of the input object order.
    """
    enlarged = enlarge_bbox(person.bbox, cfg.bbox_enlarge_fraction, meta.width, meta.height)
    labels: set[str] = set()
    for obj in frame.objects:
        if obj.label.lower() in PERSON_CLASS_LABELS:
            continue
        if not boxes_touch(obj.bbox, enlarged):
            continue
        if iou(obj.bbox, enlarged) < cfg.object_min_iou:
            continue
        if (
            person.mean_depth is not None
            and obj.mean_depth is not None
            and abs(person.mean_depth - obj.mean_depth) > cfg.depth_diff_threshold
        ):
            continue
        labels.add(obj.label)
    return sorted(labels)


def _finalize_candidates(counts: dict[str, int], span: int, min_presence: float) -> list[tuple[str, float]]:
    candidates = []
    for label in sorted(counts):
        presence = counts[label] / span
        if presence >= min_presence:
            candidates.append((label, presence))
    candidates.sort(key=lambda c: (-c[1], c[0]))
    return candidates


def aggregate_events(observations: list[ActionObservation], cfg: PipelineConfig) -> list[Event]:
    """Fold the voted stream into events over maximal consecutive-frame runs.

    A run breaks as soon as the same (person, label) pair skips a frame;
    larger gaps are the business of :func:`unify_events`. Object labels are
    unioned per frame and thresholded by ``object_min_presence`` over the run
    span. Events come back chronologically ordered with sequential ids.
    """
    ordered = sorted(
        observations,
        key=lambda o: (o.person_id, o.label, o.frame_index, -o.confidence, o.bbox.as_list()),
    )
    events: list[Event] = []
    for (person_id, label), group_iter in groupby(ordered, key=lambda o: (o.person_id, o.label)):
        group = list(group_iter)
        per_frame: dict[int, list[ActionObservation]] = {}
        for obs in group:
            per_frame.setdefault(obs.frame_index, []).append(obs)
        frames = sorted(per_frame)

        run: list[int] = []
        for frame_index in frames:
            if run and frame_index - run[-1] > 1:
                events.append(_build_event(person_id, label, run, per_frame, cfg))
                run = []
            run.append(frame_index)
        if run:
            events.append(_build_event(person_id, label, run, per_frame, cfg))

    events.sort(key=lambda e: (e.start_frame, e.end_frame, e.person_id, e.action_label))
    for event_id, event in enumerate(events):
        event.event_id = event_id
    return events


def _build_event(
    person_id: int,
    label: str,
    run: list[int],
    per_frame: dict[int, list[ActionObservation]],
    cfg: PipelineConfig,
) -> Event:
    counts: dict[str, int] = {}
    bboxes: dict[int, BBox] = {}
    observation_count = 0
    for frame_index in run:
        frame_obs = per_frame[frame_index]
        observation_count += len(frame_obs)
        bboxes[frame_index] = frame_obs[0].bbox  # most confident first (pre-sorted)
        frame_labels = {obj for obs in frame_obs for obj in obs.objects}
        for obj_label in frame_labels:
            counts[obj_label] = counts.get(obj_label, 0) + 1
    span = run[-1] - run[0] + 1
    return Event(
        event_id=-1,
        person_id=person_id,
        action_label=label,
        start_frame=run[0],
        end_frame=run[-1],
        per_frame_bboxes=bboxes,
        candidate_objects=_finalize_candidates(counts, span, cfg.object_min_presence),
        object_frame_counts=counts,
        observed_frames=len(run),
        observation_count=observation_count,
    )


def unify_events(events: list[Event], cfg: PipelineConfig) -> list[Event]:
    """Merge fragmented events of the same actor and action.

    Two events merge when the later one starts at most ``event_unify_max_gap``
    frames after the earlier one ends; merging repeats left-to-right until no
    pair qualifies. Presence fractions are recomputed over the merged span,
    so gap frames count against every candidate object. Merged events keep the
    earliest constituent's id.
    """
    by_key: dict[tuple[int, str], list[Event]] = {}
    for event in events:
        by_key.setdefault((event.person_id, event.action_label), []).append(event)

    result: list[Event] = []
    for key in sorted(by_key):
        group = sorted(by_key[key], key=lambda e: (e.start_frame, e.end_frame, e.event_id))
        changed = True
        while changed:
            changed = False
            merged: list[Event] = [group[0]]
            for nxt in group[1:]:
                current = merged[-1]
                gap = nxt.start_frame - current.end_frame
                if 0 <= gap <= cfg.event_unify_max_gap:
                    merged[-1] = _merge_pair(current, nxt, cfg)
                    changed = True
                else:
                    merged.append(nxt)
            group = merged
        result.extend(group)

    result.sort(key=lambda e: (e.start_frame, e.end_frame, e.person_id, e.action_label))
    return result


def _merge_pair(a: Event, b: Event, cfg: PipelineConfig) -> Event:
    counts = dict(a.object_frame_counts)
    for label, count in b.object_frame_counts.items():
        counts[label] = counts.get(label, 0) + count
    bboxes = dict(a.per_frame_bboxes)
    bboxes.update(b.per_frame_bboxes)
    start = min(a.start_frame, b.start_frame)
    end = max(a.end_frame, b.end_frame)
    return Event(
        event_id=min(a.event_id, b.event_id),
        person_id=a.person_id,
        action_label=a.action_label,
        start_frame=start,
        end_frame=end,
        per_frame_bboxes=bboxes,
        candidate_objects=_finalize_candidates(counts, end - start + 1, cfg.object_min_presence),
        object_frame_counts=counts,
        observed_frames=a.observed_frames + b.observed_frames,
        observation_count=a.observation_count + b.observation_count,
    )
