"""Frames-to-graph orchestration: identity, actions, events, relations wired in order."""

from __future__ import annotations

import dataclasses
import logging
import time

from gestpipe.actions import (
    ActionObservation,
    filter_stream_by_confidence,
    observations_from_frames,
    temporal_vote,
)
from gestpipe.events import aggregate_events, associate_objects, unify_events
from gestpipe.graph import GestGraph, build_graph, group_by_actor, reduce_next_edges, temporal_sort
from gestpipe.identity import resolve_identities
from gestpipe.ingest import FrameRecord, PipelineConfig, VideoMeta
from gestpipe.protolang import ProtoDocument, render_proto
from gestpipe.relations import build_relations

logger = logging.getLogger(__name__)


def _attach_objects(
    observations: list[ActionObservation],
    frames: list[FrameRecord],
    mapping_frames: dict[int, FrameRecord],
    stable_ids: dict[tuple[int, int], object],
    meta: VideoMeta,
    cfg: PipelineConfig,
) -> list[ActionObservation]:
    attached = []
    for obs in observations:
        frame = mapping_frames[obs.frame_index]
        person = stable_ids.get((obs.frame_index, obs.person_id))
        if person is None:
            attached.append(obs)
            continue
        labels = associate_objects(obs, frame, person, meta, cfg)
        attached.append(dataclasses.replace(obs, objects=tuple(labels)))
    return attached


def build_gest(
    meta: VideoMeta,
    frames: list[FrameRecord],
    cfg: PipelineConfig,
    timings: dict[str, float] | None = None,
) -> GestGraph:
    """Run identity, action filtering, event building, and relations.

    Deterministic: the same (meta, frames, cfg) always produces the same
    graph. Optional ``timings`` dict collects per-stage wall-clock seconds.
    """

    def tick(stage: str, started: float) -> None:
        if timings is not None:
            timings[stage] = timings.get(stage, 0.0) + (time.perf_counter() - started)

    t0 = time.perf_counter()
    mapping, _tracks = resolve_identities(frames, cfg)
    tick("identity", t0)

    t0 = time.perf_counter()
    observations = observations_from_frames(frames, mapping)
    observations = filter_stream_by_confidence(observations, cfg)
    observations = temporal_vote(observations, cfg)
    tick("action_filter", t0)

    t0 = time.perf_counter()
    frames_by_index = {f.frame_index: f for f in frames}
    # per (frame, stable id): the person detection backing object association
    person_lookup: dict[tuple[int, int], object] = {}
    for frame in frames:
        for person in frame.persons:
            stable = mapping.get(person.track_id)
            if stable is not None:
                person_lookup.setdefault((frame.frame_index, stable), person)
    observations = _attach_objects(observations, frames, frames_by_index, person_lookup, meta, cfg)
    events = unify_events(aggregate_events(observations, cfg), cfg)
    tick("events", t0)

    t0 = time.perf_counter()
    relations = build_relations(events, cfg)
    graph = build_graph(events, relations, meta)
    if cfg.reduce_next_edges:
        graph = reduce_next_edges(graph)
    tick("relations", t0)

    logger.info(
        "built graph for %s: %d event(s), %d relation(s)",
        meta.video_id,
        len(graph.events),
        len(graph.relations),
    )
    return graph


def render_graph_description(graph: GestGraph, scene: str | None = None) -> ProtoDocument:
    """Temporal sort, actor grouping, and proto-language rendering of a graph.

    ``scene`` defaults to the video metadata's scene label.
    """
    sorted_ids = temporal_sort(graph)
    groups = group_by_actor(sorted_ids, graph)
    return render_proto(groups, graph, scene if scene is not None else graph.meta.scene_label)
