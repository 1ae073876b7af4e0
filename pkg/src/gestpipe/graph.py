"""Graph assembly, temporal sorting, actor grouping, serialization, DOT export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import groupby
from pathlib import Path

from gestpipe.events import Event
from gestpipe.ingest import BBox, VideoMeta, meta_to_dict
from gestpipe.relations import Relation, RelationKind


class GraphConstructionError(ValueError):
    """Referential integrity violation while assembling a graph."""


@dataclass
class GestGraph:
    """Events as nodes, spatial/temporal relations as typed edges."""

    events: list[Event]
    relations: list[Relation]
    meta: VideoMeta
    events_by_id: dict[int, Event] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.events_by_id = {e.event_id: e for e in self.events}


def build_graph(events: list[Event], relations: list[Relation], meta: VideoMeta) -> GestGraph:
    """Assemble a graph, rejecting duplicate node ids and dangling edges."""
    ids = [e.event_id for e in events]
    if len(set(ids)) != len(ids):
        raise GraphConstructionError("duplicate event ids")
    id_set = set(ids)
    for relation in relations:
        if relation.src_event_id not in id_set or relation.dst_event_id not in id_set:
            raise GraphConstructionError(
                f"edge {relation.src_event_id}->{relation.dst_event_id} references a missing event"
            )
        if relation.src_event_id == relation.dst_event_id:
            raise GraphConstructionError(f"self edge on event {relation.src_event_id}")
    return GestGraph(events=list(events), relations=list(relations), meta=meta)


def temporal_sort(graph: GestGraph) -> list[int]:
    """Event ids by start frame; ties by end frame, person id, action label."""
    ordered = sorted(
        graph.events,
        key=lambda e: (e.start_frame, e.end_frame, e.person_id, e.action_label),
    )
    return [e.event_id for e in ordered]


@dataclass(frozen=True)
class ActionGroup:
    """Maximal run of consecutive same-actor events in the sorted order."""

    person_id: int
    event_ids: tuple[int, ...]
    group_start_frame: int


def group_by_actor(sorted_ids: list[int], graph: GestGraph) -> list[ActionGroup]:
    """Partition the temporally sorted events into per-actor runs."""
    groups = []
    for person_id, run in groupby(sorted_ids, key=lambda eid: graph.events_by_id[eid].person_id):
        ids = tuple(run)
        groups.append(
            ActionGroup(
                person_id=person_id,
                event_ids=ids,
                group_start_frame=graph.events_by_id[ids[0]].start_frame,
            )
        )
    return groups


def reduce_next_edges(graph: GestGraph) -> GestGraph:
    """Optional pass dropping transitively implied ``next`` edges.

    An edge u->w is removed when some chain of next edges u->...->w exists
    through an intermediate node. Other edge kinds are untouched.
    """
    next_edges = [r for r in graph.relations if r.kind is RelationKind.NEXT]
    successors: dict[int, set[int]] = {}
    for relation in next_edges:
        successors.setdefault(relation.src_event_id, set()).add(relation.dst_event_id)

    def reachable_via_intermediate(src: int, dst: int) -> bool:
        stack = [mid for mid in successors.get(src, ()) if mid != dst]
        seen = set(stack)
        while stack:
            node = stack.pop()
            for nxt in successors.get(node, ()):
                if nxt == dst:
                    return True
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return False

    kept = [
        r
        for r in graph.relations
        if r.kind is not RelationKind.NEXT
        or not reachable_via_intermediate(r.src_event_id, r.dst_event_id)
    ]
    return GestGraph(events=graph.events, relations=kept, meta=graph.meta)


# ---------------------------------------------------------------------------
# Structured dump (the on-disk handoff between CLI stages)
# ---------------------------------------------------------------------------


def _event_to_dict(event: Event) -> dict:
    return {
        "event_id": event.event_id,
        "person_id": event.person_id,
        "action_label": event.action_label,
        "start_frame": event.start_frame,
        "end_frame": event.end_frame,
        "per_frame_bboxes": {str(k): v.as_list() for k, v in sorted(event.per_frame_bboxes.items())},
        "candidate_objects": [[label, presence] for label, presence in event.candidate_objects],
        "object_frame_counts": dict(sorted(event.object_frame_counts.items())),
        "observed_frames": event.observed_frames,
        "observation_count": event.observation_count,
    }


def _event_from_dict(data: dict) -> Event:
    return Event(
        event_id=data["event_id"],
        person_id=data["person_id"],
        action_label=data["action_label"],
        start_frame=data["start_frame"],
        end_frame=data["end_frame"],
        per_frame_bboxes={int(k): BBox(*v) for k, v in data.get("per_frame_bboxes", {}).items()},
        candidate_objects=[(label, presence) for label, presence in data.get("candidate_objects", [])],
        object_frame_counts=dict(data.get("object_frame_counts", {})),
        observed_frames=data.get("observed_frames", 0),
        observation_count=data.get("observation_count", 0),
    )


def graph_to_json(graph: GestGraph) -> str:
    payload = {
        "meta": meta_to_dict(graph.meta),
        "events": [_event_to_dict(e) for e in graph.events],
        "relations": [
            {
                "src": r.src_event_id,
                "dst": r.dst_event_id,
                "kind": r.kind.value,
                "evidence": r.evidence,
            }
            for r in graph.relations
        ],
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def graph_from_json(text: str) -> GestGraph:
    data = json.loads(text)
    meta_data = data["meta"]
    meta = VideoMeta(
        video_id=meta_data["video_id"],
        fps=meta_data["fps"],
        width=meta_data["width"],
        height=meta_data["height"],
        scene_label=meta_data.get("scene_label"),
    )
    events = [_event_from_dict(e) for e in data.get("events", [])]
    relations = [
        Relation(r["src"], r["dst"], RelationKind(r["kind"]), r["evidence"])
        for r in data.get("relations", [])
    ]
    return build_graph(events, relations, meta)


def load_graph(path: str | Path) -> GestGraph:
    return graph_from_json(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------

_EDGE_STYLE = {
    RelationKind.NEXT: "solid",
    RelationKind.SAME_TIME: "dashed",
    RelationKind.MEANWHILE: "dotted",
    RelationKind.SPACE_CLOSE: "bold",
}
_SYMMETRIC_KINDS = frozenset({RelationKind.SAME_TIME, RelationKind.MEANWHILE, RelationKind.SPACE_CLOSE})


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(graph: GestGraph) -> str:
    """Deterministic DOT digraph: one node per event, styled edges per kind."""
    lines = ["digraph gest {"]
    for event in sorted(graph.events, key=lambda e: e.event_id):
        label = f"person {event.person_id}: {event.action_label} [{event.start_frame}-{event.end_frame}]"
        lines.append(f"  e{event.event_id} [label={_quote(label)}, shape=box];")
    for relation in sorted(graph.relations, key=lambda r: (r.src_event_id, r.dst_event_id, r.kind.value)):
        attrs = [f"label={_quote(relation.kind.value)}", f"style={_EDGE_STYLE[relation.kind]}"]
        if relation.kind in _SYMMETRIC_KINDS:
            attrs.append("dir=none")
        lines.append(f"  e{relation.src_event_id} -> e{relation.dst_event_id} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
