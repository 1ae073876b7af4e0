"""Deterministic textual rendering of the event graph (the proto-language).

The output is intentionally plain: one statement per event, grouped by actor,
with times in seconds and candidate objects offered as a menu for the language
model to resolve. The clause templates are the module's contract and are
written out in docs/proto_grammar.md.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from gestpipe.events import Event
from gestpipe.graph import ActionGroup, GestGraph
from gestpipe.relations import Relation, RelationKind

_IRREGULAR_THIRD_PERSON = {"be": "is", "have": "has", "do": "does", "go": "goes"}
_ES_ENDINGS = ("s", "x", "z", "ch", "sh", "o")
_VOWELS = "aeiou"

# rendering order of relation suffixes on a statement
_KIND_PRIORITY = {
    RelationKind.SAME_TIME: 0,
    RelationKind.MEANWHILE: 1,
    RelationKind.NEXT: 2,
    RelationKind.SPACE_CLOSE: 3,
}
_KIND_MARKER = {
    RelationKind.SAME_TIME: "at the same time as",
    RelationKind.MEANWHILE: "while",
    RelationKind.NEXT: "after",
}


def normalize_label(label: str) -> str:
    """Lowercase, underscores to spaces, collapsed whitespace."""
    return " ".join(label.replace("_", " ").lower().split())


def head_verb(label: str) -> str:
    """First token of the normalized action label.

    Detector vocabularies qualify verbs with example objects ("read book");
    the qualifier is dropped here because involved objects travel through the
    candidate menus instead.
    """
    normalized = normalize_label(label)
    return normalized.split(" ", 1)[0] if normalized else "acts"


def third_person(verb: str) -> str:
    """Present third-person singular via plain orthographic suffix rules."""
    if verb in _IRREGULAR_THIRD_PERSON:
        return _IRREGULAR_THIRD_PERSON[verb]
    if verb.endswith(_ES_ENDINGS):
        return verb + "es"
    if len(verb) > 1 and verb.endswith("y") and verb[-2] not in _VOWELS:
        return verb[:-1] + "ies"
    return verb + "s"


@dataclass
class ProtoDocument:
    """Ordered textual form of a graph plus scene context.

    ``statements`` holds exactly one clause per event; ``groups`` records the
    (person_id, first statement index, one-past-last index) block structure;
    ``statement_events`` maps each statement back to its event id.
    """

    scene_line: str | None
    statements: list[str]
    object_menus: dict[int, tuple[str, ...]] = field(default_factory=dict)
    statement_events: list[int] = field(default_factory=list)
    groups: list[tuple[int, int, int]] = field(default_factory=list)

    def to_text(self) -> str:
        lines = []
        if self.scene_line is not None:
            lines.append(self.scene_line)
        for person_id, start, end in self.groups:
            lines.append(f"Person {person_id}:")
            lines.extend(self.statements[start:end])
        return "\n".join(lines) + "\n"

    def to_sidecar_json(self) -> str:
        payload = {
            "scene_line": self.scene_line,
            "statements": self.statements,
            "statement_events": self.statement_events,
            "object_menus": {str(k): list(v) for k, v in sorted(self.object_menus.items())},
            "groups": [list(g) for g in self.groups],
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _event_sort_key(event: Event) -> tuple:
    return (event.start_frame, event.end_frame, event.person_id, event.action_label, event.event_id)


def describe_event(event: Event, incident: list[tuple[Relation, Event]], fps: float) -> str:
    """One clause: actor, action, time span, object menu, relation suffixes.

    ``incident`` carries the relations this statement should voice along with
    the event on the other end of each edge.
    """
    start_s = event.start_frame / fps
    end_s = event.end_frame / fps
    verb = third_person(head_verb(event.action_label))
    parts = [f"person {event.person_id} {verb} (from {start_s:.1f}s to {end_s:.1f}s)"]

    if event.candidate_objects:
        menu = sorted(event.candidate_objects, key=lambda c: (-c[1], c[0]))
        parts.append("possibly involving: " + " | ".join(label for label, _ in menu))

    ordered = sorted(
        incident,
        key=lambda pair: (_KIND_PRIORITY[pair[0].kind], _event_sort_key(pair[1])),
    )
    for relation, other in ordered:
        if relation.kind is RelationKind.SPACE_CLOSE:
            parts.append(f"close to person {other.person_id}")
        else:
            other_verb = third_person(head_verb(other.action_label))
            parts.append(f"{_KIND_MARKER[relation.kind]} person {other.person_id} {other_verb}")
    return ", ".join(parts) + "."


def _incident_map(graph: GestGraph) -> dict[int, list[tuple[Relation, Event]]]:
    """Attach each relation to the statement of its temporally later endpoint."""
    incident: dict[int, list[tuple[Relation, Event]]] = {}
    for relation in graph.relations:
        src = graph.events_by_id[relation.src_event_id]
        dst = graph.events_by_id[relation.dst_event_id]
        if relation.kind is RelationKind.SPACE_CLOSE:
            if src.person_id == dst.person_id:
                continue  # an actor is trivially near their own simultaneous action
            later, other = (dst, src) if _event_sort_key(src) <= _event_sort_key(dst) else (src, dst)
        else:
            later, other = dst, src
        incident.setdefault(later.event_id, []).append((relation, other))
    return incident


def render_proto(groups: list[ActionGroup], graph: GestGraph, scene: str | None = None) -> ProtoDocument:
    """Render actor groups into the full proto document.

    Pure function of (graph, groups, scene): identical input yields
    byte-identical text.
    """
    incident = _incident_map(graph)
    fps = graph.meta.fps
    statements: list[str] = []
    statement_events: list[int] = []
    object_menus: dict[int, tuple[str, ...]] = {}
    spans: list[tuple[int, int, int]] = []
    for group in groups:
        start = len(statements)
        for event_id in group.event_ids:
            event = graph.events_by_id[event_id]
            statements.append(describe_event(event, incident.get(event_id, []), fps))
            statement_events.append(event_id)
            if event.candidate_objects:
                menu = sorted(event.candidate_objects, key=lambda c: (-c[1], c[0]))
                object_menus[len(statements) - 1] = tuple(label for label, _ in menu)
        spans.append((group.person_id, start, len(statements)))
    scene_line = f"Scene: {scene}." if scene else None
    return ProtoDocument(
        scene_line=scene_line,
        statements=statements,
        object_menus=object_menus,
        statement_events=statement_events,
        groups=spans,
    )
