"""Detection record schema: types, parsing, serialization, validation.

The pipeline is decoupled from ML inference through a newline-delimited
record stream: one JSON metadata line followed by one JSON line per frame
(full field reference in ``docs/ingest_schema.md``). Everything downstream
operates on the dataclasses defined here and never touches raw video.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Iterable, Union

logger = logging.getLogger(__name__)

OBJECT_SOURCES = ("detector", "segmentation")

Stream = Union[IO[bytes], IO[str], str, Path]


class ParseError(ValueError):
    """Malformed input record. Carries the 1-based line number."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class SchemaError(ValueError):
    """Structural violation of the record stream (bad metadata, duplicate frames)."""


class ConfigError(ValueError):
    """Pipeline configuration value outside its documented contract."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, corners (x1, y1) <= (x2, y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    @property
    def diagonal(self) -> float:
        return (self.width**2 + self.height**2) ** 0.5

    def is_well_formed(self) -> bool:
        return self.x1 <= self.x2 and self.y1 <= self.y2 and self.x1 >= 0 and self.y1 >= 0

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class VideoMeta:
    """Per-video metadata; ``scene_label`` carries the scene-classifier answer."""

    video_id: str
    fps: float
    width: int
    height: int
    scene_label: str | None = None


@dataclass(frozen=True)
class PersonDetection:
    track_id: int
    bbox: BBox
    mean_depth: float | None = None
    pixel_samples: tuple[tuple[float, float, float], ...] | None = None


@dataclass(frozen=True)
class ActionDetection:
    track_id: int
    label: str
    confidence: float
    bbox: BBox


@dataclass(frozen=True)
class ObjectDetection:
    label: str
    bbox: BBox
    mean_depth: float | None = None
    source: str = "detector"


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    persons: tuple[PersonDetection, ...] = ()
    actions: tuple[ActionDetection, ...] = ()
    objects: tuple[ObjectDetection, ...] = ()


@dataclass(frozen=True)
class PipelineConfig:
    """Every numeric threshold of the pipeline, in one place.

    Defaults marked with the source value in docs/config.md; all of them can
    be overridden from a config file or ``--set key=value`` on the CLI.
    """

    short_term_max_gap: int = 10
    short_term_min_iou: float = 0.4
    reid_similarity_threshold: float = 0.85
    hsv_bins: tuple[int, int, int] = (8, 4, 4)
    action_min_confidence: float = 0.75
    actions_per_frame: int = 2
    topk_per_person: bool = False
    vote_radius: int = 5
    vote_min_count: int = 5
    bbox_enlarge_fraction: float = 0.10
    object_min_iou: float = 0.05
    depth_diff_threshold: float = 0.10
    object_min_presence: float = 0.10
    event_unify_max_gap: int = 30
    spatial_ratio_threshold: float = 0.5
    spatial_min_overlap_fraction: float = 0.75
    same_time_tolerance: int = 10
    next_max_gap: int = 150
    pixel_sample_cap: int = 2048
    reduce_next_edges: bool = False

    def validated(self) -> "PipelineConfig":
        """Return self after checking every invariant; raise ConfigError otherwise."""
        fractions = {
            "short_term_min_iou": self.short_term_min_iou,
            "reid_similarity_threshold": self.reid_similarity_threshold,
            "action_min_confidence": self.action_min_confidence,
            "bbox_enlarge_fraction": self.bbox_enlarge_fraction,
            "object_min_iou": self.object_min_iou,
            "depth_diff_threshold": self.depth_diff_threshold,
            "object_min_presence": self.object_min_presence,
            "spatial_min_overlap_fraction": self.spatial_min_overlap_fraction,
        }
        for name, value in fractions.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        frame_counts = {
            "short_term_max_gap": self.short_term_max_gap,
            "vote_radius": self.vote_radius,
            "vote_min_count": self.vote_min_count,
            "event_unify_max_gap": self.event_unify_max_gap,
            "same_time_tolerance": self.same_time_tolerance,
            "next_max_gap": self.next_max_gap,
        }
        for name, value in frame_counts.items():
            if value < 0:
                raise ConfigError(f"{name} must be >= 0, got {value}")
        if self.actions_per_frame < 1:
            raise ConfigError(f"actions_per_frame must be >= 1, got {self.actions_per_frame}")
        if self.spatial_ratio_threshold < 0:
            raise ConfigError("spatial_ratio_threshold must be >= 0")
        if len(self.hsv_bins) != 3 or any(b < 1 for b in self.hsv_bins):
            raise ConfigError(f"hsv_bins must be three integers >= 1, got {self.hsv_bins}")
        if self.pixel_sample_cap < 1:
            raise ConfigError("pixel_sample_cap must be >= 1")
        return self

    def config_hash(self) -> str:
        """Stable hash of the effective configuration, recorded in run manifests."""
        payload = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        """Load ``key = value`` lines (# comments allowed) over the defaults."""
        overrides: dict[str, str] = {}
        for raw_line in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {raw_line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            overrides[key] = value
        return cls().with_overrides(overrides)

    def with_overrides(self, overrides: dict[str, str]) -> "PipelineConfig":
        """Apply string-valued overrides (config file or CLI --set) and re-validate."""
        known = {f.name: f for f in dataclasses.fields(self)}
        parsed: dict[str, Any] = {}
        for key, raw in overrides.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            parsed[key] = _coerce_config_value(key, raw)
        return dataclasses.replace(self, **parsed).validated()


def _coerce_config_value(key: str, raw: str) -> Any:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        raise ConfigError(f"cannot parse value for {key!r}: {raw!r}") from None
    if key == "hsv_bins":
        if not isinstance(value, list):
            raise ConfigError(f"hsv_bins expects a list like [8, 4, 4], got {raw!r}")
        return tuple(int(v) for v in value)
    if key in ("topk_per_person", "reduce_next_edges"):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} expects true/false, got {raw!r}")
        return value
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{key} expects a number, got {raw!r}")
    return value


# ---------------------------------------------------------------------------
# Parsing / serialization
# ---------------------------------------------------------------------------

_META_FIELDS = {"video_id", "fps", "width", "height", "scene_label"}
_FRAME_FIELDS = {"frame_index", "persons", "actions", "objects"}
_PERSON_FIELDS = {"track_id", "bbox", "mean_depth", "pixel_samples"}
_ACTION_FIELDS = {"track_id", "label", "confidence", "bbox"}
_OBJECT_FIELDS = {"label", "bbox", "mean_depth", "source"}


def _check_unknown(data: dict, allowed: set[str], what: str, line_number: int, strict: bool) -> None:
    unknown = set(data) - allowed
    if not unknown:
        return
    message = f"unknown {what} field(s) {sorted(unknown)}"
    if strict:
        raise ParseError(message, line_number)
    logger.debug("line %d: ignoring %s", line_number, message)


def _bbox_from_value(value: Any, line_number: int) -> BBox:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ParseError(f"bbox must be a 4-element list, got {value!r}", line_number)
    try:
        coords = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ParseError(f"bbox has non-numeric coordinates: {value!r}", line_number) from None
    return BBox(*coords)


def _person_from_dict(data: dict, line_number: int, strict: bool) -> PersonDetection:
    _check_unknown(data, _PERSON_FIELDS, "person", line_number, strict)
    try:
        track_id = int(data["track_id"])
        bbox = _bbox_from_value(data["bbox"], line_number)
    except KeyError as exc:
        raise ParseError(f"person missing field {exc}", line_number) from None
    samples = data.get("pixel_samples")
    parsed_samples = None
    if samples is not None:
        parsed_samples = tuple(
            (float(s[0]), float(s[1]), float(s[2])) for s in samples
        )
    depth = data.get("mean_depth")
    return PersonDetection(
        track_id=track_id,
        bbox=bbox,
        mean_depth=None if depth is None else float(depth),
        pixel_samples=parsed_samples,
    )


def _action_from_dict(data: dict, line_number: int, strict: bool) -> ActionDetection:
    _check_unknown(data, _ACTION_FIELDS, "action", line_number, strict)
    try:
        return ActionDetection(
            track_id=int(data["track_id"]),
            label=str(data["label"]),
            confidence=float(data["confidence"]),
            bbox=_bbox_from_value(data["bbox"], line_number),
        )
    except KeyError as exc:
        raise ParseError(f"action missing field {exc}", line_number) from None


def _object_from_dict(data: dict, line_number: int, strict: bool) -> ObjectDetection:
    _check_unknown(data, _OBJECT_FIELDS, "object", line_number, strict)
    try:
        label = str(data["label"])
        bbox = _bbox_from_value(data["bbox"], line_number)
    except KeyError as exc:
        raise ParseError(f"object missing field {exc}", line_number) from None
    source = data.get("source", "detector")
    if source not in OBJECT_SOURCES:
        raise ParseError(f"object source must be one of {OBJECT_SOURCES}, got {source!r}", line_number)
    depth = data.get("mean_depth")
    return ObjectDetection(
        label=label,
        bbox=bbox,
        mean_depth=None if depth is None else float(depth),
        source=source,
    )


def _frame_from_dict(data: dict, line_number: int, strict: bool) -> FrameRecord:
    _check_unknown(data, _FRAME_FIELDS, "frame", line_number, strict)
    if "frame_index" not in data:
        raise ParseError("frame record missing frame_index", line_number)
    frame_index = data["frame_index"]
    if not isinstance(frame_index, int) or isinstance(frame_index, bool) or frame_index < 0:
        raise ParseError(f"frame_index must be a non-negative integer, got {frame_index!r}", line_number)
    return FrameRecord(
        frame_index=frame_index,
        persons=tuple(_person_from_dict(p, line_number, strict) for p in data.get("persons", [])),
        actions=tuple(_action_from_dict(a, line_number, strict) for a in data.get("actions", [])),
        objects=tuple(_object_from_dict(o, line_number, strict) for o in data.get("objects", [])),
    )


def _meta_from_dict(data: dict, strict: bool) -> VideoMeta:
    _check_unknown(data, _META_FIELDS, "metadata", 1, strict)
    try:
        meta = VideoMeta(
            video_id=str(data["video_id"]),
            fps=float(data["fps"]),
            width=int(data["width"]),
            height=int(data["height"]),
            scene_label=data.get("scene_label"),
        )
    except KeyError as exc:
        raise SchemaError(f"metadata record missing field {exc}") from None
    if meta.fps <= 0 or meta.width <= 0 or meta.height <= 0:
        raise SchemaError(
            f"metadata must have positive fps/width/height, got fps={meta.fps} "
            f"width={meta.width} height={meta.height}"
        )
    return meta


def _iter_lines(stream: Stream) -> Iterable[str]:
    if isinstance(stream, (str, Path)):
        with open(stream, "r", encoding="utf-8") as handle:
            yield from handle
        return
    for line in stream:
        if isinstance(line, bytes):
            yield line.decode("utf-8")
        else:
            yield line


def parse_video_record(stream: Stream, strict: bool = False) -> tuple[VideoMeta, list[FrameRecord]]:
    """Parse a detection record stream into metadata plus frame records.

    The first non-blank line must be the metadata record. In lenient mode
    (default) malformed frame lines are skipped with a warning; strict mode
    raises :class:`ParseError` with the offending line number. Frames are
    returned sorted by ``frame_index``; out-of-order input is tolerated with
    a warning, duplicates are a :class:`SchemaError` in both modes.
    """
    meta: VideoMeta | None = None
    frames: list[FrameRecord] = []
    seen_indexes: dict[int, int] = {}
    out_of_order = False
    last_index = -1

    for line_number, raw_line in enumerate(_iter_lines(stream), start=1):
        line = raw_line.strip()
        if not line:
            continue
        if meta is None:
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid metadata JSON: {exc.msg}", line_number) from None
            meta = _meta_from_dict(data, strict)
            continue
        try:
            data = json.loads(line)
            frame = _frame_from_dict(data, line_number, strict)
        except ParseError:
            if strict:
                raise
            logger.warning("skipping malformed record at line %d", line_number)
            continue
        except json.JSONDecodeError as exc:
            if strict:
                raise ParseError(f"invalid JSON: {exc.msg}", line_number) from None
            logger.warning("skipping malformed record at line %d", line_number)
            continue
        if frame.frame_index in seen_indexes:
            raise SchemaError(
                f"duplicate frame_index {frame.frame_index} at line {line_number} "
                f"(first seen at line {seen_indexes[frame.frame_index]})"
            )
        seen_indexes[frame.frame_index] = line_number
        if frame.frame_index < last_index:
            out_of_order = True
        last_index = max(last_index, frame.frame_index)
        frames.append(frame)

    if meta is None:
        raise SchemaError("record stream has no metadata record")
    if out_of_order:
        logger.warning("frame records out of order in %s; sorting by frame_index", meta.video_id)
        frames.sort(key=lambda f: f.frame_index)
    return meta, frames


def _person_to_dict(person: PersonDetection) -> dict:
    data: dict[str, Any] = {"track_id": person.track_id, "bbox": person.bbox.as_list()}
    if person.mean_depth is not None:
        data["mean_depth"] = person.mean_depth
    if person.pixel_samples is not None:
        data["pixel_samples"] = [list(s) for s in person.pixel_samples]
    return data


def _action_to_dict(action: ActionDetection) -> dict:
    return {
        "track_id": action.track_id,
        "label": action.label,
        "confidence": action.confidence,
        "bbox": action.bbox.as_list(),
    }


def _object_to_dict(obj: ObjectDetection) -> dict:
    data: dict[str, Any] = {"label": obj.label, "bbox": obj.bbox.as_list(), "source": obj.source}
    if obj.mean_depth is not None:
        data["mean_depth"] = obj.mean_depth
    return data


def meta_to_dict(meta: VideoMeta) -> dict:
    data: dict[str, Any] = {
        "video_id": meta.video_id,
        "fps": meta.fps,
        "width": meta.width,
        "height": meta.height,
    }
    if meta.scene_label is not None:
        data["scene_label"] = meta.scene_label
    return data


def frame_to_dict(frame: FrameRecord) -> dict:
    return {
        "frame_index": frame.frame_index,
        "persons": [_person_to_dict(p) for p in frame.persons],
        "actions": [_action_to_dict(a) for a in frame.actions],
        "objects": [_object_to_dict(o) for o in frame.objects],
    }


def serialize_video_record(meta: VideoMeta, frames: Iterable[FrameRecord]) -> str:
    """Inverse of :func:`parse_video_record` on the documented schema."""
    lines = [json.dumps(meta_to_dict(meta), sort_keys=True)]
    lines.extend(json.dumps(frame_to_dict(f), sort_keys=True) for f in frames)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

SEVERITY_WARN = "warn"
SEVERITY_ERROR = "error"


@dataclass(frozen=True)
class ValidationIssue:
    severity: str
    code: str
    message: str
    frame_index: int | None = None


@dataclass
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    @property
    def errors(self) -> list[ValidationIssue]:
        return [i for i in self.issues if i.severity == SEVERITY_ERROR]

    @property
    def warnings(self) -> list[ValidationIssue]:
        return [i for i in self.issues if i.severity == SEVERITY_WARN]

    @property
    def ok(self) -> bool:
        return not self.errors

    def summary(self) -> str:
        if not self.issues:
            return "validation clean"
        lines = [f"{len(self.errors)} error(s), {len(self.warnings)} warning(s)"]
        for issue in self.issues:
            where = "" if issue.frame_index is None else f" [frame {issue.frame_index}]"
            lines.append(f"  {issue.severity}: {issue.code}{where}: {issue.message}")
        return "\n".join(lines)


def _check_bbox(report: list[ValidationIssue], bbox: BBox, meta: VideoMeta, frame_index: int, what: str) -> None:
    if not bbox.is_well_formed():
        report.append(
            ValidationIssue(SEVERITY_ERROR, "bbox_invalid", f"{what} bbox {bbox.as_list()} is malformed", frame_index)
        )
        return
    if bbox.x2 > meta.width or bbox.y2 > meta.height:
        report.append(
            ValidationIssue(
                SEVERITY_WARN,
                "bbox_out_of_frame",
                f"{what} bbox {bbox.as_list()} exceeds {meta.width}x{meta.height} frame",
                frame_index,
            )
        )


def validate(meta: VideoMeta, frames: list[FrameRecord], cfg: PipelineConfig) -> ValidationReport:
    """Check parsed records against the schema contract; never raises.

    Errors block the pipeline unless forced; warnings do not. The function is
    pure: identical inputs produce identical reports.
    """
    issues: list[ValidationIssue] = []
    previous_index = -1
    for frame in frames:
        fi = frame.frame_index
        if fi <= previous_index:
            issues.append(
                ValidationIssue(SEVERITY_ERROR, "frame_order", f"frame_index {fi} not strictly increasing", fi)
            )
        previous_index = fi

        track_ids: set[int] = set()
        for person in frame.persons:
            if person.track_id in track_ids:
                issues.append(
                    ValidationIssue(
                        SEVERITY_WARN, "duplicate_track", f"track_id {person.track_id} listed twice", fi
                    )
                )
            track_ids.add(person.track_id)
            _check_bbox(issues, person.bbox, meta, fi, f"person {person.track_id}")
            if person.mean_depth is not None and not 0.0 <= person.mean_depth <= 1.0:
                issues.append(
                    ValidationIssue(
                        SEVERITY_ERROR, "depth_range", f"person {person.track_id} mean_depth {person.mean_depth}", fi
                    )
                )
            if person.pixel_samples is not None:
                for h, s, v in person.pixel_samples:
                    # hue 360 is tolerated and wraps to 0 when binned
                    if not (0.0 <= h <= 360.0 and 0.0 <= s <= 1.0 and 0.0 <= v <= 1.0):
                        issues.append(
                            ValidationIssue(
                                SEVERITY_ERROR,
                                "sample_range",
                                f"person {person.track_id} pixel sample ({h}, {s}, {v}) out of range",
                                fi,
                            )
                        )
                        break
                if len(person.pixel_samples) > cfg.pixel_sample_cap:
                    issues.append(
                        ValidationIssue(
                            SEVERITY_WARN,
                            "sample_cap",
                            f"person {person.track_id} carries {len(person.pixel_samples)} samples "
                            f"(cap {cfg.pixel_sample_cap})",
                            fi,
                        )
                    )

        for action in frame.actions:
            if not action.label:
                issues.append(ValidationIssue(SEVERITY_ERROR, "empty_label", "action with empty label", fi))
            if not 0.0 <= action.confidence <= 1.0:
                issues.append(
                    ValidationIssue(
                        SEVERITY_ERROR,
                        "confidence_range",
                        f"action {action.label!r} confidence {action.confidence} outside [0, 1]",
                        fi,
                    )
                )
            if action.track_id not in track_ids:
                issues.append(
                    ValidationIssue(
                        SEVERITY_WARN,
                        "orphan_action",
                        f"action {action.label!r} references track_id {action.track_id} with no person",
                        fi,
                    )
                )
            _check_bbox(issues, action.bbox, meta, fi, f"action {action.label!r}")

        for obj in frame.objects:
            if not obj.label:
                issues.append(ValidationIssue(SEVERITY_ERROR, "empty_label", "object with empty label", fi))
            if obj.mean_depth is not None and not 0.0 <= obj.mean_depth <= 1.0:
                issues.append(
                    ValidationIssue(SEVERITY_ERROR, "depth_range", f"object {obj.label!r} mean_depth {obj.mean_depth}", fi)
                )
            _check_bbox(issues, obj.bbox, meta, fi, f"object {obj.label!r}")

    return ValidationReport(issues)
