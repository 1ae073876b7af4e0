"""Per-role vision adapters and their registry.

Each role is a small protocol; implementations register under a name and are
selected by :class:`~gestextract.extract.ExtractorConfig`. The builtin roster
is classical CV (median-background motion for persons, greedy IoU tracking,
displacement-based action labels, color-blob objects, an intensity depth
proxy) so the harness runs without GPU weights. Heavyweight detectors slot in
by registering an adapter with the same surface.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import cv2
import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PersonProposal:
    """One detected person: pixel box plus a foreground mask for sampling."""

    bbox: tuple[float, float, float, float]
    mask: np.ndarray  # uint8, same size as the bbox crop, nonzero = person


@dataclass(frozen=True)
class TrackedPerson:
    track_id: int
    bbox: tuple[float, float, float, float]
    mask: np.ndarray


@dataclass(frozen=True)
class ActionLabel:
    track_id: int
    label: str
    confidence: float
    bbox: tuple[float, float, float, float]


@dataclass(frozen=True)
class ObjectProposal:
    label: str
    bbox: tuple[float, float, float, float]
    source: str  # "detector" | "segmentation"


class PersonDetector(Protocol):
    def prepare(self, sample_frames: list[np.ndarray]) -> None: ...

    def detect(self, frame: np.ndarray) -> list[PersonProposal]: ...


class Tracker(Protocol):
    def update(self, frame_index: int, proposals: list[PersonProposal]) -> list[TrackedPerson]: ...


class ActionClassifier(Protocol):
    def classify(self, frame_index: int, persons: list[TrackedPerson]) -> list[ActionLabel]: ...


class ObjectDetector(Protocol):
    def prepare(self, sample_frames: list[np.ndarray]) -> None: ...

    def detect(self, frame: np.ndarray) -> list[ObjectProposal]: ...


class DepthEstimator(Protocol):
    def prepare(self, sample_frames: list[np.ndarray]) -> None: ...

    def depth_map(self, frame: np.ndarray) -> np.ndarray: ...  # float32 in [0, 1]


class SceneClassifier(Protocol):
    def classify(self, middle_frame: np.ndarray) -> str | None: ...


# ---------------------------------------------------------------------------
# Builtin roster
# ---------------------------------------------------------------------------


class MedianBackgroundPersonDetector:
    """Foreground boxes from differencing against a per-video median background."""

    def __init__(self, diff_threshold: int = 30, min_area_fraction: float = 0.002, max_persons: int = 4):
        self.diff_threshold = diff_threshold
        self.min_area_fraction = min_area_fraction
        self.max_persons = max_persons
        self._background: np.ndarray | None = None

    def prepare(self, sample_frames: list[np.ndarray]) -> None:
        grays = [cv2.cvtColor(f, cv2.COLOR_BGR2GRAY) for f in sample_frames]
        self._background = np.median(np.stack(grays), axis=0).astype(np.uint8)

    def detect(self, frame: np.ndarray) -> list[PersonProposal]:
        if self._background is None:
            raise RuntimeError("prepare() must run before detect()")
        gray = cv2.cvtColor(frame, cv2.COLOR_BGR2GRAY)
        diff = cv2.absdiff(gray, self._background)
        _, mask = cv2.threshold(diff, self.diff_threshold, 255, cv2.THRESH_BINARY)
        mask = cv2.morphologyEx(mask, cv2.MORPH_CLOSE, np.ones((5, 5), np.uint8))
        contours, _ = cv2.findContours(mask, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_SIMPLE)
        min_area = self.min_area_fraction * frame.shape[0] * frame.shape[1]
        boxes = []
        for contour in contours:
            x, y, w, h = cv2.boundingRect(contour)
            if w * h >= min_area:
                boxes.append((float(w * h), x, y, w, h))
        boxes.sort(reverse=True)
        proposals = []
        for _, x, y, w, h in boxes[: self.max_persons]:
            proposals.append(
                PersonProposal(
                    bbox=(float(x), float(y), float(x + w), float(y + h)),
                    mask=mask[y : y + h, x : x + w].copy(),
                )
            )
        return proposals


class GreedyIouTracker:
    """Assign stable-ish ids by greedy IoU matching against recent tracks."""

    def __init__(self, min_iou: float = 0.3, max_age: int = 10):
        self.min_iou = min_iou
        self.max_age = max_age
        self._next_id = 1
        self._last_box: dict[int, tuple[float, float, float, float]] = {}
        self._last_seen: dict[int, int] = {}

    @staticmethod
    def _iou(a, b) -> float:
        ix = min(a[2], b[2]) - max(a[0], b[0])
        iy = min(a[3], b[3]) - max(a[1], b[1])
        inter = max(ix, 0.0) * max(iy, 0.0)
        area_a = (a[2] - a[0]) * (a[3] - a[1])
        area_b = (b[2] - b[0]) * (b[3] - b[1])
        union = area_a + area_b - inter
        return inter / union if union > 0 else 0.0

    def update(self, frame_index: int, proposals: list[PersonProposal]) -> list[TrackedPerson]:
        for track_id in [t for t, seen in self._last_seen.items() if frame_index - seen > self.max_age]:
            del self._last_seen[track_id]
            del self._last_box[track_id]

        assigned: set[int] = set()
        tracked = []
        for proposal in proposals:
            best_id, best_iou = None, self.min_iou
            for track_id, box in self._last_box.items():
                if track_id in assigned:
                    continue
                overlap = self._iou(proposal.bbox, box)
                if overlap > best_iou:
                    best_id, best_iou = track_id, overlap
            if best_id is None:
                best_id = self._next_id
                self._next_id += 1
            assigned.add(best_id)
            self._last_box[best_id] = proposal.bbox
            self._last_seen[best_id] = frame_index
            tracked.append(TrackedPerson(track_id=best_id, bbox=proposal.bbox, mask=proposal.mask))
        return tracked


class MotionActionClassifier:
    """walk / stand from centroid displacement, normalized by frame diagonal."""

    def __init__(self, frame_diagonal: float, walk_speed: float = 0.003):
        self.frame_diagonal = frame_diagonal
        self.walk_speed = walk_speed
        self._last_center: dict[int, tuple[int, tuple[float, float]]] = {}

    def classify(self, frame_index: int, persons: list[TrackedPerson]) -> list[ActionLabel]:
        labels = []
        for person in persons:
            x1, y1, x2, y2 = person.bbox
            center = ((x1 + x2) / 2.0, (y1 + y2) / 2.0)
            previous = self._last_center.get(person.track_id)
            self._last_center[person.track_id] = (frame_index, center)
            if previous is None:
                continue  # no motion estimate on the first sighting
            last_frame, last_center = previous
            frames_elapsed = max(frame_index - last_frame, 1)
            speed = (
                float(np.hypot(center[0] - last_center[0], center[1] - last_center[1]))
                / frames_elapsed
                / self.frame_diagonal
            )
            if speed > self.walk_speed:
                labels.append(ActionLabel(person.track_id, "walk", 0.9, person.bbox))
            else:
                labels.append(ActionLabel(person.track_id, "stand", 0.85, person.bbox))
        return labels


#: HSV ranges (OpenCV scale: H 0-179, S/V 0-255) for the color-blob detector.
DEFAULT_COLOR_TABLE = {
    "box": ((35, 60, 40), (85, 255, 255)),  # green
    "screen": ((100, 60, 40), (130, 255, 255)),  # blue
    "marker": ((0, 120, 80), (10, 255, 255)),  # red
}


class ColorBlobObjectDetector:
    """Label saturated color blobs via an HSV range table."""

    def __init__(self, color_table: dict | None = None, min_area_fraction: float = 0.001):
        self.color_table = color_table or DEFAULT_COLOR_TABLE
        self.min_area_fraction = min_area_fraction

    def prepare(self, sample_frames: list[np.ndarray]) -> None:
        pass

    def detect(self, frame: np.ndarray) -> list[ObjectProposal]:
        hsv = cv2.cvtColor(frame, cv2.COLOR_BGR2HSV)
        min_area = self.min_area_fraction * frame.shape[0] * frame.shape[1]
        proposals = []
        for label, (low, high) in self.color_table.items():
            mask = cv2.inRange(hsv, np.array(low, np.uint8), np.array(high, np.uint8))
            contours, _ = cv2.findContours(mask, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_SIMPLE)
            for contour in contours:
                x, y, w, h = cv2.boundingRect(contour)
                if w * h >= min_area:
                    proposals.append(
                        ObjectProposal(
                            label=label,
                            bbox=(float(x), float(y), float(x + w), float(y + h)),
                            source="segmentation",
                        )
                    )
        proposals.sort(key=lambda p: (p.label, p.bbox))
        return proposals


class IntensityDepthEstimator:
    """Blurred-brightness depth proxy: darker reads as farther.

    Values are raw here; the extraction loop min-max normalizes per video
    over the sampled frames, matching the relative-depth contract.
    """

    def prepare(self, sample_frames: list[np.ndarray]) -> None:
        pass

    def depth_map(self, frame: np.ndarray) -> np.ndarray:
        gray = cv2.cvtColor(frame, cv2.COLOR_BGR2GRAY)
        blurred = cv2.GaussianBlur(gray, (9, 9), 0)
        return blurred.astype(np.float32) / 255.0


class HeuristicSceneClassifier:
    """Tiny rule set over brightness and dominant color."""

    def classify(self, middle_frame: np.ndarray) -> str | None:
        hsv = cv2.cvtColor(middle_frame, cv2.COLOR_BGR2HSV)
        brightness = float(hsv[..., 2].mean())
        green = cv2.inRange(hsv, np.array((35, 60, 40), np.uint8), np.array((85, 255, 255), np.uint8))
        if float(np.count_nonzero(green)) / green.size > 0.25:
            return "park"
        if brightness < 40:
            return "dark room"
        return "room"


class FixedSceneClassifier:
    """Always answer with a configured label (or omit the scene entirely)."""

    def __init__(self, label: str | None = None):
        self.label = label

    def classify(self, middle_frame: np.ndarray) -> str | None:
        return self.label


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

AdapterFactory = Callable[..., object]

_REGISTRY: dict[str, dict[str, AdapterFactory]] = {
    "person_detector": {"builtin-motion": MedianBackgroundPersonDetector},
    "tracker": {"builtin-iou": GreedyIouTracker},
    "action_classifier": {"builtin-motion": MotionActionClassifier},
    "object_detector": {"builtin-color": ColorBlobObjectDetector},
    "depth_estimator": {"builtin-intensity": IntensityDepthEstimator},
    "scene_classifier": {"builtin-heuristic": HeuristicSceneClassifier, "fixed": FixedSceneClassifier},
}


def register_adapter(role: str, name: str, factory: AdapterFactory) -> None:
    """Plug an external model in under a role; it is selectable by name."""
    if role not in _REGISTRY:
        raise KeyError(f"unknown adapter role {role!r}; roles: {sorted(_REGISTRY)}")
    _REGISTRY[role][name] = factory


def make_adapter(role: str, name: str, **kwargs):
    try:
        factory = _REGISTRY[role][name]
    except KeyError:
        known = sorted(_REGISTRY.get(role, {}))
        raise KeyError(f"no adapter {name!r} for role {role!r}; known: {known}") from None
    return factory(**kwargs)
