"""Extraction loop: decode a video, run the adapter roster, emit records.

Two decode passes keep memory flat: the first collects uniformly sampled
frames for the background model, the depth normalization range, and the
scene classifier; the second streams one JSON record per processed frame in
the downstream pipeline's documented schema. The schema is the only coupling
point — this package never imports the pipeline.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from gestextract.adapters import make_adapter

logger = logging.getLogger(__name__)

SAMPLE_FRAMES_FOR_STATS = 25
FALLBACK_FPS = 30.0


class ExtractError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExtractorConfig:
    """Adapter selection per role plus the knobs the schema cares about."""

    person_detector: str = "builtin-motion"
    tracker: str = "builtin-iou"
    action_classifier: str = "builtin-motion"
    object_detector: str = "builtin-color"
    depth_estimator: str = "builtin-intensity"
    scene_classifier: str = "builtin-heuristic"
    scene_label: str | None = None  # used by the "fixed" scene classifier
    frame_stride: int = 1
    pixel_sample_cap: int = 2048
    sample_seed: int = 0
    device: str = "cpu"  # forwarded to adapters that accept it; builtins are CPU-only
    strict: bool = False  # raise on per-frame failures instead of skipping

    def validated(self) -> "ExtractorConfig":
        if self.frame_stride < 1:
            raise ValueError(f"frame_stride must be >= 1, got {self.frame_stride}")
        if self.pixel_sample_cap < 1:
            raise ValueError(f"pixel_sample_cap must be >= 1, got {self.pixel_sample_cap}")
        return self


def _collect_stats_frames(path: Path, stride: int) -> tuple[list[tuple[int, np.ndarray]], float, int, int]:
    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise ExtractError(f"cannot decode video: {path}")
    fps = capture.get(cv2.CAP_PROP_FPS) or 0.0
    if fps <= 0:
        logger.warning("%s reports no fps; assuming %.1f", path, FALLBACK_FPS)
        fps = FALLBACK_FPS
    frames: list[tuple[int, np.ndarray]] = []
    index = 0
    while True:
        ok, frame = capture.read()
        if not ok:
            break
        if index % stride == 0:
            frames.append((index, frame))
        index += 1
    capture.release()
    if not frames:
        raise ExtractError(f"video has no decodable frames: {path}")
    height, width = frames[0][1].shape[:2]
    # uniform subsample for the stats pass
    if len(frames) > SAMPLE_FRAMES_FOR_STATS:
        picks = np.linspace(0, len(frames) - 1, SAMPLE_FRAMES_FOR_STATS).astype(int)
        stats = [frames[i] for i in picks]
    else:
        stats = frames
    return stats, fps, width, height


def _sample_mask_pixels(
    frame: np.ndarray,
    bbox: tuple[float, float, float, float],
    mask: np.ndarray,
    cap: int,
    rng: random.Random,
) -> list[list[float]]:
    """Uniform HSV samples from the person's mask, at most ``cap`` of them."""
    x1, y1 = int(bbox[0]), int(bbox[1])
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return []
    if len(xs) > cap:
        picks = sorted(rng.sample(range(len(xs)), cap))
        xs, ys = xs[picks], ys[picks]
    crop = frame[y1 : y1 + mask.shape[0], x1 : x1 + mask.shape[1]]
    hsv = cv2.cvtColor(crop, cv2.COLOR_BGR2HSV)
    samples = []
    for x, y in zip(xs.tolist(), ys.tolist()):
        h, s, v = hsv[y, x]
        samples.append([float(h) * 2.0, float(s) / 255.0, float(v) / 255.0])
    return samples


def _clamp_bbox(bbox: tuple[float, float, float, float], width: int, height: int) -> list[float]:
    x1, y1, x2, y2 = bbox
    return [
        round(min(max(x1, 0.0), float(width)), 2),
        round(min(max(y1, 0.0), float(height)), 2),
        round(min(max(x2, 0.0), float(width)), 2),
        round(min(max(y2, 0.0), float(height)), 2),
    ]


def _mean_depth(depth: np.ndarray, bbox: tuple[float, float, float, float], lo: float, hi: float) -> float | None:
    x1, y1, x2, y2 = (int(v) for v in bbox)
    region = depth[max(y1, 0) : max(y2, 0), max(x1, 0) : max(x2, 0)]
    if region.size == 0:
        return None
    raw = float(region.mean())
    if hi <= lo:
        return 0.5
    return round(min(max((raw - lo) / (hi - lo), 0.0), 1.0), 4)


def extract(video_path: str | Path, cfg: ExtractorConfig, out_path: str | Path) -> int:
    """Run the adapter roster over a video and write the record stream.

    Returns the number of frame records written. Per-frame adapter failures
    are skipped with a warning unless ``cfg.strict``.
    """
    cfg = cfg.validated()
    path = Path(video_path)
    if not path.exists():
        raise ExtractError(f"video not found: {path}")

    stats_frames, fps, width, height = _collect_stats_frames(path, cfg.frame_stride)
    sample_images = [frame for _, frame in stats_frames]

    person_detector = make_adapter("person_detector", cfg.person_detector)
    tracker = make_adapter("tracker", cfg.tracker)
    frame_diagonal = float(np.hypot(width, height))
    action_classifier = make_adapter("action_classifier", cfg.action_classifier, frame_diagonal=frame_diagonal)
    object_detector = make_adapter("object_detector", cfg.object_detector)
    depth_estimator = make_adapter("depth_estimator", cfg.depth_estimator)
    if cfg.scene_classifier == "fixed":
        scene_classifier = make_adapter("scene_classifier", "fixed", label=cfg.scene_label)
    else:
        scene_classifier = make_adapter("scene_classifier", cfg.scene_classifier)

    person_detector.prepare(sample_images)
    object_detector.prepare(sample_images)
    depth_estimator.prepare(sample_images)

    # per-video min-max depth normalization over the sampled frames
    depth_lo, depth_hi = float("inf"), float("-inf")
    for frame in sample_images:
        depth = depth_estimator.depth_map(frame)
        depth_lo = min(depth_lo, float(depth.min()))
        depth_hi = max(depth_hi, float(depth.max()))

    scene_label = scene_classifier.classify(sample_images[len(sample_images) // 2])
    rng = random.Random(cfg.sample_seed)

    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise ExtractError(f"cannot decode video: {path}")

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    written = 0
    with open(out_path, "w", encoding="utf-8") as sink:
        meta: dict = {"video_id": path.stem, "fps": fps, "width": width, "height": height}
        if scene_label:
            meta["scene_label"] = scene_label
        sink.write(json.dumps(meta, sort_keys=True) + "\n")

        index = 0
        while True:
            ok, frame = capture.read()
            if not ok:
                break
            if index % cfg.frame_stride != 0:
                index += 1
                continue
            try:
                record = _process_frame(
                    frame,
                    index,
                    width,
                    height,
                    person_detector,
                    tracker,
                    action_classifier,
                    object_detector,
                    depth_estimator,
                    depth_lo,
                    depth_hi,
                    cfg,
                    rng,
                )
            except Exception:
                if cfg.strict:
                    capture.release()
                    raise
                logger.warning("skipping frame %d of %s after inference failure", index, path, exc_info=True)
                index += 1
                continue
            sink.write(json.dumps(record, sort_keys=True) + "\n")
            written += 1
            index += 1
    capture.release()
    logger.info("%s: wrote %d frame record(s) to %s", path.name, written, out_path)
    return written


def _process_frame(
    frame: np.ndarray,
    index: int,
    width: int,
    height: int,
    person_detector,
    tracker,
    action_classifier,
    object_detector,
    depth_estimator,
    depth_lo: float,
    depth_hi: float,
    cfg: ExtractorConfig,
    rng: random.Random,
) -> dict:
    depth = depth_estimator.depth_map(frame)
    tracked = tracker.update(index, person_detector.detect(frame))

    persons = []
    for person in tracked:
        entry: dict = {"track_id": person.track_id, "bbox": _clamp_bbox(person.bbox, width, height)}
        mean_depth = _mean_depth(depth, person.bbox, depth_lo, depth_hi)
        if mean_depth is not None:
            entry["mean_depth"] = mean_depth
        samples = _sample_mask_pixels(frame, person.bbox, person.mask, cfg.pixel_sample_cap, rng)
        if samples:
            entry["pixel_samples"] = samples
        persons.append(entry)

    actions = [
        {
            "track_id": action.track_id,
            "label": action.label,
            "confidence": action.confidence,
            "bbox": _clamp_bbox(action.bbox, width, height),
        }
        for action in action_classifier.classify(index, tracked)
    ]

    objects = []
    for proposal in object_detector.detect(frame):
        entry = {
            "label": proposal.label,
            "bbox": _clamp_bbox(proposal.bbox, width, height),
            "source": proposal.source,
        }
        mean_depth = _mean_depth(depth, proposal.bbox, depth_lo, depth_hi)
        if mean_depth is not None:
            entry["mean_depth"] = mean_depth
        objects.append(entry)

    return {"frame_index": index, "persons": persons, "actions": actions, "objects": objects}
