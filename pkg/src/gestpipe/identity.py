"""Stable person identities from noisy tracker output.

Two passes fix the two tracker failure modes: short dropouts that respawn a
track under a new id (bridged by temporal gap + IoU), and long absences where
a person re-enters the frame (bridged by HSV-histogram appearance matching).
A hard guard never merges two tracks that coexist in any frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from gestpipe.ingest import BBox, FrameRecord, PipelineConfig

logger = logging.getLogger(__name__)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0.0 when the union has no area."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(ix, 0.0) * max(iy, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


@dataclass(frozen=True)
class FeatureVector:
    """L1-normalized linearized HSV histogram (all-zero when no samples)."""

    values: tuple[float, ...]

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)


def hsv_feature(samples: list[tuple[float, float, float]] | tuple, cfg: PipelineConfig) -> FeatureVector:
    """Bin (hue, saturation, value) samples and linearize row-major (h, s, v).

    Hue 360 wraps to 0; saturation/value 1.0 land in the top bin. An empty
    sample list yields the all-zero vector.
    """
    hue_bins, sat_bins, val_bins = cfg.hsv_bins
    size = hue_bins * sat_bins * val_bins
    if not samples:
        return FeatureVector(values=(0.0,) * size)
    counts = np.zeros(size, dtype=np.float64)
    for h, s, v in samples:
        hb = int((h % 360.0) * hue_bins / 360.0)
        sb = min(int(s * sat_bins), sat_bins - 1)
        vb = min(int(v * val_bins), val_bins - 1)
        counts[(hb * sat_bins + sb) * val_bins + vb] += 1.0
    counts /= counts.sum()
    return FeatureVector(values=tuple(counts.tolist()))


def cosine_similarity(a: FeatureVector, b: FeatureVector) -> float:
    """dot(a, b) / (|a| |b|); 0.0 when either vector has zero norm."""
    if len(a.values) != len(b.values):
        raise ValueError(f"feature length mismatch: {len(a.values)} vs {len(b.values)}")
    va = np.asarray(a.values)
    vb = np.asarray(b.values)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(va, vb) / (na * nb))


@dataclass(frozen=True)
class TrackSegment:
    frame_index: int
    bbox: BBox
    mean_depth: float | None = None


@dataclass
class PersonTrack:
    """One identity with its per-frame observations, segments sorted by frame.

    ``feature_sum`` accumulates the un-normalized sum of per-frame normalized
    histograms so merged tracks can recompute their appearance exactly.
    """

    person_id: int
    segments: list[TrackSegment] = field(default_factory=list)
    appearance: FeatureVector | None = None
    feature_sum: tuple[float, ...] | None = None

    @property
    def first_frame(self) -> int:
        return self.segments[0].frame_index

    @property
    def last_frame(self) -> int:
        return self.segments[-1].frame_index

    @property
    def frames(self) -> set[int]:
        return {s.frame_index for s in self.segments}


@dataclass(frozen=True)
class IdMapping:
    """Total, functional mapping from observed track ids to stable ids."""

    mapping: dict[int, int]

    def __getitem__(self, track_id: int) -> int:
        return self.mapping[track_id]

    def get(self, track_id: int, default: int | None = None) -> int | None:
        return self.mapping.get(track_id, default)

    def compose(self, later: "IdMapping") -> "IdMapping":
        """raw -> stable mapping obtained by applying ``self`` then ``later``."""
        return IdMapping({raw: later.mapping.get(mid, mid) for raw, mid in self.mapping.items()})


def _normalize_or_none(total: np.ndarray) -> FeatureVector | None:
    s = float(total.sum())
    if s == 0.0:
        return FeatureVector(values=tuple(np.zeros_like(total).tolist()))
    return FeatureVector(values=tuple((total / s).tolist()))


def build_tracks(frames: list[FrameRecord], cfg: PipelineConfig) -> list[PersonTrack]:
    """Group raw per-frame person detections into tracks keyed by tracker id.

    Appearance is the renormalized mean of per-frame normalized histograms
    (frames without samples contribute nothing). Duplicate detections of the
    same track in one frame keep the first occurrence.
    """
    hue_bins, sat_bins, val_bins = cfg.hsv_bins
    size = hue_bins * sat_bins * val_bins
    tracks: dict[int, PersonTrack] = {}
    sums: dict[int, np.ndarray] = {}
    for frame in frames:
        seen_in_frame: set[int] = set()
        for person in frame.persons:
            if person.track_id in seen_in_frame:
                continue
            seen_in_frame.add(person.track_id)
            track = tracks.get(person.track_id)
            if track is None:
                track = PersonTrack(person_id=person.track_id)
                tracks[person.track_id] = track
                sums[person.track_id] = np.zeros(size, dtype=np.float64)
            track.segments.append(
                TrackSegment(frame_index=frame.frame_index, bbox=person.bbox, mean_depth=person.mean_depth)
            )
            if person.pixel_samples:
                sums[person.track_id] += np.asarray(hsv_feature(person.pixel_samples, cfg).values)
    result = []
    for track_id in sorted(tracks):
        track = tracks[track_id]
        track.segments.sort(key=lambda s: s.frame_index)
        track.feature_sum = tuple(sums[track_id].tolist())
        track.appearance = _normalize_or_none(sums[track_id])
        result.append(track)
    return result


class _UnionFind:
    def __init__(self, ids: list[int]):
        self.parent = {i: i for i in ids}

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def short_term_unify(tracks: list[PersonTrack], cfg: PipelineConfig) -> IdMapping:
    """Bridge brief tracker dropouts.

    Two ids merge when one track ends, the other begins strictly later but
    within ``short_term_max_gap`` frames, and the IoU between the earlier
    track's last box and the later track's first box is strictly above
    ``short_term_min_iou``. Merging is transitive; the earliest track's id
    becomes the stable id. Merges that would join two tracks sharing a frame
    are skipped (coexistence guard).
    """
    by_id = {t.person_id: t for t in tracks}
    candidates: list[tuple[int, int, int]] = []
    for a in tracks:
        for b in tracks:
            if a.person_id == b.person_id:
                continue
            gap = b.first_frame - a.last_frame
            if not 0 < gap < cfg.short_term_max_gap:
                continue
            if iou(a.segments[-1].bbox, b.segments[0].bbox) > cfg.short_term_min_iou:
                candidates.append((gap, a.person_id, b.person_id))
    candidates.sort(key=lambda c: (c[0], by_id[c[1]].first_frame, c[1], c[2]))

    uf = _UnionFind([t.person_id for t in tracks])
    frames_of_root: dict[int, set[int]] = {t.person_id: set(t.frames) for t in tracks}
    for _, a_id, b_id in candidates:
        ra, rb = uf.find(a_id), uf.find(b_id)
        if ra == rb:
            continue
        if frames_of_root[ra] & frames_of_root[rb]:
            logger.debug("short-term merge %d<-%d skipped: tracks coexist", a_id, b_id)
            continue
        uf.union(a_id, b_id)
        root = uf.find(a_id)
        merged = frames_of_root[ra] | frames_of_root[rb]
        frames_of_root[root] = merged

    # stable id per class: earliest first appearance, ties by lower raw id
    members: dict[int, list[int]] = {}
    for track in tracks:
        members.setdefault(uf.find(track.person_id), []).append(track.person_id)
    mapping: dict[int, int] = {}
    for ids in members.values():
        stable = min(ids, key=lambda i: (by_id[i].first_frame, i))
        for i in ids:
            mapping[i] = stable
    return IdMapping(mapping)


def merge_tracks(tracks: list[PersonTrack], mapping: IdMapping) -> list[PersonTrack]:
    """Apply an id mapping, concatenating segments and appearance sums."""
    merged: dict[int, PersonTrack] = {}
    sums: dict[int, np.ndarray] = {}
    for track in sorted(tracks, key=lambda t: (t.first_frame, t.person_id)):
        stable = mapping[track.person_id]
        target = merged.get(stable)
        if target is None:
            target = PersonTrack(person_id=stable)
            merged[stable] = target
            sums[stable] = np.zeros(len(track.feature_sum or ()), dtype=np.float64)
        target.segments.extend(track.segments)
        if track.feature_sum is not None:
            if sums[stable].size == 0:
                sums[stable] = np.zeros(len(track.feature_sum), dtype=np.float64)
            sums[stable] += np.asarray(track.feature_sum)
    result = []
    for stable in sorted(merged):
        track = merged[stable]
        track.segments.sort(key=lambda s: s.frame_index)
        track.feature_sum = tuple(sums[stable].tolist())
        track.appearance = _normalize_or_none(sums[stable]) if sums[stable].size else None
        result.append(track)
    return result


def long_term_reidentify(tracks: list[PersonTrack], cfg: PipelineConfig) -> IdMapping:
    """Merge re-entering persons by appearance.

    Tracks are scanned in order of first appearance (ties by id). A track is
    merged into the previously seen identity of maximal cosine similarity when
    that similarity reaches ``reid_similarity_threshold``; identities that
    coexist with the track in any frame are never candidates. Similarity ties
    go to the earlier identity.
    """
    order = sorted(tracks, key=lambda t: (t.first_frame, t.person_id))
    lineages: list[dict] = []  # stable_id, frames, feature_sum, first_frame
    mapping: dict[int, int] = {}
    for track in order:
        track_frames = track.frames
        track_sum = np.asarray(track.feature_sum) if track.feature_sum is not None else None
        best: dict | None = None
        best_sim = -1.0
        if track.appearance is not None and not track.appearance.is_zero:
            for lineage in lineages:
                if lineage["frames"] & track_frames:
                    continue
                sim = cosine_similarity(_normalize_or_none(lineage["feature_sum"]), track.appearance)
                if sim > best_sim:
                    best, best_sim = lineage, sim
        if best is not None and best_sim >= cfg.reid_similarity_threshold:
            mapping[track.person_id] = best["stable_id"]
            best["frames"] |= track_frames
            if track_sum is not None:
                best["feature_sum"] = best["feature_sum"] + track_sum
        else:
            mapping[track.person_id] = track.person_id
            lineages.append(
                {
                    "stable_id": track.person_id,
                    "frames": set(track_frames),
                    "feature_sum": track_sum if track_sum is not None else np.zeros(0),
                    "first_frame": track.first_frame,
                }
            )
    return IdMapping(mapping)


def resolve_identities(frames: list[FrameRecord], cfg: PipelineConfig) -> tuple[IdMapping, list[PersonTrack]]:
    """Full identity resolution: raw tracks -> short-term -> long-term.

    Returns the composed raw-to-stable mapping and the merged tracks.
    """
    raw_tracks = build_tracks(frames, cfg)
    if not raw_tracks:
        return IdMapping({}), []
    short_mapping = short_term_unify(raw_tracks, cfg)
    bridged = merge_tracks(raw_tracks, short_mapping)
    long_mapping = long_term_reidentify(bridged, cfg)
    final_tracks = merge_tracks(bridged, long_mapping)
    return short_mapping.compose(long_mapping), final_tracks
