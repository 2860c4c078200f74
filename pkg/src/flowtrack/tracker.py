"""Per-frame association and track lifecycle management.

Detections for each frame are matched to predicted track positions in two
stages on IoU cost: high-confidence detections against all tracks first,
then the low-confidence remainder against still-unmatched tracks. Matched
tracks are refreshed, unmatched tracks age toward removal, and unmatched
high-confidence detections seed new identities. Motion between frames comes
from one of three interchangeable predictors: a constant-velocity Kalman
filter, the flow-crop network, or the mean-of-flow baseline.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kalman
from .fgmp import MotionPredictionNet, mean_of_flow, mpn_forward_batch
from .flow import FlowMap, crop3x3

BIG_COST = 1e6


class TrackState(enum.Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


@dataclass
class Detection:
    """One frame-indexed axis-aligned box with confidence and class."""

    frame: int
    box: tuple[float, float, float, float]  # (x_left, y_top, w, h)
    score: float
    class_id: int = 0

    def __post_init__(self):
        if self.box[2] <= 0 or self.box[3] <= 0:
            raise ValueError(f"detection box must have positive extent, got {self.box}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score must be in [0,1], got {self.score}")


@dataclass
class TrackerConfig:
    score_high: float = 0.6
    score_low: float = 0.1
    iou_min_stage1: float = 0.3
    iou_min_stage2: float = 0.5
    max_lost_frames: int = 30
    min_hits_to_activate: int = 2
    motion_mode: str = "kf"  # kf | fgmp | mean_of_flow

    def __post_init__(self):
        if not 0.0 <= self.score_low < self.score_high <= 1.0:
            raise ValueError(
                f"need 0 <= score_low < score_high <= 1, got "
                f"{self.score_low}, {self.score_high}"
            )
        for name in ("iou_min_stage1", "iou_min_stage2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if self.motion_mode not in ("kf", "fgmp", "mean_of_flow"):
            raise ValueError(f"unknown motion mode {self.motion_mode!r}")


@dataclass
class Track:
    id: int
    state: TrackState
    box: tuple[float, float, float, float]
    score: float
    class_id: int
    kf: kalman.KalmanState | None = None
    age_since_update: int = 0
    hits: int = 1
    streak: int = 1
    history: list = field(default_factory=list)

    @property
    def center(self) -> tuple[float, float]:
        x, y, w, h = self.box
        return (x + w / 2, y + h / 2)


def iou(box_a, box_b) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = box_a
    bx, by, bw, bh = box_b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU for two lists of (x, y, w, h) boxes."""
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = np.asarray(boxes_a, dtype=np.float64)
    b = np.asarray(boxes_b, dtype=np.float64)
    ax0, ay0 = a[:, 0:1], a[:, 1:2]
    ax1, ay1 = ax0 + a[:, 2:3], ay0 + a[:, 3:4]
    bx0, by0 = b[None, :, 0], b[None, :, 1]
    bx1, by1 = bx0 + b[None, :, 2], by0 + b[None, :, 3]
    iw = np.maximum(0.0, np.minimum(ax1, bx1) - np.maximum(ax0, bx0))
    ih = np.maximum(0.0, np.minimum(ay1, by1) - np.maximum(ay0, by0))
    inter = iw * ih
    union = a[:, 2:3] * a[:, 3:4] + (b[None, :, 2] * b[None, :, 3]) - inter
    return np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost assignment of size min(n, m) for a finite cost matrix.

    Shortest-augmenting-path implementation; rows are settled in index order
    and equal-cost columns resolve to the lowest index, so the matching is
    deterministic. Returns (row, col) pairs sorted by row.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"cost must be a 2-D matrix, got shape {cost.shape}")
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite values")
    transposed = n > m
    if transposed:
        cost = cost.T
        n, m = m, n

    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    match_row = np.zeros(m + 1, dtype=np.int64)  # column j -> assigned row (1-based)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match_row[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match_row[j0]
            reduced = cost[i0 - 1, :] - u[i0] - v[1:]
            free = ~used[1:]
            improve = free & (reduced < minv[1:])
            minv[1:][improve] = reduced[improve]
            way[1:][improve] = j0
            candidates = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(candidates)) + 1
            delta = candidates[j1 - 1]
            u[match_row[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match_row[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match_row[j0] = match_row[j1]
            j0 = j1

    pairs = []
    for j in range(1, m + 1):
        if match_row[j]:
            r, c = int(match_row[j]) - 1, j - 1
            pairs.append((c, r) if transposed else (r, c))
    pairs.sort()
    return pairs


def _match_stage(track_idx, det_idx, track_boxes, track_classes, detections,
                 iou_min) -> tuple[list, list, list]:
    """One Hungarian pass; pairs below the IoU floor or across classes are
    rejected after assignment."""
    if not track_idx or not det_idx:
        return [], list(track_idx), list(det_idx)
    boxes_t = [track_boxes[t] for t in track_idx]
    boxes_d = [detections[d].box for d in det_idx]
    overlap = iou_matrix(boxes_t, boxes_d)
    cost = 1.0 - overlap
    for r, t in enumerate(track_idx):
        for c, d in enumerate(det_idx):
            if track_classes[t] != detections[d].class_id or overlap[r, c] < iou_min:
                cost[r, c] = BIG_COST
    matches = []
    matched_t, matched_d = set(), set()
    for r, c in hungarian(cost):
        if cost[r, c] >= BIG_COST:
            continue
        matches.append((track_idx[r], det_idx[c]))
        matched_t.add(track_idx[r])
        matched_d.add(det_idx[c])
    un_t = [t for t in track_idx if t not in matched_t]
    un_d = [d for d in det_idx if d not in matched_d]
    return matches, un_t, un_d


def match_two_stage(tracks, predicted_boxes, detections, config: TrackerConfig):
    """Two-stage spatial matching of detections to predicted track boxes.

    Stage 1 offers high-score detections to every track; stage 2 offers the
    low-score remainder to tracks left over from stage 1. Classes must agree
    for any pairing. Returns (matches, unmatched_track_indices,
    unmatched_high_score_detection_indices).
    """
    classes = [t.class_id for t in tracks]
    all_tracks = list(range(len(tracks)))
    high = [i for i, d in enumerate(detections) if d.score >= config.score_high]
    low = [i for i, d in enumerate(detections)
           if config.score_low <= d.score < config.score_high]
    m1, un_t, un_high = _match_stage(all_tracks, high, predicted_boxes, classes,
                                     detections, config.iou_min_stage1)
    m2, un_t, _ = _match_stage(un_t, low, predicted_boxes, classes,
                               detections, config.iou_min_stage2)
    return m1 + m2, un_t, un_high


class Tracker:
    """Stateful per-sequence tracker; feed frames in increasing order."""

    def __init__(self, config: TrackerConfig, img_size=None,
                 mpn: MotionPredictionNet | None = None):
        if config.motion_mode == "fgmp" and mpn is None:
            raise ValueError("fgmp motion mode needs a motion prediction net")
        if config.motion_mode in ("fgmp", "mean_of_flow") and img_size is None:
            raise ValueError(f"{config.motion_mode} motion mode needs img_size")
        self.config = config
        self.img_size = img_size
        self.mpn = mpn
        self.tracks: list[Track] = []
        self._next_id = 1
        self._last_frame = 0
        self._started = False

    # -- motion prediction ---------------------------------------------------

    def _predict_boxes(self, flow: FlowMap | None) -> list:
        mode = self.config.motion_mode
        if mode == "kf":
            boxes = []
            for t in self.tracks:
                kalman.kf_predict(t.kf)
                boxes.append(kalman.state_box(t.kf))
            return boxes
        if flow is None:  # first frame / missing flow: identity motion
            return [t.box for t in self.tracks]
        if mode == "fgmp":
            return self._predict_fgmp(flow)
        return [self._shift_box(t.box, mean_of_flow(t.box, flow, self.img_size))
                for t in self.tracks]

    def _predict_fgmp(self, flow: FlowMap) -> list:
        img_w, img_h = self.img_size
        sx = flow.width / img_w
        sy = flow.height / img_h
        crops = np.stack([
            crop3x3(flow, (t.box[0] + t.box[2] / 2) * sx, (t.box[1] + t.box[3] / 2) * sy)
            for t in self.tracks
        ])
        deltas = mpn_forward_batch(self.mpn, crops)
        boxes = []
        for t, (du, dv) in zip(self.tracks, deltas):
            x, y, w, h = t.box
            boxes.append((x + float(du) / sx, y + float(dv) / sy, w, h))
        return boxes

    @staticmethod
    def _shift_box(box, delta):
        x, y, w, h = box
        return (x + delta.dx, y + delta.dy, w, h)

    # -- lifecycle -----------------------------------------------------------

    def _spawn(self, det: Detection, first_frame: bool) -> Track:
        track = Track(id=self._next_id, state=TrackState.TENTATIVE, box=det.box,
                      score=det.score, class_id=det.class_id)
        self._next_id += 1
        if self.config.motion_mode == "kf":
            track.kf = kalman.kf_init(det.box)
        if first_frame or self.config.min_hits_to_activate <= 1:
            track.state = TrackState.ACTIVE
        track.history.append((det.frame, det.box))
        return track

    def step(self, frame_index: int, detections: list[Detection],
             flow: FlowMap | None = None) -> list[Track]:
        """Process one frame; returns the Active tracks after the update."""
        if frame_index <= self._last_frame:
            raise ValueError(
                f"frames must arrive in increasing order: got {frame_index} "
                f"after {self._last_frame}"
            )
        for d in detections:
            if d.frame != frame_index:
                raise ValueError(f"detection from frame {d.frame} fed to frame {frame_index}")
        first_frame = not self._started
        self._started = True
        self._last_frame = frame_index

        predicted = self._predict_boxes(flow) if self.tracks else []
        for t, box in zip(self.tracks, predicted):
            t.box = box  # lost tracks keep advancing with the motion model

        matches, unmatched_t, unmatched_high = match_two_stage(
            self.tracks, predicted, detections, self.config)

        for ti, di in matches:
            track = self.tracks[ti]
            det = detections[di]
            if self.config.motion_mode == "kf":
                kalman.kf_update(track.kf, det.box)
                track.box = kalman.state_box(track.kf)
            else:
                track.box = det.box
            track.score = det.score
            track.hits += 1
            track.streak = track.streak + 1 if track.age_since_update == 0 else 1
            track.age_since_update = 0
            if track.state == TrackState.LOST:
                track.state = TrackState.ACTIVE
            elif track.state == TrackState.TENTATIVE:
                if track.streak >= self.config.min_hits_to_activate:
                    track.state = TrackState.ACTIVE
            track.history.append((frame_index, track.box))

        removed = set()
        for ti in unmatched_t:
            track = self.tracks[ti]
            track.age_since_update += 1
            if track.age_since_update > self.config.max_lost_frames:
                track.state = TrackState.REMOVED
                removed.add(ti)
            else:
                track.state = TrackState.LOST
        self.tracks = [t for i, t in enumerate(self.tracks) if i not in removed]

        for di in unmatched_high:
            self.tracks.append(self._spawn(detections[di], first_frame))

        return [t for t in self.tracks if t.state == TrackState.ACTIVE]
