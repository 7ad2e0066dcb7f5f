"""Multi-object tracking over per-frame detections.

The tracker follows the classic SORT recipe: one constant-velocity Kalman
filter per track over the state [u, v, s, r, du, dv, ds] (box center,
area, aspect ratio and their rates; the aspect ratio is assumed constant),
frame-by-frame association by IoU cost solved with the Hungarian algorithm,
and simple birth/death lifecycle rules.

Everything here is deterministic: the same detection stream and config
always produce the same tracks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BoundingBox, Detection, Track, ValidationError

__all__ = ["TrackerConfig", "iou", "hungarian", "KalmanBoxFilter", "track"]

_MIN_AREA = 1e-6


@dataclass(frozen=True)
class TrackerConfig:
    iou_threshold: float = 0.3      # gate: matches below this IoU are rejected
    max_age: int = 5                # frames a track survives without a match
    min_hits: int = 3               # observations required before a track is emitted
    min_confidence: float = 0.8     # detector confidence floor

    def __post_init__(self):
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValidationError(f"iou_threshold {self.iou_threshold} outside (0, 1)")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValidationError(f"min_confidence {self.min_confidence} outside [0, 1]")
        if self.max_age < 0 or self.min_hits < 1:
            raise ValidationError("max_age must be >= 0 and min_hits >= 1")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; symmetric, in [0, 1]."""
    xx1 = max(a.x1, b.x1)
    yy1 = max(a.y1, b.y1)
    xx2 = min(a.x2, b.x2)
    yy2 = min(a.y2, b.y2)
    w = max(0.0, xx2 - xx1)
    h = max(0.0, yy2 - yy1)
    inter = w * h
    return inter / (a.area + b.area - inter)


def hungarian(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment of an M x N cost matrix.

    Returns min(M, N) (row, col) pairs, sorted by row, minimizing the total
    cost. Shortest-augmenting-path formulation with dual potentials; rows
    are augmented in index order and ties take the lowest-index column, so
    the result is deterministic.

    Raises ValidationError on non-finite entries.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        raise ValidationError(f"cost matrix must be 2-D and non-empty, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValidationError("cost matrix contains non-finite entries")

    transposed = cost.shape[0] > cost.shape[1]
    if transposed:
        cost = cost.T
    n, m = cost.shape

    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    # col j (1-based) is matched to row match[j]; 0 = free
    match = [0] * (m + 1)
    way = [0] * (m + 1)

    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = inf
            j1 = -1
            row = cost[i0 - 1]
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        # augment along the found path
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1

    pairs = [(match[j] - 1, j - 1) for j in range(1, m + 1) if match[j] != 0]
    if transposed:
        pairs = [(c, r) for r, c in pairs]
    pairs.sort()
    return pairs


def _box_to_z(box: BoundingBox) -> np.ndarray:
    """Box -> measurement [u, v, s, r] (center, area, aspect ratio)."""
    w = box.width
    h = box.height
    return np.array([box.x1 + w / 2.0, box.y1 + h / 2.0, w * h, w / h])


def _x_to_box(x: np.ndarray) -> BoundingBox:
    s = max(float(x[2]), _MIN_AREA)
    r = max(float(x[3]), _MIN_AREA)
    w = math.sqrt(s * r)
    h = s / w
    u, v = float(x[0]), float(x[1])
    return BoundingBox(u - w / 2.0, v - h / 2.0, u + w / 2.0, v + h / 2.0)


class KalmanBoxFilter:
    """Constant-velocity Kalman filter over [u, v, s, r, du, dv, ds].

    Noise covariances follow the usual SORT values: large initial velocity
    uncertainty (the first box says nothing about motion), small process
    noise on the velocities, and a scaled-up measurement noise on area and
    aspect ratio.
    """

    F = np.eye(7)
    F[0, 4] = F[1, 5] = F[2, 6] = 1.0
    H = np.zeros((4, 7))
    H[:4, :4] = np.eye(4)

    def __init__(self, box: BoundingBox):
        self.x = np.zeros(7)
        self.x[:4] = _box_to_z(box)
        self.P = np.diag([10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4])
        self.Q = np.diag([1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4])
        self.R = np.diag([1.0, 1.0, 10.0, 10.0])
        self.area_clamped = False

    def predict(self) -> BoundingBox:
        # keep the predicted area positive; a negative growth rate on a
        # shrinking box can otherwise push s through zero
        if self.x[2] + self.x[6] <= 0.0:
            self.x[6] = 0.0
            self.area_clamped = True
        self.x = self.F @ self.x
        self.P = self.F @ self.P @ self.F.T + self.Q
        self.P = 0.5 * (self.P + self.P.T)
        if self.x[2] <= 0.0:
            self.x[2] = _MIN_AREA
            self.area_clamped = True
        return _x_to_box(self.x)

    def update(self, box: BoundingBox) -> None:
        z = _box_to_z(box)
        y = z - self.H @ self.x
        S = self.H @ self.P @ self.H.T + self.R
        K = np.linalg.solve(S, self.H @ self.P).T
        self.x = self.x + K @ y
        # Joseph form keeps P symmetric positive-semidefinite
        ikh = np.eye(7) - K @ self.H
        self.P = ikh @ self.P @ ikh.T + K @ self.R @ K.T
        self.P = 0.5 * (self.P + self.P.T)

    def state_box(self) -> BoundingBox:
        return _x_to_box(self.x)


class _LiveTrack:
    __slots__ = ("track_id", "kf", "observations", "hit_streak", "age", "time_since_update")

    def __init__(self, track_id: int, frame: int, box: BoundingBox):
        self.track_id = track_id
        self.kf = KalmanBoxFilter(box)
        self.observations = {frame: box}
        self.hit_streak = 1
        self.age = 1
        self.time_since_update = 0

    def to_track(self) -> Track:
        return Track(self.track_id, dict(self.observations), self.hit_streak, self.age)


def track(detections: list[Detection], config: TrackerConfig | None = None) -> list[Track]:
    """Associate per-frame detections into identity-stamped tracks.

    Detections below the confidence floor or with a non-person label are
    dropped first. Frames are processed in increasing order; within each
    frame the association maximizes total IoU (cost 1 - IoU), pairs below
    the IoU gate are rejected after assignment, unmatched detections spawn
    new tracks, and tracks unmatched for more than max_age frames die.
    Only tracks with at least min_hits observations are returned. Recorded
    observations are the matched detection boxes, not the filtered state.
    """
    config = config or TrackerConfig()
    by_frame: dict[int, list[Detection]] = {}
    for det in detections:
        if det.label != "person" or det.confidence < config.min_confidence:
            continue
        by_frame.setdefault(det.frame_index, []).append(det)
    if not by_frame:
        return []

    live: list[_LiveTrack] = []
    finished: list[_LiveTrack] = []
    next_id = 0

    for frame in range(min(by_frame), max(by_frame) + 1):
        dets = by_frame.get(frame, [])
        predicted = [trk.kf.predict() for trk in live]
        for trk in live:
            trk.age += 1

        matches: list[tuple[int, int]] = []
        if dets and live:
            iou_matrix = np.array(
                [[iou(d.box, p) for p in predicted] for d in dets]
            )
            for r, c in hungarian(1.0 - iou_matrix):
                if iou_matrix[r, c] >= config.iou_threshold:
                    matches.append((r, c))

        matched_dets = {r for r, _ in matches}
        matched_trks = {c for _, c in matches}

        for r, c in matches:
            trk = live[c]
            trk.kf.update(dets[r].box)
            trk.observations[frame] = dets[r].box
            trk.hit_streak = trk.hit_streak + 1 if trk.time_since_update == 0 else 1
            trk.time_since_update = 0

        survivors = []
        for c, trk in enumerate(live):
            if c in matched_trks:
                survivors.append(trk)
                continue
            trk.time_since_update += 1
            trk.hit_streak = 0
            if trk.time_since_update > config.max_age:
                finished.append(trk)
            else:
                survivors.append(trk)
        live = survivors

        for r, det in enumerate(dets):
            if r not in matched_dets:
                live.append(_LiveTrack(next_id, frame, det.box))
                next_id += 1

    finished.extend(live)
    finished.sort(key=lambda t: t.track_id)
    return [t.to_track() for t in finished if len(t.observations) >= config.min_hits]
