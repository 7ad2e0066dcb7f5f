"""Gait feature extraction from pose-landmark time series.

Thirteen per-frame series are read off the skeleton (foot geometry, knee
angles, upper-body stability and a per-frame stationarity flag), each is
summarized by six statistics (mean, std, max, min, range, spectral
entropy), and the box track contributes one scalar, the total height
reduction over the walk, giving 13 * 6 + 1 = 79 named features.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import GaitSample, InsufficientDataError, PoseSequence, Track, ValidationError
from .core import KP

__all__ = [
    "SERIES_NAMES",
    "SUBFEATURE_NAMES",
    "FEATURE_NAMES",
    "SeriesBundle",
    "FeatureVector",
    "extract_series",
    "subfeatures",
    "spectral_entropy",
    "height_reduction",
    "stance_percentage",
    "extract_features",
]

SERIES_NAMES = (
    "feet_dist",
    "feet_angle",
    "right_x",
    "right_y",
    "left_x",
    "left_y",
    "left_knee_bent",
    "right_knee_bent",
    "imbalance",
    "tilt",
    "nose_x",
    "nose_y",
    "stance_flag",
)

SUBFEATURE_NAMES = ("mean", "std", "max", "min", "range", "entropy")

# the stance_flag series feeds the feature group named plain "stance"
_GROUP_OF = {name: ("stance" if name == "stance_flag" else name) for name in SERIES_NAMES}

#: the full 79-name vocabulary, in stable order: thirteen series groups,
#: six subfeatures each, then the height_reduction scalar
FEATURE_NAMES = tuple(
    f"{sub}_{_GROUP_OF[series]}" for series in SERIES_NAMES for sub in SUBFEATURE_NAMES
) + ("height_reduction",)

# keypoints with confidence below this are interpolated from neighbors
LOW_CONFIDENCE = 0.3
# a frame with more than this many low-confidence keypoints is dropped
MAX_BAD_KEYPOINTS = 8
# stationarity: both ankles moved less than this fraction of the skeleton
# height between consecutive frames
STANCE_EPS_FRACTION = 0.01


@dataclass(frozen=True)
class SeriesBundle:
    """The thirteen per-frame series, sharing one frame-index set."""

    frame_indices: tuple[int, ...]
    series: dict[str, np.ndarray]

    def __post_init__(self):
        if set(self.series) != set(SERIES_NAMES):
            raise ValidationError(
                f"series keys {sorted(self.series)} != expected {sorted(SERIES_NAMES)}"
            )
        n = len(self.frame_indices)
        for name, arr in self.series.items():
            if len(arr) != n:
                raise ValidationError(f"series {name}: length {len(arr)} != {n} frames")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.series[name]


@dataclass(frozen=True)
class FeatureVector:
    """Ordered (name, value) pairs; always exactly the 79-name vocabulary."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.names != FEATURE_NAMES:
            raise ValidationError("feature names must match the 79-name vocabulary")
        if len(self.values) != len(FEATURE_NAMES):
            raise ValidationError(f"expected {len(FEATURE_NAMES)} values, got {len(self.values)}")

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}


def _pose_arrays(pose: PoseSequence) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(frames, xy[n,17,2], conf[n,17]) with low-confidence joints interpolated.

    Frames with more than MAX_BAD_KEYPOINTS unreliable joints are dropped
    with a warning. Remaining low-confidence coordinates are linearly
    interpolated per joint from the nearest confident frames; leading and
    trailing gaps take the nearest confident value.
    """
    frames = np.array([f.frame_index for f in pose.frames], dtype=np.int64)
    xy = np.array([[(kp.x, kp.y) for kp in f.keypoints] for f in pose.frames], dtype=np.float64)
    conf = np.array([[kp.confidence for kp in f.keypoints] for f in pose.frames], dtype=np.float64)

    bad_per_frame = (conf < LOW_CONFIDENCE).sum(axis=1)
    keep = bad_per_frame <= MAX_BAD_KEYPOINTS
    if not keep.all():
        warnings.warn(
            f"dropping {int((~keep).sum())} frame(s) with more than "
            f"{MAX_BAD_KEYPOINTS} low-confidence keypoints",
            stacklevel=3,
        )
        frames, xy, conf = frames[keep], xy[keep], conf[keep]
    if len(frames) < 2:
        raise InsufficientDataError("fewer than 2 usable pose frames")

    t = frames.astype(np.float64)
    for j in range(17):
        ok = conf[:, j] >= LOW_CONFIDENCE
        if ok.all():
            continue
        if not ok.any():
            raise ValidationError(f"joint {j}: no confident observation in any frame")
        for axis in range(2):
            # np.interp extends with the nearest value beyond the ends
            xy[~ok, j, axis] = np.interp(t[~ok], t[ok], xy[ok, j, axis])
    return frames, xy, conf


def _angle_at(vertex: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Interior angle at `vertex` between segments to `a` and `b`, in [0, pi]."""
    va = a - vertex
    vb = b - vertex
    dot = (va * vb).sum(axis=1)
    norms = np.linalg.norm(va, axis=1) * np.linalg.norm(vb, axis=1)
    out = np.full(len(dot), math.pi)
    nz = norms > 1e-12
    out[nz] = np.arccos(np.clip(dot[nz] / norms[nz], -1.0, 1.0))
    return out


def extract_series(pose: PoseSequence) -> SeriesBundle:
    """Compute the thirteen per-frame series from a pose sequence.

    Angle conventions: feet_angle and tilt are the atan2 angle of the
    right-to-left segment (ankles, shoulders) against the +x axis, in
    (-pi, pi]; knee angles are the interior angle at the knee between the
    thigh and shank segments, pi for a straight leg.
    """
    if len(pose) < 2:
        raise InsufficientDataError("need at least 2 pose frames")
    frames, xy, _ = _pose_arrays(pose)

    l_ankle = xy[:, KP["left_ankle"]]
    r_ankle = xy[:, KP["right_ankle"]]
    l_shoulder = xy[:, KP["left_shoulder"]]
    r_shoulder = xy[:, KP["right_shoulder"]]
    l_hip = xy[:, KP["left_hip"]]
    r_hip = xy[:, KP["right_hip"]]
    nose = xy[:, KP["nose"]]

    feet_vec = l_ankle - r_ankle
    feet_dist = np.linalg.norm(feet_vec, axis=1)
    feet_angle = np.arctan2(feet_vec[:, 1], feet_vec[:, 0])

    left_knee = _angle_at(xy[:, KP["left_knee"]], l_hip, l_ankle)
    right_knee = _angle_at(xy[:, KP["right_knee"]], r_hip, r_ankle)

    mid_shoulder_x = 0.5 * (l_shoulder[:, 0] + r_shoulder[:, 0])
    mid_hip_x = 0.5 * (l_hip[:, 0] + r_hip[:, 0])
    imbalance = np.abs(mid_shoulder_x - mid_hip_x)

    shoulder_vec = l_shoulder - r_shoulder
    tilt = np.arctan2(shoulder_vec[:, 1], shoulder_vec[:, 0])

    # stationarity flag: neither ankle moved more than 1% of the current
    # skeleton height since the previous frame; frame 0 copies frame 1
    skel_height = xy[:, :, 1].max(axis=1) - xy[:, :, 1].min(axis=1)
    eps = STANCE_EPS_FRACTION * np.maximum(skel_height, 1e-9)
    l_step = np.linalg.norm(np.diff(l_ankle, axis=0), axis=1)
    r_step = np.linalg.norm(np.diff(r_ankle, axis=0), axis=1)
    moved = np.maximum(l_step, r_step)
    stance = np.empty(len(frames))
    stance[1:] = (moved < eps[1:]).astype(np.float64)
    stance[0] = stance[1]

    return SeriesBundle(
        frame_indices=tuple(int(f) for f in frames),
        series={
            "feet_dist": feet_dist,
            "feet_angle": feet_angle,
            "right_x": r_ankle[:, 0].copy(),
            "right_y": r_ankle[:, 1].copy(),
            "left_x": l_ankle[:, 0].copy(),
            "left_y": l_ankle[:, 1].copy(),
            "left_knee_bent": left_knee,
            "right_knee_bent": right_knee,
            "imbalance": imbalance,
            "tilt": tilt,
            "nose_x": nose[:, 0].copy(),
            "nose_y": nose[:, 1].copy(),
            "stance_flag": stance,
        },
    )


def spectral_entropy(series: np.ndarray) -> float:
    """Normalized Shannon entropy of the series' power spectrum, in [0, 1].

    The periodogram comes from the DFT of the mean-removed series; power in
    the positive-frequency bins (DC excluded, Nyquist included) is
    normalized to a distribution p and the result is
    -sum(p * log2(p)) / log2(K) for K bins. A single-tone signal scores
    near 0, white noise near 1. Constant input (zero total power) returns
    0 by convention.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or len(x) < 4:
        raise InsufficientDataError("spectral entropy needs a 1-D series of length >= 4")
    if not np.all(np.isfinite(x)):
        raise ValidationError("spectral entropy input contains non-finite values")

    power = np.abs(np.fft.rfft(x - x.mean())) ** 2
    power = power[1:]  # drop the DC bin
    total = power.sum()
    if total <= 0.0:
        return 0.0
    p = power / total
    p = p[p > 0.0]
    h = float(-(p * np.log2(p)).sum())
    return h / math.log2(len(power))


def subfeatures(series: np.ndarray) -> dict[str, float]:
    """The six summary statistics of one series.

    std is the population (biased) standard deviation; entropy is
    spectral_entropy. All-equal input degenerates to std 0, range 0,
    entropy 0.
    """
    x = np.asarray(series, dtype=np.float64)
    if len(x) < 2:
        raise InsufficientDataError("subfeatures need at least 2 values")
    if not np.all(np.isfinite(x)):
        raise ValidationError("subfeatures input contains non-finite values")
    mx = float(x.max())
    mn = float(x.min())
    return {
        "mean": float(x.mean()),
        "std": float(x.std()),
        "max": mx,
        "min": mn,
        "range": mx - mn,
        "entropy": spectral_entropy(x),
    }


def height_reduction(track: Track) -> float:
    """First minus last box height of the participant track; positive when
    the participant recedes from the camera."""
    if len(track) < 2:
        raise InsufficientDataError(
            f"track {track.track_id}: height_reduction needs >= 2 observations"
        )
    boxes = list(track.observations.values())
    return boxes[0].height - boxes[-1].height


def stance_percentage(stance_series: np.ndarray) -> float:
    """Percent of frames flagged stationary, in [0, 100]."""
    x = np.asarray(stance_series, dtype=np.float64)
    if len(x) == 0:
        raise InsufficientDataError("stance percentage needs at least 1 frame")
    return 100.0 * float(x.sum()) / len(x)


def extract_features(sample: GaitSample) -> FeatureVector:
    """The full 79-feature vector for one (clipped, isolated) sample.

    Coordinates stay in raw pixel units. The stance group's six
    subfeatures are computed on the per-frame 0/1 stationarity series, so
    mean_stance equals the stance percentage divided by 100.
    """
    bundle = extract_series(sample.pose)
    values = np.empty(len(FEATURE_NAMES), dtype=np.float64)
    pos = 0
    for series_name in SERIES_NAMES:
        stats = subfeatures(bundle[series_name])
        for sub in SUBFEATURE_NAMES:
            values[pos] = stats[sub]
            pos += 1
    values[pos] = height_reduction(sample.raw_track)

    if not np.all(np.isfinite(values)):
        bad = [FEATURE_NAMES[i] for i in np.flatnonzero(~np.isfinite(values))]
        raise ValidationError(f"{sample.video_id}: non-finite feature value(s): {bad}")
    return FeatureVector(names=FEATURE_NAMES, values=values)
