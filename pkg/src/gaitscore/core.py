"""Shared domain types, deterministic randomness and clip handling.

Everything downstream (tracking, isolation, feature extraction, modelling)
works in terms of the types defined here. All types are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GaitError",
    "ValidationError",
    "InsufficientDataError",
    "BoundingBox",
    "Detection",
    "Track",
    "Keypoint",
    "PoseFrame",
    "PoseSequence",
    "GaitSample",
    "SampleRef",
    "DatasetManifest",
    "SeededRng",
    "COCO_KEYPOINT_NAMES",
    "KP",
    "clip_first_seconds",
]


class GaitError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(GaitError):
    """Input data violates a documented invariant."""


class InsufficientDataError(GaitError):
    """Too few frames/observations to compute the requested quantity."""


# COCO-17 keypoint ordering. Every PoseFrame carries exactly these joints,
# in exactly this order.
COCO_KEYPOINT_NAMES = (
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)

#: name -> index lookup for the COCO-17 schema
KP = {name: i for i, name in enumerate(COCO_KEYPOINT_NAMES)}


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box; image coordinates, y grows downward."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ValidationError(
                f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2}): "
                "width and height must be strictly positive"
            )

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
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))


@dataclass(frozen=True)
class Detection:
    """One detector output box in one frame."""

    frame_index: int
    box: BoundingBox
    confidence: float
    label: str = "person"

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValidationError(f"negative frame_index {self.frame_index}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class Track:
    """Identity-stamped box sequence; at most one box per frame."""

    track_id: int
    observations: dict[int, BoundingBox]  # frame_index -> box, insertion-ordered
    hit_streak: int = 0
    age: int = 0

    def __post_init__(self):
        if self.track_id < 0:
            raise ValidationError(f"negative track_id {self.track_id}")
        frames = list(self.observations)
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValidationError(
                f"track {self.track_id}: frame indices must be strictly increasing"
            )

    @property
    def frames(self) -> list[int]:
        return list(self.observations)

    def __len__(self) -> int:
        return len(self.observations)


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    confidence: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(f"keypoint confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class PoseFrame:
    """One frame of a 17-keypoint COCO skeleton."""

    frame_index: int
    keypoints: tuple[Keypoint, ...]

    def __post_init__(self):
        if len(self.keypoints) != 17:
            raise ValidationError(
                f"frame {self.frame_index}: expected 17 keypoints, got {len(self.keypoints)}"
            )

    def __getitem__(self, joint: str) -> Keypoint:
        return self.keypoints[KP[joint]]


@dataclass(frozen=True)
class PoseSequence:
    """Per-frame skeletons for one tracked person."""

    track_id: int
    frames: tuple[PoseFrame, ...]
    fps: float

    def __post_init__(self):
        if self.fps <= 0:
            raise ValidationError(f"fps must be positive, got {self.fps}")
        idx = [f.frame_index for f in self.frames]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValidationError("pose frame indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class GaitSample:
    """One labeled walk: metadata plus the participant's pose and box track."""

    video_id: str
    site_id: str
    participant_id: str
    sara_gait_score: int
    fps: float
    pose: PoseSequence
    raw_track: Track

    def __post_init__(self):
        if not 0 <= self.sara_gait_score <= 8:
            raise ValidationError(
                f"{self.video_id}: sara_gait_score {self.sara_gait_score} outside [0, 8]"
            )
        if self.fps <= 0:
            raise ValidationError(f"{self.video_id}: fps must be positive")
        if self.pose.fps != self.fps:
            raise ValidationError(
                f"{self.video_id}: pose fps {self.pose.fps} != sample fps {self.fps}"
            )


@dataclass(frozen=True)
class SampleRef:
    """Manifest row: metadata plus paths to the per-video data files."""

    video_id: str
    site_id: str
    participant_id: str
    sara_gait_score: int
    fps: float
    detections_path: str
    landmarks_path: str

    def __post_init__(self):
        if not 0 <= self.sara_gait_score <= 8:
            raise ValidationError(
                f"{self.video_id}: sara_gait_score {self.sara_gait_score} outside [0, 8]"
            )
        if self.fps <= 0:
            raise ValidationError(f"{self.video_id}: fps must be positive")
        if not self.site_id:
            raise ValidationError(f"{self.video_id}: empty site_id")


@dataclass(frozen=True)
class DatasetManifest:
    samples: tuple[SampleRef, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.samples:
            raise ValidationError("empty manifest")
        seen = set()
        for s in self.samples:
            if s.video_id in seen:
                raise ValidationError(f"duplicate video_id {s.video_id!r}")
            seen.add(s.video_id)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def sites(self) -> list[str]:
        out = []
        for s in self.samples:
            if s.site_id not in out:
                out.append(s.site_id)
        return out

    def class_counts(self) -> dict[int, int]:
        """Risk-task class sizes: 0 for score 0, 1 for score > 0."""
        counts = {0: 0, 1: 0}
        for s in self.samples:
            counts[1 if s.sara_gait_score > 0 else 0] += 1
        return counts


_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, (z ^ (z >> 31)) & _MASK64


class SeededRng:
    """Deterministic PRNG with a platform-independent stream.

    The generator is splitmix64 (Steele et al.'s SplittableRandom finalizer):
    64-bit state, one addition and two xor-multiply mixes per draw. Integer
    arithmetic only, so equal seeds give bit-equal streams everywhere,
    including inside the compiled kernels, which embed the same constants.
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state, out = _splitmix64(self._state)
        return out

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        # 53 high bits -> double in [0, 1)
        u = self.next_u64() >> 11
        return low + (high - low) * (u * (1.0 / 9007199254740992.0))

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) via multiply-shift (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return (self.next_u64() * n) >> 64

    def u64_array(self, count: int) -> np.ndarray:
        """Vectorized draws, bit-equal to `count` next_u64() calls.

        splitmix64 is counter-based, so the whole block reduces to mixing
        state + i * golden for i = 1..count.
        """
        i = np.arange(1, count + 1, dtype=np.uint64)
        z = np.uint64(self._state) + np.uint64(0x9E3779B97F4A7C15) * i
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        self._state = (self._state + 0x9E3779B97F4A7C15 * count) & _MASK64
        return z

    def randint_array(self, n: int, count: int) -> np.ndarray:
        """Vectorized randint; bit-equal to `count` randint(n) calls."""
        if n <= 0:
            raise ValueError("n must be positive")
        u = self.u64_array(count)
        # 64x64 -> high 64 bits of the product, pieced from 32-bit halves
        b = np.uint64(n)
        m32 = np.uint64(0xFFFFFFFF)
        s32 = np.uint64(32)
        al, ah = u & m32, u >> s32
        bl, bh = b & m32, b >> s32
        lo_lo = al * bl
        hi_lo = ah * bl
        cross = (lo_lo >> s32) + (hi_lo & m32) + al * bh
        hi = ah * bh + (hi_lo >> s32) + (cross >> s32)
        return hi.astype(np.int64)

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        # Box-Muller; draws two uniforms per call, no caching, so the
        # stream position is a pure function of call count.
        u1 = self.uniform()
        u2 = self.uniform()
        while u1 <= 0.0:
            u1 = self.uniform()
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def derive(self, label: int) -> "SeededRng":
        """Independent child stream keyed by (current state, label)."""
        _, mixed = _splitmix64((self._state ^ label) & _MASK64)
        return SeededRng(mixed)


def clip_first_seconds(sample: GaitSample, duration: float) -> GaitSample:
    """Restrict a sample to frames with frame_index < floor(duration * fps).

    Samples shorter than the clip are kept whole with a warning; metadata is
    unchanged. Idempotent for a fixed duration.
    """
    if duration <= 0:
        raise ValidationError(f"clip duration must be positive, got {duration}")
    if len(sample.pose) == 0 and len(sample.raw_track) == 0:
        raise InsufficientDataError(f"{sample.video_id}: sample has no frames")

    limit = math.floor(duration * sample.fps)
    kept_frames = tuple(f for f in sample.pose.frames if f.frame_index < limit)
    kept_obs = {fr: box for fr, box in sample.raw_track.observations.items() if fr < limit}
    if not kept_frames and not kept_obs:
        raise InsufficientDataError(
            f"{sample.video_id}: clipping to {duration}s would drop every frame"
        )

    n_before = max(len(sample.pose), len(sample.raw_track))
    if n_before and max(len(kept_frames), len(kept_obs)) == n_before:
        max_idx = max(
            [f.frame_index for f in sample.pose.frames] + list(sample.raw_track.observations),
            default=-1,
        )
        if max_idx < limit - 1:
            warnings.warn(
                f"{sample.video_id}: shorter than the {duration}s clip; keeping all frames",
                stacklevel=2,
            )

    return GaitSample(
        video_id=sample.video_id,
        site_id=sample.site_id,
        participant_id=sample.participant_id,
        sara_gait_score=sample.sara_gait_score,
        fps=sample.fps,
        pose=PoseSequence(sample.pose.track_id, kept_frames, sample.pose.fps),
        raw_track=Track(sample.raw_track.track_id, kept_obs,
                        sample.raw_track.hit_streak, sample.raw_track.age),
    )
