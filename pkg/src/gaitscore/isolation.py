"""Participant isolation among tracked people.

The camera sits behind the participant, who walks away from it for the
whole analysis window, so the participant's box height falls steadily.
Doctors hover near a fixed height and passersby exist for only a few
frames, so summing consecutive height drops over a track separates the
participant from everyone else: the sum telescopes to first-minus-last
height and is maximized by the person who receded farthest.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import InsufficientDataError, Track, ValidationError

__all__ = ["HeightSeries", "IsolationResult", "height_change_score", "select_participant"]


@dataclass(frozen=True)
class HeightSeries:
    """Per-frame box heights for one track."""

    track_id: int
    heights: tuple[tuple[int, float], ...]  # (frame_index, height) pairs

    def __post_init__(self):
        frames = [f for f, _ in self.heights]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValidationError(f"track {self.track_id}: frame indices must increase")
        if any(h <= 0 for _, h in self.heights):
            raise ValidationError(f"track {self.track_id}: non-positive height")

    @classmethod
    def from_track(cls, track: Track) -> "HeightSeries":
        return cls(track.track_id,
                   tuple((f, box.height) for f, box in track.observations.items()))


@dataclass(frozen=True)
class IsolationResult:
    selected_track_id: int
    scores: dict[int, float]  # every eligible track's score, for audit


def height_change_score(series: HeightSeries) -> float:
    """Sum of consecutive height drops; telescopes to first minus last.

    Gaps inside a track are skipped: differences are taken between
    consecutive observed frames, which leaves the telescoped value intact.
    """
    if len(series.heights) < 2:
        raise InsufficientDataError(
            f"track {series.track_id}: insufficient observations "
            f"({len(series.heights)} < 2)"
        )
    heights = [h for _, h in series.heights]
    return sum(a - b for a, b in zip(heights, heights[1:]))


def select_participant(tracks: list[Track]) -> IsolationResult:
    """Pick the track with the highest height-change score.

    Tracks with fewer than two observations are ineligible (transient
    passersby mostly fall out here or score near zero). Ties go to the
    lowest track id. Raises if no track is eligible.
    """
    scores: dict[int, float] = {}
    for t in sorted(tracks, key=lambda t: t.track_id):
        if len(t) < 2:
            continue
        scores[t.track_id] = height_change_score(HeightSeries.from_track(t))
    if not scores:
        raise InsufficientDataError("no track with >= 2 observations to choose from")

    best_id = min(scores, key=lambda tid: (-scores[tid], tid))
    return IsolationResult(selected_track_id=best_id, scores=scores)
