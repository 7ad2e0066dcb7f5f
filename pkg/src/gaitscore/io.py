"""JSON Lines readers/writers for the on-disk formats.

Formats:
  manifest:   {"video_id","site_id","participant_id","sara_gait_score","fps",
               "detections_path","landmarks_path"}
  detections: {"frame","x1","y1","x2","y2","confidence","label"}
  landmarks:  {"frame","track_id","keypoints":[[x,y,conf] x 17]}
  tracks:     {"track_id","frame","x1","y1","x2","y2"}

Relative paths inside a manifest are resolved against the manifest's
directory.
"""

from __future__ import annotations

import json
import os
from typing import Iterable

from .core import (
    BoundingBox,
    DatasetManifest,
    Detection,
    Keypoint,
    PoseFrame,
    PoseSequence,
    SampleRef,
    Track,
    ValidationError,
)

__all__ = [
    "load_manifest",
    "save_manifest",
    "load_detections",
    "save_detections",
    "load_landmarks",
    "save_landmarks",
    "load_tracks",
    "save_tracks",
]

_MANIFEST_KEYS = {
    "video_id", "site_id", "participant_id", "sara_gait_score",
    "fps", "detections_path", "landmarks_path",
}


def _iter_jsonl(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: malformed JSON ({exc})") from exc


def _write_jsonl(path: str, records: Iterable[dict]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def load_manifest(path: str) -> DatasetManifest:
    """Parse and validate a manifest file.

    Raises ValidationError on malformed records, out-of-range scores,
    duplicate video ids or an empty file.
    """
    base = os.path.dirname(os.path.abspath(path))
    refs = []
    for lineno, rec in _iter_jsonl(path):
        unknown = set(rec) - _MANIFEST_KEYS
        if unknown:
            raise ValidationError(f"{path}:{lineno}: unknown manifest keys {sorted(unknown)}")
        missing = _MANIFEST_KEYS - set(rec)
        if missing:
            raise ValidationError(f"{path}:{lineno}: missing manifest keys {sorted(missing)}")
        score = rec["sara_gait_score"]
        if not isinstance(score, int) or isinstance(score, bool):
            raise ValidationError(
                f"{path}:{lineno}: sara_gait_score must be an integer, got {score!r}"
            )
        try:
            ref = SampleRef(
                video_id=str(rec["video_id"]),
                site_id=str(rec["site_id"]),
                participant_id=str(rec["participant_id"]),
                sara_gait_score=score,
                fps=float(rec["fps"]),
                detections_path=_resolve(base, str(rec["detections_path"])),
                landmarks_path=_resolve(base, str(rec["landmarks_path"])),
            )
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from exc
        refs.append(ref)
    return DatasetManifest(tuple(refs))


def save_manifest(manifest: DatasetManifest, path: str, relative_to: str | None = None) -> None:
    def _path(p: str) -> str:
        return os.path.relpath(p, relative_to) if relative_to else p

    _write_jsonl(path, (
        {
            "video_id": s.video_id,
            "site_id": s.site_id,
            "participant_id": s.participant_id,
            "sara_gait_score": s.sara_gait_score,
            "fps": s.fps,
            "detections_path": _path(s.detections_path),
            "landmarks_path": _path(s.landmarks_path),
        }
        for s in manifest.samples
    ))


def _resolve(base: str, p: str) -> str:
    return p if os.path.isabs(p) else os.path.join(base, p)


def load_detections(path: str) -> list[Detection]:
    dets = []
    for lineno, rec in _iter_jsonl(path):
        try:
            dets.append(Detection(
                frame_index=int(rec["frame"]),
                box=BoundingBox(float(rec["x1"]), float(rec["y1"]),
                                float(rec["x2"]), float(rec["y2"])),
                confidence=float(rec["confidence"]),
                label=str(rec.get("label", "person")),
            ))
        except (KeyError, ValidationError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}:{lineno}: bad detection record ({exc})") from exc
    return dets


def save_detections(detections: Iterable[Detection], path: str) -> None:
    _write_jsonl(path, (
        {
            "frame": d.frame_index,
            "x1": d.box.x1, "y1": d.box.y1, "x2": d.box.x2, "y2": d.box.y2,
            "confidence": d.confidence,
            "label": d.label,
        }
        for d in detections
    ))


def load_landmarks(path: str, fps: float) -> dict[int, PoseSequence]:
    """Read a landmarks file into one PoseSequence per track_id."""
    frames_by_track: dict[int, list[PoseFrame]] = {}
    for lineno, rec in _iter_jsonl(path):
        try:
            tid = int(rec["track_id"])
            kps = rec["keypoints"]
            if len(kps) != 17:
                raise ValidationError(f"expected 17 keypoints, got {len(kps)}")
            frame = PoseFrame(
                frame_index=int(rec["frame"]),
                keypoints=tuple(Keypoint(float(x), float(y), float(c)) for x, y, c in kps),
            )
        except (KeyError, ValidationError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}:{lineno}: bad landmark record ({exc})") from exc
        frames_by_track.setdefault(tid, []).append(frame)

    out = {}
    for tid, frames in frames_by_track.items():
        frames.sort(key=lambda f: f.frame_index)
        out[tid] = PoseSequence(track_id=tid, frames=tuple(frames), fps=fps)
    return out


def save_landmarks(sequences: Iterable[PoseSequence], path: str) -> None:
    def _records():
        for seq in sequences:
            for frame in seq.frames:
                yield {
                    "frame": frame.frame_index,
                    "track_id": seq.track_id,
                    "keypoints": [[kp.x, kp.y, kp.confidence] for kp in frame.keypoints],
                }

    _write_jsonl(path, _records())


def load_tracks(path: str) -> list[Track]:
    obs_by_track: dict[int, dict[int, BoundingBox]] = {}
    for lineno, rec in _iter_jsonl(path):
        try:
            tid = int(rec["track_id"])
            frame = int(rec["frame"])
            box = BoundingBox(float(rec["x1"]), float(rec["y1"]),
                              float(rec["x2"]), float(rec["y2"]))
        except (KeyError, ValidationError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}:{lineno}: bad track record ({exc})") from exc
        obs_by_track.setdefault(tid, {})[frame] = box
    return [
        Track(tid, dict(sorted(obs.items())))
        for tid, obs in sorted(obs_by_track.items())
    ]


def save_tracks(tracks: Iterable[Track], path: str) -> None:
    def _records():
        for t in tracks:
            for frame, box in t.observations.items():
                yield {
                    "track_id": t.track_id,
                    "frame": frame,
                    "x1": box.x1, "y1": box.y1, "x2": box.x2, "y2": box.y2,
                }

    _write_jsonl(path, _records())
