"""Face detectors and the confidence gate.

A detector is any callable ``image -> list of (confidence, landmarks)`` where
``image`` is an H×W×3 uint8 RGB array and ``landmarks`` is a sequence of
``(x, y)`` pixel coordinates. Three are provided:

* :class:`StaticDetector` returns a fixed answer (boundary tests),
* :class:`LookupDetector` answers from a table keyed by the frame's pixel
  digest (the bundled synthetic fixture),
* :class:`MediaPipeDetector` wraps the MediaPipe face detector task.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..errors import DetectorFailure, MissingFile, SchemaViolation
from .frames import FrameImage

Candidate = tuple[float, Sequence[tuple[float, float]]]
Detector = Callable[[np.ndarray], Sequence[Candidate]]

DEFAULT_THRESHOLD = 0.8


@dataclass(frozen=True)
class FaceDetection:
    confidence: float
    landmarks: tuple[tuple[float, float], ...]
    bbox: tuple[float, float, float, float]

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.bbox
        return (x1 - x0) * (y1 - y0)


def landmark_bbox(landmarks, width: int, height: int) -> tuple[float, float, float, float]:
    """Tight axis-aligned hull of ``landmarks`` clipped to the image."""
    pts = np.asarray(landmarks, dtype=np.float64).reshape(-1, 2)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    return (
        float(np.clip(x0, 0, width)),
        float(np.clip(y0, 0, height)),
        float(np.clip(x1, 0, width)),
        float(np.clip(y1, 0, height)),
    )


def frame_digest(pixels: np.ndarray) -> str:
    arr = np.ascontiguousarray(pixels, dtype=np.uint8)
    h = hashlib.sha256()
    h.update(repr(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


def detect_face(
    frame: FrameImage, detector: Detector, threshold: float = DEFAULT_THRESHOLD
) -> FaceDetection | None:
    """Best face in ``frame`` with confidence >= ``threshold``, or None if rejected.

    Ties on confidence go to the larger box. Candidates with fewer than four
    landmarks or a zero-area hull are ignored.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    height, width = frame.pixels.shape[:2]
    try:
        candidates = list(detector(frame.pixels))
    except DetectorFailure:
        raise
    except Exception as exc:
        raise DetectorFailure(
            f"{frame.video_id}#{frame.frame_index}: {type(exc).__name__}: {exc}"
        ) from exc

    best = None
    for confidence, landmarks in candidates:
        confidence = float(confidence)
        if not np.isfinite(confidence) or confidence < threshold:
            continue
        points = tuple((float(x), float(y)) for x, y in landmarks)
        if len(points) < 4:
            continue
        bbox = landmark_bbox(points, width, height)
        if bbox[2] <= bbox[0] or bbox[3] <= bbox[1]:
            continue
        det = FaceDetection(confidence=min(confidence, 1.0), landmarks=points, bbox=bbox)
        if best is None or (det.confidence, det.area) > (best.confidence, best.area):
            best = det
    return best


class StaticDetector:
    """Returns the same candidates for every image."""

    def __init__(self, candidates: Sequence[Candidate]):
        self.candidates = [(float(c), [tuple(p) for p in lm]) for c, lm in candidates]

    def __call__(self, image):
        return list(self.candidates)


class LookupDetector:
    """Deterministic stub that looks frames up by pixel digest.

    The table maps ``frame_digest(pixels)`` to a list of
    ``{"confidence": float, "landmarks": [[x, y], ...]}`` entries; unknown
    frames yield no faces.
    """

    def __init__(self, table: dict[str, list[dict]]):
        self.table = table

    @classmethod
    def from_file(cls, path) -> "LookupDetector":
        path = Path(path)
        if not path.is_file():
            raise MissingFile(f"detection table not found: {path}")
        try:
            table = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"detection table {path}: {exc}") from None
        return cls(table)

    def __call__(self, image):
        entries = self.table.get(frame_digest(image), [])
        return [(e["confidence"], [tuple(p) for p in e["landmarks"]]) for e in entries]


class MediaPipeDetector:
    """Adapter over ``mediapipe.tasks`` face detection.

    Needs the optional ``mediapipe`` package and a face-detector ``.tflite``
    model file. The detector's own score floor is set to zero so that the
    pipeline's gate is the only threshold in force. Landmarks are the task's
    keypoints plus the four corners of its box, so the landmark hull covers
    the whole face box.
    """

    def __init__(self, model_path, min_suppression_threshold: float = 0.3):
        try:
            import mediapipe as mp
            from mediapipe.tasks.python import BaseOptions
            from mediapipe.tasks.python import vision
        except ImportError as exc:
            raise DetectorFailure(
                "MediaPipeDetector needs the 'mediapipe' package (pip install mediapipe)"
            ) from exc
        model_path = Path(model_path)
        if not model_path.is_file():
            raise MissingFile(f"face detector model not found: {model_path}")
        options = vision.FaceDetectorOptions(
            base_options=BaseOptions(model_asset_path=str(model_path)),
            min_detection_confidence=0.0,
            min_suppression_threshold=min_suppression_threshold,
        )
        self._mp = mp
        self._task = vision.FaceDetector.create_from_options(options)

    def __call__(self, image):
        height, width = image.shape[:2]
        mp_image = self._mp.Image(
            image_format=self._mp.ImageFormat.SRGB, data=np.ascontiguousarray(image)
        )
        result = self._task.detect(mp_image)
        out = []
        for det in result.detections:
            score = max((c.score for c in det.categories), default=0.0)
            box = det.bounding_box
            x0, y0 = box.origin_x, box.origin_y
            x1, y1 = x0 + box.width, y0 + box.height
            points = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
            points += [(kp.x * width, kp.y * height) for kp in det.keypoints or []]
            out.append((score, points))
        return out

    def close(self):
        self._task.close()


def make_detector(kind: str, path=None) -> Detector:
    """Build a detector from its config name (``lookup`` or ``mediapipe``)."""
    if kind == "lookup":
        if path is None:
            raise ValueError("the lookup detector needs a detection table path")
        return LookupDetector.from_file(path)
    if kind == "mediapipe":
        if path is None:
            raise ValueError("the mediapipe detector needs a .tflite model path")
        return MediaPipeDetector(path)
    raise ValueError(f"unknown detector kind {kind!r}")
