from __future__ import annotations

import math

import cv2
import numpy as np

from ..errors import DegenerateBox, DegenerateInput
from .detect import FaceDetection
from .frames import FrameImage

FACE_SIZE = (224, 224)
# ImageNet statistics used by torchvision's pretrained backbones
IMAGENET_MEANS = (0.485, 0.456, 0.406)
IMAGENET_STDS = (0.229, 0.224, 0.225)
DEFAULT_MARGIN = 0.10


def crop_box(bbox, width: int, height: int, margin_fraction: float = DEFAULT_MARGIN):
    """Integer crop window: ``bbox`` grown by ``margin_fraction`` of its side, clipped.

    Returns ``(x0, y0, x1, y1)`` with half-open pixel ranges ``[x0, x1)``.
    Floor/ceil rounding keeps every point of the original box inside.
    """
    if margin_fraction < 0:
        raise ValueError(f"margin_fraction must be >= 0, got {margin_fraction}")
    bx0, by0, bx1, by1 = bbox
    mx = margin_fraction * (bx1 - bx0)
    my = margin_fraction * (by1 - by0)
    x0 = max(0, math.floor(bx0 - mx))
    y0 = max(0, math.floor(by0 - my))
    x1 = min(width, math.ceil(bx1 + mx))
    y1 = min(height, math.ceil(by1 + my))
    if x1 <= x0 or y1 <= y0:
        raise DegenerateBox(f"crop window {(x0, y0, x1, y1)} is empty for bbox {tuple(bbox)}")
    return x0, y0, x1, y1


def crop_face(
    frame: FrameImage, detection: FaceDetection, margin_fraction: float = DEFAULT_MARGIN
) -> np.ndarray:
    height, width = frame.pixels.shape[:2]
    x0, y0, x1, y1 = crop_box(detection.bbox, width, height, margin_fraction)
    return frame.pixels[y0:y1, x0:x1].copy()


def resize_face(crop: np.ndarray, target=FACE_SIZE) -> np.ndarray:
    """Bilinear resize of an 8-bit crop to ``target`` (rows, cols)."""
    crop = np.asarray(crop)
    if crop.ndim != 3 or crop.shape[2] != 3 or crop.shape[0] == 0 or crop.shape[1] == 0:
        raise DegenerateInput(f"expected a non-empty H×W×3 crop, got shape {crop.shape}")
    if crop.dtype != np.uint8:
        raise DegenerateInput(f"expected uint8 pixels, got {crop.dtype}")
    rows, cols = target
    if crop.shape[:2] == (rows, cols):
        return crop.copy()
    return cv2.resize(crop, (cols, rows), interpolation=cv2.INTER_LINEAR)


def standardize(pixels: np.ndarray, channel_means=IMAGENET_MEANS, channel_stds=IMAGENET_STDS):
    """Scale 8-bit pixels to [0, 1] and standardize per channel (float32, H×W×3)."""
    means = np.asarray(channel_means, dtype=np.float32).reshape(1, 1, 3)
    stds = np.asarray(channel_stds, dtype=np.float32).reshape(1, 1, 3)
    if np.any(stds <= 0):
        raise DegenerateInput(f"channel stds must be positive, got {tuple(channel_stds)}")
    return (pixels.astype(np.float32) / np.float32(255.0) - means) / stds


def normalize_resize(
    crop: np.ndarray,
    target=FACE_SIZE,
    channel_means=IMAGENET_MEANS,
    channel_stds=IMAGENET_STDS,
) -> np.ndarray:
    """Resize to ``target`` then standardize; the result is what the model sees.

    The resize happens on 8-bit data so the stored PNG of a face reproduces
    these values exactly when reloaded.
    """
    return standardize(resize_face(crop, target), channel_means, channel_stds)
