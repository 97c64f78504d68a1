"""Decoding source videos into RGB frames.

A video is either a regular container file readable by OpenCV or a
directory of still images (one per frame, ordered by file name).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import cv2
import numpy as np

from ..catalog import VideoRecord
from ..errors import UndecodableVideo, ZeroFrames

FRAME_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp"}


@dataclass(frozen=True)
class FrameImage:
    video_id: str
    frame_index: int
    pixels: np.ndarray  # H×W×3 uint8, RGB


def read_rgb(path) -> np.ndarray:
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise UndecodableVideo(f"cannot decode image {path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


def write_rgb(path, pixels: np.ndarray) -> None:
    ok = cv2.imwrite(str(path), cv2.cvtColor(pixels, cv2.COLOR_RGB2BGR))
    if not ok:
        raise OSError(f"failed to write image {path}")


def _frame_files(folder: Path) -> list[Path]:
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)


def _iter_folder(video: VideoRecord) -> Iterator[FrameImage]:
    for i, path in enumerate(_frame_files(video.path)):
        yield FrameImage(video.video_id, i, read_rgb(path))


def _iter_container(video: VideoRecord) -> Iterator[FrameImage]:
    cap = cv2.VideoCapture(str(video.path))
    if not cap.isOpened():
        raise UndecodableVideo(f"{video.video_id}: cannot open {video.path}")
    try:
        i = 0
        while True:
            ok, bgr = cap.read()
            if not ok:
                break
            yield FrameImage(video.video_id, i, cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB))
            i += 1
    finally:
        cap.release()


def extract_frames(video: VideoRecord) -> Iterator[FrameImage]:
    """Yield every decoded frame of ``video`` in temporal order.

    Decoding is lazy so the caller can stop once it has accepted enough
    qualifying frames. Raises :class:`ZeroFrames` after the last frame if the
    source held none.
    """
    path = Path(video.path)
    if not path.exists():
        raise UndecodableVideo(f"{video.video_id}: {path} does not exist")
    frames = _iter_folder(video) if path.is_dir() else _iter_container(video)
    count = 0
    for frame in frames:
        if frame.pixels.ndim != 3 or frame.pixels.shape[2] != 3 or 0 in frame.pixels.shape:
            raise UndecodableVideo(
                f"{video.video_id}: frame {frame.frame_index} has shape {frame.pixels.shape}"
            )
        count += 1
        yield frame
    if count == 0:
        raise ZeroFrames(f"{video.video_id}: no frames decoded from {path}")
