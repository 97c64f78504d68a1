"""Tiny synthetic corpus: "videos" as frame folders plus a detection table.

Each video is a folder of PNG frames showing one elliptical "face" on a
noisy background. Real faces are skin-toned, fake faces are tinted, so the
two classes are easy to separate. Frame confidences are scripted: two frames
per video fall below 0.8 and one sits exactly on it, which exercises the gate.

Run ``python -m dfdetect.fixture <dir>`` to (re)generate the bundled copy.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import cv2
import numpy as np

from .facepipe.detect import frame_digest
from .facepipe.frames import write_rgb

FRAME_SHAPE = (120, 160)  # rows, cols
FRAMES_PER_VIDEO = 10
REJECTED_FRAMES = {3, 7}  # confidence 0.75
BOUNDARY_FRAME = 5  # confidence exactly 0.8
REAL_TONE = (205, 160, 130)
FAKE_TONE = (120, 175, 225)

FIXTURE_CONFIG = """\
# Desk-scale run over the bundled synthetic fixture.
seed: 0
backbone_id: reference-small
pretrained: false
split:
  test_fraction: 0.25
  val_fraction: 0.5
pipeline:
  threshold: 0.8
  max_qualifying: 500
  margin_fraction: 0.1
detector:
  kind: lookup
  path: detections.json
train:
  learning_rate: 0.0001
  weight_decay: 0.005
  batch_size: 32
  epochs: 40
evaluate:
  decision_threshold: 0.5
paths:
  manifest: manifest.csv
"""


def _frame(rng, tone, center, axes, angle):
    rows, cols = FRAME_SHAPE
    coarse = rng.integers(30, 90, size=(rows // 20, cols // 20, 3)).astype(np.uint8)
    img = cv2.resize(coarse, (cols, rows), interpolation=cv2.INTER_LINEAR)
    cv2.ellipse(img, center, axes, angle, 0, 360, tone, thickness=-1)
    cx, cy = center
    ax, ay = axes
    # eyes and mouth, darker blobs inside the face
    for dx, dy in ((-ax // 2, -ay // 3), (ax // 2, -ay // 3)):
        cv2.circle(img, (cx + dx, cy + dy), max(2, ax // 8), (40, 40, 40), -1)
    cv2.ellipse(img, (cx, cy + ay // 2), (ax // 3, max(2, ay // 10)), 0, 0, 360, (90, 30, 40), -1)
    noise = rng.integers(-2, 3, size=img.shape)
    return np.clip(img.astype(np.int16) + noise, 0, 255).astype(np.uint8)


def _landmarks(center, axes, angle):
    cx, cy = center
    ax, ay = axes
    t = np.deg2rad(angle)
    rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    local = np.array([[-ax, 0], [ax, 0], [0, -ay], [0, ay],
                      [-ax / 2, -ay / 3], [ax / 2, -ay / 3], [0, ay / 2]], dtype=np.float64)
    pts = local @ rot.T + np.array([cx, cy])
    return [[round(float(x), 3), round(float(y), 3)] for x, y in pts]


def _confidence(frame_index: int, rng) -> float:
    if frame_index in REJECTED_FRAMES:
        return 0.75
    if frame_index == BOUNDARY_FRAME:
        return 0.8
    return round(float(rng.uniform(0.85, 0.99)), 4)


def make_fixture(root, n_per_class: int = 4, frames: int = FRAMES_PER_VIDEO, seed: int = 7) -> Path:
    """Write manifest.csv, detections.json, config.yaml and videos/ under ``root``."""
    root = Path(root)
    (root / "videos").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    table: dict[str, list[dict]] = {}
    manifest = ["video_id,label,path"]
    rows, cols = FRAME_SHAPE
    for label, tone in (("real", REAL_TONE), ("fake", FAKE_TONE)):
        for k in range(n_per_class):
            video_id = f"{label}{k:02d}"
            folder = root / "videos" / video_id
            folder.mkdir(exist_ok=True)
            for old in folder.glob("*.png"):
                old.unlink()
            base = (int(rng.integers(55, cols - 55)), int(rng.integers(45, rows - 45)))
            axes = (int(rng.integers(26, 34)), int(rng.integers(34, 42)))
            for i in range(frames):
                center = (base[0] + int(rng.integers(-4, 5)), base[1] + int(rng.integers(-3, 4)))
                angle = int(rng.integers(-10, 11))
                pixels = _frame(rng, tone, center, axes, angle)
                write_rgb(folder / f"frame_{i:04d}.png", pixels)
                table[frame_digest(pixels)] = [
                    {"confidence": _confidence(i, rng), "landmarks": _landmarks(center, axes, angle)}
                ]
            manifest.append(f"{video_id},{label},videos/{video_id}")
    (root / "manifest.csv").write_text("\n".join(manifest) + "\n", encoding="utf-8")
    (root / "detections.json").write_text(json.dumps(table, sort_keys=True, indent=1) + "\n",
                                          encoding="utf-8")
    (root / "config.yaml").write_text(FIXTURE_CONFIG, encoding="utf-8")
    return root


def qualifying_frames_per_video(frames: int = FRAMES_PER_VIDEO) -> int:
    return frames - len(REJECTED_FRAMES & set(range(frames)))


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("fixtures/synthetic")
    print(make_fixture(out))
