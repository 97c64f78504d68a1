"""
From frames to 224x224 face crops
=================================

Each frame goes through the detector; only faces scored at 0.8 or above are
kept. The landmark hull plus a small margin is cropped and resized to 224x224.
The bundled fixture uses a lookup detector so this runs without model files.
"""

import tempfile
from pathlib import Path

import numpy as np

from dfdetect.catalog import balance_classes, load_catalog, split_videos
from dfdetect.facepipe import (LookupDetector, PipelineConfig, build_face_dataset, crop_box,
                               detect_face, extract_frames, landmark_bbox, normalize_resize)

fixture = Path(__file__).resolve().parents[1] / "fixtures" / "synthetic"
catalog = load_catalog(fixture / "manifest.csv")
detector = LookupDetector.from_file(fixture / "detections.json")

# Walk one video by hand.
video = catalog.records[0]
for frame in extract_frames(video):
    face = detect_face(frame, detector, threshold=0.8)
    if face is None:
        print(f"frame {frame.frame_index}: rejected")
        continue
    h, w = frame.pixels.shape[:2]
    box = crop_box(landmark_bbox(face.landmarks, w, h), w, h, 0.10)
    tensor = normalize_resize(frame.pixels[box[1]:box[3], box[0]:box[2]])
    print(f"frame {frame.frame_index}: confidence {face.confidence:.2f}, crop {box}, "
          f"tensor {tensor.shape}, mean {tensor.mean():+.3f}")

# The dataset builder does the same for every video and writes an index.
plan = split_videos(balance_classes(catalog, 0), 0.25, 0.5, seed=0)
with tempfile.TemporaryDirectory() as tmp:
    result = build_face_dataset(catalog, plan, PipelineConfig(), Path(tmp), detector)
    print(len(result.rows), "face samples")
    print(result.index_path.read_text().splitlines()[:3])
    print("confidences:", np.unique([r.confidence for r in result.rows]))
