import hashlib

import cv2
import numpy as np
import pytest

from dfdetect.catalog import Catalog, Label, Partition, SplitPlan, VideoRecord
from dfdetect.errors import (
    DegenerateBox,
    DegenerateInput,
    DetectorFailure,
    UndecodableVideo,
    ZeroFrames,
)
from dfdetect.facepipe import (
    FaceDetection,
    FrameImage,
    LookupDetector,
    PipelineConfig,
    StaticDetector,
    build_face_dataset,
    crop_box,
    crop_face,
    detect_face,
    extract_frames,
    frame_digest,
    landmark_bbox,
    normalize_resize,
    process_video,
    read_index,
    read_rgb,
    write_rgb,
)
from dfdetect.facepipe.dataset import INDEX_FIELDS

SQUARE = [(10, 10), (110, 10), (110, 110), (10, 110)]


def write_avi(path, n_frames, size=(32, 24), fps=30):
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"), fps, size)
    for i in range(n_frames):
        writer.write(np.full((size[1], size[0], 3), i % 200, np.uint8))
    writer.release()
    return path


def frame_folder(path, n_frames, shape=(48, 64)):
    path.mkdir(parents=True)
    rng = np.random.default_rng(len(str(path)))
    for i in range(n_frames):
        write_rgb(path / f"f{i:04d}.png", rng.integers(0, 255, (*shape, 3), dtype=np.uint8))
    return path


def frame(pixels=None, shape=(224, 224)):
    if pixels is None:
        pixels = np.zeros((*shape, 3), np.uint8)
    return FrameImage("v", 0, pixels)


def det(bbox, confidence=0.9):
    x0, y0, x1, y1 = bbox
    return FaceDetection(confidence, ((x0, y0), (x1, y0), (x1, y1), (x0, y1)), tuple(map(float, bbox)))


# --- frames -----------------------------------------------------------------

def test_thirteen_second_video_frames_all_eligible(tmp_path):
    # 13 s at 30 fps = 390 frames, under the 500 cap
    video = VideoRecord("v", Label.REAL, write_avi(tmp_path / "v.avi", 13 * 30))
    frames = list(extract_frames(video))
    assert len(frames) == 390
    assert [f.frame_index for f in frames] == list(range(390))
    cfg = PipelineConfig(max_qualifying=500)
    rows = process_video(video, Partition.TRAIN, StaticDetector([(0.9, [(2, 2), (20, 2), (20, 20), (2, 20)])]),
                         cfg, tmp_path / "out")
    assert len(rows) == 390


def test_twenty_second_video_capped_at_500(tmp_path):
    video = VideoRecord("v", Label.FAKE, write_avi(tmp_path / "v.avi", 20 * 30))
    detector = StaticDetector([(0.95, [(2, 2), (20, 2), (20, 20), (2, 20)])])
    rows = process_video(video, Partition.TEST, detector, PipelineConfig(), tmp_path / "out")
    assert len(rows) == 500
    assert [r.frame_index for r in rows] == list(range(500))
    assert len(list((tmp_path / "out/test/fake").glob("*.png"))) == 500


def test_frames_from_folder_are_rgb_and_ordered(tmp_path):
    folder = tmp_path / "vid"
    folder.mkdir()
    px = np.zeros((8, 8, 3), np.uint8)
    px[..., 0] = 200  # red
    write_rgb(folder / "b.png", px)
    write_rgb(folder / "a.png", px[..., ::-1].copy())
    frames = list(extract_frames(VideoRecord("v", Label.REAL, folder)))
    assert [f.frame_index for f in frames] == [0, 1]
    assert frames[0].pixels[0, 0].tolist() == [0, 0, 200]  # a.png sorts first
    assert frames[1].pixels[0, 0].tolist() == [200, 0, 0]


def test_zero_frames(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(ZeroFrames):
        list(extract_frames(VideoRecord("v", Label.REAL, tmp_path / "empty")))


def test_undecodable(tmp_path):
    with pytest.raises(UndecodableVideo):
        list(extract_frames(VideoRecord("v", Label.REAL, tmp_path / "missing.mp4")))
    (tmp_path / "junk.mp4").write_bytes(b"not a video at all")
    with pytest.raises((UndecodableVideo, ZeroFrames)):
        list(extract_frames(VideoRecord("v", Label.REAL, tmp_path / "junk.mp4")))


# --- detection gate ------------------------------------------------------------

def test_below_threshold_rejected():
    assert detect_face(frame(), StaticDetector([(0.79, SQUARE)]), 0.8) is None


def test_threshold_is_inclusive():
    got = detect_face(frame(), StaticDetector([(0.80, SQUARE)]), 0.8)
    assert got is not None and got.confidence == 0.80
    assert detect_face(frame(), StaticDetector([(np.nextafter(0.8, 0), SQUARE)]), 0.8) is None


def test_highest_confidence_wins():
    small = [(0, 0), (5, 0), (5, 5), (0, 5)]
    got = detect_face(frame(), StaticDetector([(0.85, SQUARE), (0.95, small)]), 0.8)
    assert got.confidence == 0.95
    assert got.bbox == (0.0, 0.0, 5.0, 5.0)


def test_confidence_tie_prefers_larger_box():
    small = [(0, 0), (5, 0), (5, 5), (0, 5)]
    got = detect_face(frame(), StaticDetector([(0.9, small), (0.9, SQUARE), (0.9, small)]), 0.8)
    assert got.bbox == (10.0, 10.0, 110.0, 110.0)


def test_bbox_is_clipped_hull():
    pts = [(-5, 20), (50, -3), (300, 40), (60, 90), (70, 70)]
    assert landmark_bbox(pts, 224, 100) == (0.0, 0.0, 224.0, 90.0)
    got = detect_face(frame(shape=(100, 224)), StaticDetector([(0.9, pts)]), 0.8)
    assert got.bbox == (0.0, 0.0, 224.0, 90.0)


def test_unusable_candidates_skipped():
    line = [(0, 5), (10, 5), (20, 5), (30, 5)]
    three = [(0, 0), (10, 0), (10, 10)]
    assert detect_face(frame(), StaticDetector([(0.99, line), (0.99, three)]), 0.8) is None


def test_detector_failure_is_distinct():
    def broken(image):
        raise RuntimeError("backend crashed")
    with pytest.raises(DetectorFailure, match="backend crashed"):
        detect_face(frame(), broken, 0.8)


@pytest.mark.parametrize("threshold", [0.0, 1.5])
def test_threshold_range(threshold):
    with pytest.raises(ValueError):
        detect_face(frame(), StaticDetector([]), threshold)


def test_lookup_detector_by_digest():
    a = np.zeros((4, 4, 3), np.uint8)
    b = np.ones((4, 4, 3), np.uint8)
    lookup = LookupDetector({frame_digest(a): [{"confidence": 0.9, "landmarks": SQUARE}]})
    assert lookup(a) == [(0.9, [tuple(p) for p in SQUARE])]
    assert lookup(b) == []


# --- crop ------------------------------------------------------------------------

def test_crop_identity_margin():
    px = np.arange(224 * 224 * 3, dtype=np.uint32).reshape(224, 224, 3).astype(np.uint8)
    out = crop_face(frame(px), det((10, 10, 110, 110)), margin_fraction=0.0)
    assert out.shape == (100, 100, 3)
    assert np.array_equal(out, px[10:110, 10:110])


def test_crop_margin_clipped_at_corner():
    # side 100, margin 10%: (-10, -10, 110, 110) clipped to (0, 0, 110, 110)
    assert crop_box((0, 0, 100, 100), 224, 224, 0.10) == (0, 0, 110, 110)
    out = crop_face(frame(), det((0, 0, 100, 100)), 0.10)
    assert out.shape == (110, 110, 3)


def test_crop_degenerate():
    with pytest.raises(DegenerateBox):
        crop_box((50, 50, 50, 80), 224, 224, 0.0)
    with pytest.raises(DegenerateBox):
        crop_box((300, 10, 400, 50), 224, 224, 0.0)


def test_crop_contains_landmark_hull_randomized():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        h, w = rng.integers(8, 400, size=2)
        n = rng.integers(4, 12)
        pts = np.column_stack([rng.uniform(-20, w + 20, n), rng.uniform(-20, h + 20, n)])
        bbox = landmark_bbox(pts, w, h)
        if bbox[2] <= bbox[0] or bbox[3] <= bbox[1]:
            continue
        margin = rng.uniform(0, 0.5)
        x0, y0, x1, y1 = crop_box(bbox, w, h, margin)
        clipped = np.column_stack([np.clip(pts[:, 0], 0, w), np.clip(pts[:, 1], 0, h)])
        assert 0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h
        assert np.all((clipped[:, 0] >= x0) & (clipped[:, 0] <= x1))
        assert np.all((clipped[:, 1] >= y0) & (clipped[:, 1] <= y1))


# --- normalize/resize ------------------------------------------------------------

def test_normalize_identity():
    rng = np.random.default_rng(0)
    crop = rng.integers(0, 256, (224, 224, 3), dtype=np.uint8)
    out = normalize_resize(crop, (224, 224), (0, 0, 0), (1, 1, 1))
    assert out.shape == (224, 224, 3)
    assert np.allclose(out, crop / 255.0, atol=1e-7)


def test_normalize_mean_valued_crop_is_zero():
    means = (0.2, 0.4, 0.6)  # 51, 102, 153 in 8-bit
    crop = np.empty((37, 53, 3), np.uint8)
    crop[:] = (51, 102, 153)
    out = normalize_resize(crop, (224, 224), means, (0.5, 0.5, 0.5))
    assert out.shape == (224, 224, 3)
    assert np.abs(out).max() < 1e-6


@pytest.mark.parametrize("shape", [(1, 1, 3), (10, 300, 3), (500, 200, 3)])
def test_normalize_output_shape(shape):
    crop = np.full(shape, 128, np.uint8)
    out = normalize_resize(crop)
    assert out.shape == (224, 224, 3) and out.dtype == np.float32
    assert np.array_equal(out, normalize_resize(crop))


def test_normalize_degenerate():
    with pytest.raises(DegenerateInput):
        normalize_resize(np.zeros((0, 5, 3), np.uint8))
    with pytest.raises(DegenerateInput):
        normalize_resize(np.zeros((5, 5, 3), np.uint8), channel_stds=(1, 0, 1))


# --- dataset builder ---------------------------------------------------------------

def _two_video_setup(tmp_path, frames=5, qualifying=3):
    """Two frame-folder videos whose first ``qualifying`` frames have a face."""
    table = {}
    records = []
    for vid, label in (("vidA", Label.REAL), ("vidB", Label.FAKE)):
        folder = tmp_path / "src" / vid
        folder.mkdir(parents=True)
        for i in range(frames):
            px = np.full((60, 80, 3), 10 * i + (label * 100), np.uint8)
            px[5 + i, 5] = 255  # make every frame unique
            write_rgb(folder / f"{i:03d}.png", px)
            conf = 0.9 if i < qualifying else 0.5
            table[frame_digest(px)] = [{"confidence": conf, "landmarks": [[10, 10], [50, 10], [50, 40], [10, 40]]}]
        records.append(VideoRecord(vid, label, folder))
    plan = SplitPlan(0, {"vidA": Partition.TRAIN, "vidB": Partition.TEST})
    return Catalog(tuple(records)), plan, LookupDetector(table)


def _walk(root):
    return sorted(p.relative_to(root).as_posix() for p in root.rglob("*.png"))


def test_build_counts_match_tree_walk(tmp_path):
    catalog, plan, detector = _two_video_setup(tmp_path)
    result = build_face_dataset(catalog, plan, PipelineConfig(), tmp_path / "ds", detector)
    rows = read_index(result.index_path)
    assert len(rows) == 6
    assert _walk(tmp_path / "ds") == sorted(r.sample_path for r in rows)
    assert {r.partition for r in rows if r.video_id == "vidA"} == {Partition.TRAIN}
    assert rows[0].sample_path == "train/real/vidA_0.png"
    for r in rows:
        img = read_rgb(tmp_path / "ds" / r.sample_path)
        assert img.shape == (224, 224, 3)
        assert r.confidence >= 0.8
        assert r.partition == plan.assignments[r.video_id]
    header = result.index_path.read_text().splitlines()[0]
    assert header == ",".join(INDEX_FIELDS)


def test_build_partition_filter(tmp_path):
    catalog, plan, detector = _two_video_setup(tmp_path)
    test_only = SplitPlan(0, {"vidB": Partition.TEST})
    result = build_face_dataset(catalog, test_only, PipelineConfig(), tmp_path / "ds", detector)
    assert {r.partition for r in result.rows} == {Partition.TEST}
    assert not (tmp_path / "ds" / "train").exists()
    result = build_face_dataset(catalog, plan, PipelineConfig(), tmp_path / "ds2", detector,
                                partitions=[Partition.TEST])
    assert {r.video_id for r in result.rows} == {"vidB"}


def test_build_is_idempotent_and_worker_independent(tmp_path):
    catalog, plan, detector = _two_video_setup(tmp_path)
    root = tmp_path / "ds"
    build_face_dataset(catalog, plan, PipelineConfig(), root, detector)
    first = (root / "index.csv").read_bytes()
    pngs = {p: hashlib.sha256((root / p).read_bytes()).hexdigest() for p in _walk(root)}
    build_face_dataset(catalog, plan, PipelineConfig(), root, detector, workers=4)
    assert (root / "index.csv").read_bytes() == first
    assert {p: hashlib.sha256((root / p).read_bytes()).hexdigest() for p in _walk(root)} == pngs


def test_rerun_with_smaller_cap_removes_stale_samples(tmp_path):
    catalog, plan, detector = _two_video_setup(tmp_path)
    root = tmp_path / "ds"
    build_face_dataset(catalog, plan, PipelineConfig(), root, detector)
    result = build_face_dataset(catalog, plan, PipelineConfig(max_qualifying=1), root, detector)
    assert len(result.rows) == 2
    assert _walk(root) == sorted(r.sample_path for r in result.rows)


def test_faceless_and_failing_videos_reported(tmp_path):
    catalog, plan, detector = _two_video_setup(tmp_path, qualifying=0)
    broken = VideoRecord("vidC", Label.FAKE, tmp_path / "nowhere")
    catalog = Catalog(catalog.records + (broken,))
    plan = SplitPlan(0, {**plan.assignments, "vidC": Partition.TRAIN})
    result = build_face_dataset(catalog, plan, PipelineConfig(), tmp_path / "ds", detector)
    assert result.rows == []
    assert result.faceless == ["vidA", "vidB"]
    assert [f["video_id"] for f in result.failures] == ["vidC"]
    assert result.failures[0]["error"] == "UndecodableVideo"
    assert read_index(result.index_path) == []


def test_pipeline_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(threshold=0)
    with pytest.raises(ValueError):
        PipelineConfig(max_qualifying=0)
    with pytest.raises(ValueError):
        PipelineConfig(stds=(1, 1, 0))
