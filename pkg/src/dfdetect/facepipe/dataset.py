"""Turning a split plan into an on-disk face dataset plus its index."""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..catalog import Catalog, Label, Partition, SplitPlan, VideoRecord
from ..errors import DfdetectError, IndexWriteFailure, MissingFile, SchemaViolation
from .crop import DEFAULT_MARGIN, FACE_SIZE, IMAGENET_MEANS, IMAGENET_STDS, crop_face, resize_face
from .detect import DEFAULT_THRESHOLD, Detector, detect_face
from .frames import extract_frames, write_rgb

log = logging.getLogger(__name__)

INDEX_NAME = "index.csv"
REPORT_NAME = "build_report.json"
INDEX_FIELDS = ("sample_path", "video_id", "frame_index", "label", "partition", "confidence")
IMAGE_EXT = ".png"


@dataclass(frozen=True)
class PipelineConfig:
    threshold: float = DEFAULT_THRESHOLD
    max_qualifying: int = 500
    margin_fraction: float = DEFAULT_MARGIN
    means: tuple[float, float, float] = IMAGENET_MEANS
    stds: tuple[float, float, float] = IMAGENET_STDS
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.threshold <= 1:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")
        if self.max_qualifying < 1:
            raise ValueError(f"max_qualifying must be >= 1, got {self.max_qualifying}")
        if self.margin_fraction < 0:
            raise ValueError(f"margin_fraction must be >= 0, got {self.margin_fraction}")
        if len(self.means) != 3 or len(self.stds) != 3:
            raise ValueError("means and stds need exactly three channels")
        if min(self.stds) <= 0:
            raise ValueError(f"stds must be positive, got {self.stds}")
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        object.__setattr__(self, "stds", tuple(float(s) for s in self.stds))


@dataclass(frozen=True)
class IndexRow:
    sample_path: str
    video_id: str
    frame_index: int
    label: Label
    partition: Partition
    confidence: float

    def to_csv(self) -> list[str]:
        return [
            self.sample_path,
            self.video_id,
            str(self.frame_index),
            self.label.slug,
            self.partition.value,
            repr(float(self.confidence)),
        ]


@dataclass
class BuildResult:
    root: Path
    index_path: Path
    rows: list[IndexRow]
    faceless: list[str] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)


def sample_relpath(partition: Partition, label: Label, video_id: str, frame_index: int) -> str:
    return f"{partition.value}/{label.slug}/{video_id}_{frame_index}{IMAGE_EXT}"


def process_video(
    video: VideoRecord,
    partition: Partition,
    detector: Detector,
    config: PipelineConfig,
    root: Path,
) -> list[IndexRow]:
    """Write up to ``max_qualifying`` faces of one video; return their index rows."""
    rows = []
    for frame in extract_frames(video):
        detection = detect_face(frame, detector, config.threshold)
        if detection is None:
            continue
        face = resize_face(crop_face(frame, detection, config.margin_fraction), FACE_SIZE)
        rel = sample_relpath(partition, video.label, video.video_id, frame.frame_index)
        out = root / rel
        out.parent.mkdir(parents=True, exist_ok=True)
        write_rgb(out, face)
        rows.append(
            IndexRow(rel, video.video_id, frame.frame_index, video.label, partition,
                     detection.confidence)
        )
        if len(rows) >= config.max_qualifying:
            break
    return rows


def index_bytes(rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(INDEX_FIELDS)
    for row in sorted(rows, key=lambda r: (r.video_id, r.frame_index)):
        writer.writerow(row.to_csv())
    return buf.getvalue().encode("utf-8")


def write_index(rows, path) -> None:
    try:
        Path(path).write_bytes(index_bytes(rows))
    except OSError as exc:
        raise IndexWriteFailure(f"cannot write index {path}: {exc}") from exc


def read_index(path) -> list[IndexRow]:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"index not found: {path}")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != INDEX_FIELDS:
            raise SchemaViolation(f"{path}: header must be {','.join(INDEX_FIELDS)}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append(
                    IndexRow(
                        sample_path=rec["sample_path"],
                        video_id=rec["video_id"],
                        frame_index=int(rec["frame_index"]),
                        label=Label.parse(rec["label"]),
                        partition=Partition(rec["partition"]),
                        confidence=float(rec["confidence"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise SchemaViolation(f"{path} row {lineno}: {exc}") from None
    return rows


def _remove_stale(root: Path, keep: set[str]) -> None:
    for part in Partition:
        for label in Label:
            folder = root / part.value / label.slug
            if not folder.is_dir():
                continue
            for img in folder.glob(f"*{IMAGE_EXT}"):
                if img.relative_to(root).as_posix() not in keep:
                    img.unlink()


def build_face_dataset(
    catalog: Catalog,
    plan: SplitPlan,
    config: PipelineConfig,
    root,
    detector: Detector,
    partitions=None,
    workers: int = 1,
) -> BuildResult:
    """Extract, gate, crop and resize faces for every planned video.

    Per-video errors land in the build report instead of aborting the run.
    Videos with no qualifying frame are logged as faceless. Index rows are
    sorted by ``(video_id, frame_index)``, so the number of ``workers`` never
    changes the output bytes.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    wanted = set(partitions) if partitions is not None else set(Partition)
    jobs = []
    for video_id, part in sorted(plan.assignments.items()):
        if part not in wanted:
            continue
        try:
            jobs.append((catalog.get(video_id), part))
        except KeyError:
            raise SchemaViolation(f"plan names video {video_id!r} that is not in the catalog")

    def run(job):
        video, part = job
        try:
            return video.video_id, process_video(video, part, detector, config, root), None
        except DfdetectError as exc:
            return video.video_id, [], exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(job) for job in jobs]

    rows, faceless, failures = [], [], []
    for video_id, video_rows, exc in outcomes:
        if exc is not None:
            log.warning("video %s failed: %s", video_id, exc)
            failures.append({"video_id": video_id, "error": type(exc).__name__, "message": str(exc)})
        elif not video_rows:
            log.warning("video %s has no qualifying face; skipped", video_id)
            faceless.append(video_id)
        rows.extend(video_rows)

    _remove_stale(root, {r.sample_path for r in rows})
    index_path = root / INDEX_NAME
    write_index(rows, index_path)
    report = {
        "config": asdict(config),
        "faceless": faceless,
        "failures": failures,
        "samples": len(rows),
    }
    (root / REPORT_NAME).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    rows.sort(key=lambda r: (r.video_id, r.frame_index))
    return BuildResult(root, index_path, rows, faceless, failures)
