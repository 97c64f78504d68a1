"""Video manifests, class balancing and video-level train/val/test splits.

Splitting happens per video, never per frame, so that no frame of a test
video can leak into training or validation.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    DegenerateSplit,
    DuplicateVideoId,
    EmptyClass,
    MissingFile,
    SchemaViolation,
    UnbalancedCatalog,
)

MANIFEST_FIELDS = ("video_id", "label", "path")


class Label(enum.IntEnum):
    """Class label; FAKE is the positive class and logit index 1."""

    REAL = 0
    FAKE = 1

    @property
    def slug(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Label":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown label {text!r}; expected 'real' or 'fake'") from None


class Partition(enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    label: Label
    path: Path
    duration_s: float | None = None
    fps: float | None = None


@dataclass(frozen=True)
class Catalog:
    records: tuple[VideoRecord, ...] = ()

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.video_id in seen:
                raise DuplicateVideoId(f"video_id {rec.video_id!r} appears more than once")
            seen.add(rec.video_id)

    @property
    def class_counts(self) -> dict[Label, int]:
        counts = Counter(rec.label for rec in self.records)
        return {label: counts.get(label, 0) for label in Label}

    def by_label(self, label: Label) -> list[VideoRecord]:
        return [rec for rec in self.records if rec.label == label]

    def get(self, video_id: str) -> VideoRecord:
        for rec in self.records:
            if rec.video_id == video_id:
                return rec
        raise KeyError(video_id)

    def __len__(self):
        return len(self.records)


def _optional_float(row: Mapping[str, str], key: str, lineno: int) -> float | None:
    raw = (row.get(key) or "").strip()
    if not raw:
        return None
    try:
        return float(raw)
    except ValueError:
        raise SchemaViolation(f"row {lineno}: {key}={raw!r} is not a number") from None


def load_catalog(manifest_path) -> Catalog:
    """Read a comma-separated manifest with a ``video_id,label,path`` header.

    Relative video paths are resolved against the manifest's directory.
    Optional ``duration_s`` and ``fps`` columns are picked up when present.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MissingFile(f"manifest not found: {manifest_path}")
    base = manifest_path.parent
    records = []
    seen: dict[str, int] = {}
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [name for name in MANIFEST_FIELDS if name not in header]
        if header and missing:
            raise SchemaViolation(f"row 1 (header): missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(row.get(name) is None for name in MANIFEST_FIELDS):
                raise SchemaViolation(f"row {lineno}: wrong number of fields")
            video_id = row["video_id"].strip()
            if not video_id:
                raise SchemaViolation(f"row {lineno}: empty video_id")
            try:
                label = Label.parse(row["label"])
            except ValueError as exc:
                raise SchemaViolation(f"row {lineno}: {exc}") from None
            raw_path = row["path"].strip()
            if not raw_path:
                raise SchemaViolation(f"row {lineno}: empty path")
            if video_id in seen:
                raise DuplicateVideoId(
                    f"row {lineno}: video_id {video_id!r} already defined on row {seen[video_id]}"
                )
            seen[video_id] = lineno
            path = Path(raw_path)
            if not path.is_absolute():
                path = base / path
            records.append(
                VideoRecord(
                    video_id=video_id,
                    label=label,
                    path=path,
                    duration_s=_optional_float(row, "duration_s", lineno),
                    fps=_optional_float(row, "fps", lineno),
                )
            )
    return Catalog(tuple(records))


def write_manifest(catalog: Catalog, manifest_path) -> None:
    manifest_path = Path(manifest_path)
    with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for rec in catalog.records:
            writer.writerow([rec.video_id, rec.label.slug, rec.path.as_posix()])


def balance_classes(catalog: Catalog, seed: int) -> Catalog:
    """Downsample the majority class to the minority count.

    The kept majority videos are a seeded uniform sample without replacement;
    source order is preserved among the kept records.
    """
    counts = catalog.class_counts
    empty = [label.slug for label, n in counts.items() if n == 0]
    if empty:
        raise EmptyClass(f"no videos for class {', '.join(empty)}")
    target = min(counts.values())
    if all(n == target for n in counts.values()):
        return catalog

    majority = max(counts, key=counts.get)
    candidates = [i for i, rec in enumerate(catalog.records) if rec.label == majority]
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(candidates), size=target, replace=False)
    keep = {candidates[i] for i in chosen.tolist()}
    records = tuple(
        rec for i, rec in enumerate(catalog.records) if rec.label != majority or i in keep
    )
    return Catalog(records)


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    assignments: dict[str, Partition]
    per_class_counts: dict[tuple[Label, Partition], int] = field(default_factory=dict)

    def video_ids(self, *partitions: Partition) -> set[str]:
        return {vid for vid, part in self.assignments.items() if part in partitions}

    def to_dict(self) -> dict:
        counts: dict[str, dict[str, int]] = {}
        for (label, part), n in self.per_class_counts.items():
            counts.setdefault(label.slug, {})[part.value] = n
        return {
            "seed": self.seed,
            "assignments": {vid: part.value for vid, part in self.assignments.items()},
            "per_class_counts": counts,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_dict(cls, data: Mapping) -> "SplitPlan":
        try:
            assignments = {vid: Partition(p) for vid, p in data["assignments"].items()}
            counts = {
                (Label.parse(label), Partition(part)): int(n)
                for label, parts in data["per_class_counts"].items()
                for part, n in parts.items()
            }
            return cls(seed=int(data["seed"]), assignments=assignments, per_class_counts=counts)
        except (KeyError, ValueError, TypeError, AttributeError) as exc:
            raise SchemaViolation(f"malformed split plan: {exc}") from None

    @classmethod
    def load(cls, path) -> "SplitPlan":
        path = Path(path)
        if not path.is_file():
            raise MissingFile(f"split plan not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"split plan {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def counts_table(self) -> str:
        lines = [f"{'class':<6} {'train':>6} {'val':>6} {'test':>6}"]
        for label in (Label.FAKE, Label.REAL):
            row = [self.per_class_counts.get((label, part), 0) for part in Partition]
            lines.append(f"{label.slug:<6} {row[0]:>6} {row[1]:>6} {row[2]:>6}")
        return "\n".join(lines)


def _floor_fraction(n: int, fraction: float) -> int:
    # decimal-exact: floor(29 * 0.29) must be 8 even though 29*0.29 rounds oddly in binary
    return math.floor(n * Fraction(repr(float(fraction))))


def split_videos(
    catalog: Catalog,
    test_fraction: float = 0.2,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> SplitPlan:
    """Assign every video of a balanced catalog to exactly one partition.

    Per class: ``floor(n * test_fraction)`` shuffled videos go to TEST, then
    ``floor(rest * val_fraction)`` to VAL, and the remainder to TRAIN.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if not 0 <= val_fraction < 1:
        raise ValueError(f"val_fraction must be in [0, 1), got {val_fraction}")
    counts = catalog.class_counts
    if len(set(counts.values())) != 1:
        raise UnbalancedCatalog(
            "catalog is not balanced: "
            + ", ".join(f"{label.slug}={n}" for label, n in counts.items())
        )

    assignments: dict[str, Partition] = {}
    per_class: dict[tuple[Label, Partition], int] = {}
    for label in Label:
        ids = [rec.video_id for rec in catalog.by_label(label)]
        rng = np.random.default_rng([seed, int(label)])
        ids = [ids[i] for i in rng.permutation(len(ids)).tolist()]
        n_test = _floor_fraction(len(ids), test_fraction)
        rest = len(ids) - n_test
        n_val = _floor_fraction(rest, val_fraction)
        n_train = rest - n_val
        if n_test == 0:
            raise DegenerateSplit(f"{label.slug}: TEST receives 0 of {len(ids)} videos")
        if val_fraction > 0 and n_val == 0:
            raise DegenerateSplit(f"{label.slug}: VAL receives 0 of {rest} videos")
        if n_train == 0:
            raise DegenerateSplit(f"{label.slug}: TRAIN receives 0 of {len(ids)} videos")
        for i, vid in enumerate(ids):
            if i < n_test:
                assignments[vid] = Partition.TEST
            elif i < n_test + n_val:
                assignments[vid] = Partition.VAL
            else:
                assignments[vid] = Partition.TRAIN
        per_class[(label, Partition.TRAIN)] = n_train
        per_class[(label, Partition.VAL)] = n_val
        per_class[(label, Partition.TEST)] = n_test

    return SplitPlan(seed=seed, assignments=assignments, per_class_counts=per_class)
