"""Batched access to one partition of face samples, ready for the model."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .catalog import Label, Partition
from .errors import EmptyPartition
from .facepipe.crop import IMAGENET_MEANS, IMAGENET_STDS, standardize
from .facepipe.dataset import INDEX_NAME, IndexRow, read_index
from .facepipe.frames import read_rgb


class FaceSet:
    """Face samples of one partition with their labels and source videos.

    Pixels come either from an in-memory array of standardized images or are
    read lazily from a dataset directory and standardized on load.
    """

    def __init__(self, sample_ids, labels, video_ids, images=None, root=None,
                 means=IMAGENET_MEANS, stds=IMAGENET_STDS, partition=None, rows=None):
        self.sample_ids = list(sample_ids)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.video_ids = list(video_ids)
        if not (len(self.sample_ids) == len(self.labels) == len(self.video_ids)):
            raise ValueError("sample_ids, labels and video_ids differ in length")
        self.images = images
        self.root = Path(root) if root is not None else None
        self.means = tuple(means)
        self.stds = tuple(stds)
        self.partition = partition
        self.rows = rows

    @classmethod
    def from_arrays(cls, images, labels, video_ids, sample_ids=None, partition=None):
        """``images`` are standardized, either (N, 3, H, W) or (N, H, W, 3)."""
        images = np.asarray(images, dtype=np.float32)
        if images.ndim == 4 and images.shape[-1] == 3 and images.shape[1] != 3:
            images = images.transpose(0, 3, 1, 2)
        images = np.ascontiguousarray(images)
        if sample_ids is None:
            sample_ids = [f"sample_{i}" for i in range(len(images))]
        return cls(sample_ids, labels, video_ids, images=images, partition=partition)

    @classmethod
    def from_index(cls, root, partition: Partition, rows: Sequence[IndexRow] | None = None,
                   means=IMAGENET_MEANS, stds=IMAGENET_STDS):
        root = Path(root)
        if rows is None:
            rows = read_index(root / INDEX_NAME)
        rows = [r for r in rows if r.partition == partition]
        return cls(
            [r.sample_path for r in rows],
            [int(r.label) for r in rows],
            [r.video_id for r in rows],
            root=root, means=means, stds=stds, partition=partition, rows=rows,
        )

    def __len__(self):
        return len(self.sample_ids)

    def require_nonempty(self, what: str) -> None:
        if len(self) == 0:
            raise EmptyPartition(f"{what} partition has no samples")

    def image(self, i: int) -> np.ndarray:
        if self.images is not None:
            return self.images[i]
        pixels = read_rgb(self.root / self.sample_ids[i])
        return standardize(pixels, self.means, self.stds).transpose(2, 0, 1)

    def batch(self, indices) -> tuple[torch.Tensor, torch.Tensor]:
        indices = list(indices)
        if self.images is not None:
            x = self.images[indices]
        else:
            x = np.stack([self.image(i) for i in indices])
        return torch.from_numpy(np.ascontiguousarray(x)), torch.from_numpy(self.labels[indices])

    def label_of(self, i: int) -> Label:
        return Label(int(self.labels[i]))
