"""Fine-tuning loop: seeded batching, Adam with L2 weight decay, per-epoch validation."""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .classifier import BinaryClassifier, Checkpoint, set_trainable
from .errors import LeakageDetected, MissingFile, NonFiniteLoss, SchemaViolation
from .faceset import FaceSet

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "train_loss", "val_loss", "val_accuracy", "wall_time_s")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 5e-3
    batch_size: int = 32
    epochs: int = 80
    seed: int = 0
    loss: str = "cross_entropy"
    optimizer: str = "adam"
    val_every: int = 1
    finetune_scope: str = "all"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.val_every < 1:
            raise ValueError(f"val_every must be >= 1, got {self.val_every}")
        if self.loss != "cross_entropy":
            raise ValueError(f"unsupported loss {self.loss!r}")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.finetune_scope not in ("all", "head"):
            raise ValueError(f"finetune_scope must be 'all' or 'head', got {self.finetune_scope!r}")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None
    val_accuracy: float | None
    wall_time_s: float

    def to_csv(self) -> list[str]:
        def fmt(v):
            return "" if v is None else repr(float(v))
        return [str(self.epoch), fmt(self.train_loss), fmt(self.val_loss),
                fmt(self.val_accuracy), f"{self.wall_time_s:.3f}"]


def make_batches(items: Sequence, batch_size: int, seed: int, epoch: int) -> list[list]:
    """Shuffle ``items`` with a permutation fixed by ``(seed, epoch)`` and chunk it.

    The last batch may be short; every item appears exactly once.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    items = list(items)
    order = np.random.default_rng([seed, epoch]).permutation(len(items))
    shuffled = [items[i] for i in order.tolist()]
    return [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)]


def make_optimizer(model: BinaryClassifier, config: TrainConfig) -> torch.optim.Adam:
    """Adam over the trainable parameters; weight decay is the coupled L2 term."""
    set_trainable(model, config.finetune_scope)
    params = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.Adam(params, lr=config.learning_rate, weight_decay=config.weight_decay)


def check_disjoint(first: FaceSet, second: FaceSet, what: str) -> None:
    shared = set(first.video_ids) & set(second.video_ids)
    if shared:
        sample = ", ".join(sorted(shared)[:5])
        raise LeakageDetected(f"{what}: {len(shared)} video(s) on both sides ({sample})")


@contextmanager
def deterministic(seed: int):
    """Seed torch and force deterministic kernels, restoring global state afterwards."""
    previous = torch.are_deterministic_algorithms_enabled()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        torch.use_deterministic_algorithms(True)
        try:
            yield
        finally:
            torch.use_deterministic_algorithms(previous)


@torch.no_grad()
def validate(model: BinaryClassifier, data: FaceSet, batch_size: int = 64) -> tuple[float, float]:
    """Mean cross-entropy and accuracy (FAKE when P(FAKE) >= 0.5) over ``data``."""
    model.eval()
    total_loss, correct = 0.0, 0
    for start in range(0, len(data), batch_size):
        x, y = data.batch(range(start, min(start + batch_size, len(data))))
        logits = model(x)
        total_loss += F.cross_entropy(logits, y, reduction="sum").item()
        fake = torch.softmax(logits, dim=1)[:, 1] >= 0.5
        correct += int((fake.long() == y).sum())
    return total_loss / len(data), correct / len(data)


class HistoryWriter:
    """Appends one CSV row per epoch and flushes, so a crashed run stays readable."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(HISTORY_FIELDS)
        self._fh.flush()

    def write(self, stats: EpochStats) -> None:
        self._writer.writerow(stats.to_csv())
        self._fh.flush()

    def close(self):
        self._fh.close()


def read_history(path) -> list[EpochStats]:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"history not found: {path}")

    def opt(v):
        return float(v) if v not in ("", None) else None

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HISTORY_FIELDS:
            raise SchemaViolation(f"{path}: header must be {','.join(HISTORY_FIELDS)}")
        return [
            EpochStats(int(r["epoch"]), float(r["train_loss"]), opt(r["val_loss"]),
                       opt(r["val_accuracy"]), float(r["wall_time_s"]))
            for r in reader
        ]


def train(
    model: BinaryClassifier,
    train_set: FaceSet,
    val_set: FaceSet,
    config: TrainConfig = TrainConfig(),
    history_path=None,
    config_digest: str | None = None,
    on_epoch: Callable[[EpochStats], None] | None = None,
) -> tuple[Checkpoint, list[EpochStats]]:
    """Fine-tune ``model`` in place; return the best-validation checkpoint and the history.

    Validation runs every ``val_every`` epochs and always after the last one.
    The best checkpoint is the validated epoch with the highest accuracy,
    the earliest one on ties.
    """
    train_set.require_nonempty("train")
    val_set.require_nonempty("validation")
    check_disjoint(train_set, val_set, "train/validation")
    digest = config_digest if config_digest is not None else config.digest()

    optimizer = make_optimizer(model, config)
    writer = HistoryWriter(history_path) if history_path is not None else None

    history: list[EpochStats] = []
    best: Checkpoint | None = None
    best_acc = -math.inf
    try:
        with deterministic(config.seed):
            for epoch in range(1, config.epochs + 1):
                started = time.perf_counter()
                model.train()
                loss_sum = 0.0
                batches = make_batches(range(len(train_set)), config.batch_size, config.seed, epoch)
                for batch_no, idx in enumerate(batches):
                    x, y = train_set.batch(idx)
                    optimizer.zero_grad(set_to_none=True)
                    loss = F.cross_entropy(model(x), y)
                    if not torch.isfinite(loss):
                        raise NonFiniteLoss(
                            f"epoch {epoch} batch {batch_no}: loss is {loss.item()} "
                            f"(samples {[train_set.sample_ids[i] for i in idx[:4]]}...)"
                        )
                    loss.backward()
                    optimizer.step()
                    loss_sum += loss.item() * len(idx)
                train_loss = loss_sum / len(train_set)

                val_loss = val_acc = None
                if epoch % config.val_every == 0 or epoch == config.epochs:
                    val_loss, val_acc = validate(model, val_set)
                    if not math.isfinite(val_loss):
                        raise NonFiniteLoss(f"epoch {epoch}: validation loss is {val_loss}")
                stats = EpochStats(epoch, train_loss, val_loss, val_acc,
                                   time.perf_counter() - started)
                history.append(stats)
                if writer is not None:
                    writer.write(stats)
                log.info("epoch %d train_loss=%.4f val_loss=%s val_acc=%s", epoch, train_loss,
                         val_loss, val_acc)
                if on_epoch is not None:
                    on_epoch(stats)

                if val_acc is not None and val_acc > best_acc:
                    best_acc = val_acc
                    best = Checkpoint.from_model(
                        model,
                        config_digest=digest,
                        training_state={"optimizer": copy.deepcopy(optimizer.state_dict()),
                                        "epoch": epoch},
                        epoch=epoch,
                        val_accuracy=val_acc,
                        val_loss=val_loss,
                        train_video_ids=sorted(set(train_set.video_ids)),
                        val_video_ids=sorted(set(val_set.video_ids)),
                    )
    finally:
        if writer is not None:
            writer.close()
    return best, history
