"""Blind-test evaluation: confusion matrix, derived metrics and figures."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .catalog import Label
from .classifier import BinaryClassifier, predict_proba
from .errors import EmptyTestSet, LeakageDetected, MissingFile, SchemaViolation, WriteFailure
from .faceset import FaceSet

log = logging.getLogger(__name__)

METRICS_NAME = "metrics.json"
PER_SAMPLE_NAME = "per_sample.csv"
ACCURACY_PLOT = "accuracy_curve.png"
LOSS_PLOT = "loss_curve.png"
CONFUSION_PLOT = "confusion_matrix.png"
PER_SAMPLE_FIELDS = ("sample_path", "video_id", "p_fake", "predicted", "actual")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Outcome counts with FAKE as the positive class."""

    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError(f"negative count in {self}")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_labels(cls, actual, predicted) -> "ConfusionMatrix":
        actual = np.asarray(actual, dtype=np.int64)
        predicted = np.asarray(predicted, dtype=np.int64)
        fake, real = int(Label.FAKE), int(Label.REAL)
        return cls(
            tp=int(np.sum((actual == fake) & (predicted == fake))),
            tn=int(np.sum((actual == real) & (predicted == real))),
            fp=int(np.sum((actual == real) & (predicted == fake))),
            fn=int(np.sum((actual == fake) & (predicted == real))),
        )

    def as_array(self) -> np.ndarray:
        """2×2 array, rows = actual (real, fake), columns = predicted (real, fake)."""
        return np.array([[self.tn, self.fp], [self.fn, self.tp]])


@dataclass(frozen=True)
class Metrics:
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None

    @property
    def undefined(self) -> list[str]:
        return [name for name in ("accuracy", "precision", "recall", "f1")
                if getattr(self, name) is None]


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def f1_score(precision: float | None, recall: float | None) -> float | None:
    """Harmonic mean of precision and recall; None if either is undefined.

    Both zero gives 0.0, which matches ``2tp / (2tp + fp + fn)`` in that case.
    """
    if precision is None or recall is None:
        return None
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def metrics_from_matrix(matrix: ConfusionMatrix) -> Metrics:
    """Accuracy, precision, recall and F1; a zero denominator yields None."""
    precision = _ratio(matrix.tp, matrix.tp + matrix.fp)
    recall = _ratio(matrix.tp, matrix.tp + matrix.fn)
    return Metrics(
        accuracy=_ratio(matrix.tp + matrix.tn, matrix.total),
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
    )


@dataclass(frozen=True)
class SamplePrediction:
    sample_path: str
    video_id: str
    p_fake: float
    predicted: Label
    actual: Label


@dataclass
class EvalReport:
    matrix: ConfusionMatrix
    metrics: Metrics
    threshold: float
    checkpoint_digest: str = ""
    per_sample: list[SamplePrediction] = field(default_factory=list)

    accuracy = property(lambda self: self.metrics.accuracy)
    precision = property(lambda self: self.metrics.precision)
    recall = property(lambda self: self.metrics.recall)
    f1 = property(lambda self: self.metrics.f1)

    def metrics_document(self) -> dict:
        m = self.metrics
        return {
            "matrix": {"tp": self.matrix.tp, "tn": self.matrix.tn,
                       "fp": self.matrix.fp, "fn": self.matrix.fn},
            "accuracy": m.accuracy,
            "precision": m.precision,
            "recall": m.recall,
            "f1": m.f1,
            "threshold": self.threshold,
            "checkpoint_digest": self.checkpoint_digest,
            "undefined_flags": m.undefined,
        }

    def metrics_json(self) -> str:
        return json.dumps(self.metrics_document(), sort_keys=True, indent=2) + "\n"

    def write_per_sample(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(PER_SAMPLE_FIELDS)
            for s in self.per_sample:
                writer.writerow([s.sample_path, s.video_id, repr(s.p_fake),
                                 s.predicted.slug, s.actual.slug])

    @classmethod
    def load(cls, out_dir) -> "EvalReport":
        """Rebuild a report from its metrics document and per-sample file."""
        out_dir = Path(out_dir)
        metrics_path = out_dir / METRICS_NAME
        if not metrics_path.is_file():
            raise MissingFile(f"metrics document not found: {metrics_path}")
        try:
            doc = json.loads(metrics_path.read_text(encoding="utf-8"))
            matrix = ConfusionMatrix(**doc["matrix"])
            metrics = Metrics(doc["accuracy"], doc["precision"], doc["recall"], doc["f1"])
            threshold = float(doc["threshold"])
            digest = doc.get("checkpoint_digest", "")
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise SchemaViolation(f"malformed metrics document {metrics_path}: {exc}") from None
        per_sample = []
        sample_path = out_dir / PER_SAMPLE_NAME
        if sample_path.is_file():
            with open(sample_path, newline="", encoding="utf-8") as fh:
                for r in csv.DictReader(fh):
                    per_sample.append(SamplePrediction(
                        r["sample_path"], r["video_id"], float(r["p_fake"]),
                        Label.parse(r["predicted"]), Label.parse(r["actual"])))
        return cls(matrix, metrics, threshold, digest, per_sample)


def recount(per_sample) -> ConfusionMatrix:
    """Independent tally straight from per-sample rows."""
    tp = tn = fp = fn = 0
    for s in per_sample:
        if s.actual == Label.FAKE:
            if s.predicted == Label.FAKE:
                tp += 1
            else:
                fn += 1
        elif s.predicted == Label.FAKE:
            fp += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, tn, fp, fn)


def predict_labels(p_fake, threshold: float) -> np.ndarray:
    """FAKE when P(FAKE) >= threshold (ties go to FAKE)."""
    return np.where(np.asarray(p_fake) >= threshold, int(Label.FAKE), int(Label.REAL))


def evaluate(
    model: BinaryClassifier,
    test_set: FaceSet,
    decision_threshold: float = 0.5,
    training_video_ids=None,
    checkpoint_digest: str = "",
    batch_size: int = 64,
) -> EvalReport:
    """Score every test sample and assemble the report.

    ``training_video_ids`` are the videos seen in training or validation; any
    overlap with the test set is refused.
    """
    if not 0 < decision_threshold < 1:
        raise ValueError(f"decision_threshold must be in (0, 1), got {decision_threshold}")
    if len(test_set) == 0:
        raise EmptyTestSet("test partition has no samples")
    if training_video_ids is not None:
        leaked = set(test_set.video_ids) & set(training_video_ids)
        if leaked:
            raise LeakageDetected(
                f"{len(leaked)} test video(s) were used in training: {', '.join(sorted(leaked)[:5])}"
            )

    probs = []
    for start in range(0, len(test_set), batch_size):
        x, _ = test_set.batch(range(start, min(start + batch_size, len(test_set))))
        probs.append(predict_proba(model, x)[:, 1].to(torch.float64).numpy())
    p_fake = np.concatenate(probs)
    predicted = predict_labels(p_fake, decision_threshold)

    matrix = ConfusionMatrix.from_labels(test_set.labels, predicted)
    per_sample = [
        SamplePrediction(test_set.sample_ids[i], test_set.video_ids[i], float(p_fake[i]),
                         Label(int(predicted[i])), test_set.label_of(i))
        for i in range(len(test_set))
    ]
    if recount(per_sample) != matrix or matrix.total != len(test_set):
        raise AssertionError("confusion matrix disagrees with the per-sample recount")
    return EvalReport(matrix, metrics_from_matrix(matrix), decision_threshold,
                      checkpoint_digest, per_sample)


def curve_series(history) -> dict[str, list]:
    """Plot series: train loss on every epoch, validation values where measured."""
    validated = [h for h in history if h.val_accuracy is not None]
    return {
        "epochs": [h.epoch for h in history],
        "train_loss": [h.train_loss for h in history],
        "val_epochs": [h.epoch for h in validated],
        "val_loss": [h.val_loss for h in validated],
        "val_accuracy": [h.val_accuracy for h in validated],
    }


def _plot_curves(history, out_dir: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = curve_series(history)
    epochs = series["epochs"]
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(series["val_epochs"], series["val_accuracy"], marker=".", label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_xlim(min(epochs), max(max(epochs), min(epochs) + 1))
    ax.set_title("Validation accuracy")
    ax.grid(alpha=0.3)
    path = out_dir / ACCURACY_PLOT
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, series["train_loss"], marker=".", label="train")
    ax.plot(series["val_epochs"], series["val_loss"], marker=".", label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy")
    ax.set_xlim(min(epochs), max(max(epochs), min(epochs) + 1))
    ax.set_title("Train and validation loss")
    ax.legend()
    ax.grid(alpha=0.3)
    path = out_dir / LOSS_PLOT
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    written.append(path)
    return written


def _plot_confusion(matrix: ConfusionMatrix, out_dir: Path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cells = matrix.as_array()
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(cells, cmap="Blues")
    names = ["real", "fake"]
    ax.set_xticks([0, 1], labels=names)
    ax.set_yticks([0, 1], labels=names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("actual")
    threshold = cells.max() / 2 if cells.max() else 0.5
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(cells[i, j]), ha="center", va="center",
                    color="white" if cells[i, j] > threshold else "black")
    fig.colorbar(im, ax=ax)
    ax.set_title("Confusion matrix (test)")
    fig.tight_layout()
    path = out_dir / CONFUSION_PLOT
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def render_report(report: EvalReport, history, out_dir) -> list[Path]:
    """Write curve plots (when there is history), confusion figure, metrics and per-sample files."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        history = list(history or [])
        if history:
            written += _plot_curves(history, out_dir)
        else:
            log.warning("no training history given; skipping accuracy and loss curves")
        written.append(_plot_confusion(report.matrix, out_dir))
        metrics_path = out_dir / METRICS_NAME
        metrics_path.write_text(report.metrics_json(), encoding="utf-8")
        written.append(metrics_path)
        if report.per_sample:
            report.write_per_sample(out_dir / PER_SAMPLE_NAME)
            written.append(out_dir / PER_SAMPLE_NAME)
    except OSError as exc:
        raise WriteFailure(f"cannot write report to {out_dir}: {exc}") from exc
    return written
