"""Binary DeepFake face classification: catalogs, face crops, fine-tuning, evaluation."""
__version__ = "0.1.0"

from .catalog import (
    Catalog,
    Label,
    Partition,
    SplitPlan,
    VideoRecord,
    balance_classes,
    load_catalog,
    split_videos,
)
from .classifier import (
    BinaryClassifier,
    Checkpoint,
    build_model,
    load_checkpoint,
    predict_proba,
    save_checkpoint,
)
from .evaluator import ConfusionMatrix, EvalReport, evaluate, metrics_from_matrix, render_report
from .faceset import FaceSet
from .trainer import EpochStats, TrainConfig, make_batches, train
