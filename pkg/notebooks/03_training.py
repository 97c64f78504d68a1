"""
Fine-tuning with per-epoch validation
=====================================

The full run fine-tunes EfficientNet-B4 with Adam (lr 1e-4, weight decay
0.005, batch 32, 80 epochs). On a laptop we train the small reference
backbone on a synthetic set whose two classes differ in brightness.
"""

import numpy as np
import matplotlib.pyplot as plt

from dfdetect.classifier import build_model
from dfdetect.facepipe import standardize
from dfdetect.faceset import FaceSet
from dfdetect.trainer import TrainConfig, train


def synthetic(n, seed, prefix):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    px = rng.normal(128, 10, (n, 224, 224, 3)) + np.where(labels == 1, 100, -100)[:, None, None, None]
    px = np.clip(np.rint(px), 0, 255).astype(np.uint8)
    return FaceSet.from_arrays(np.stack([standardize(p) for p in px]), labels,
                               [f"{prefix}{i // 4}" for i in range(n)])


model = build_model("reference-small", seed=0)
print(model.backbone_id, model.parameter_count, "parameters")

config = TrainConfig(epochs=30)
print(config)
best, history = train(model, synthetic(64, 1, "tr"), synthetic(32, 2, "va"), config)
print(f"best epoch {best.metadata['epoch']}, val accuracy {best.metadata['val_accuracy']:.3f}")
print(f"train loss {history[0].train_loss:.4f} -> {history[-1].train_loss:.4f}")

epochs = [h.epoch for h in history]
plt.plot(epochs, [h.train_loss for h in history], label="train")
plt.plot(epochs, [h.val_loss for h in history], label="validation")
plt.xlabel("epoch")
plt.ylabel("cross-entropy")
plt.legend()
plt.show()
