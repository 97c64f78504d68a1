"""
Confusion matrix and derived metrics
====================================

FAKE is the positive class. Precision and recall are undefined when their
denominators are zero; the report says so instead of printing a number.
"""

from dfdetect.evaluator import ConfusionMatrix, f1_score, metrics_from_matrix

# The published precision and recall give back the published F1.
print(round(f1_score(0.9999, 0.9161), 4))

m = ConfusionMatrix(tp=3, tn=4, fp=1, fn=2)
print(m.as_array())
print(metrics_from_matrix(m))

# A model that never says FAKE has no precision at all.
never_fake = metrics_from_matrix(ConfusionMatrix(tp=0, tn=50, fp=0, fn=50))
print(never_fake.accuracy, never_fake.precision, never_fake.undefined)

# Thresholds trade recall for precision; count false positives as it rises.
import numpy as np
from dfdetect.evaluator import predict_labels

rng = np.random.default_rng(0)
labels = rng.integers(0, 2, 1000)
p_fake = np.clip(labels * 0.4 + rng.uniform(0, 0.6, 1000), 0, 1)
for t in (0.3, 0.5, 0.7):
    cm = ConfusionMatrix.from_labels(labels, predict_labels(p_fake, t))
    print(t, cm, metrics_from_matrix(cm).f1)
