"""Training-phase detection from loss/accuracy metrics.

Phase-I ends at the epoch before the smoothed mean test loss first rises
while the train loss still falls (the smoothed test-loss minimum); Phase-II
ends at the first epoch after which neither the train nor the ID test
accuracy improves by more than `delta`. Both tests run on centered moving
averages (edge-truncated), so w=1 means raw series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .problog import MetricsSeries
from .scoring import mean_entropy_trajectory  # noqa: F401  (re-export: phase evidence)


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    if window < 1 or window % 2 == 0:
        raise ValidationError("TooFewEpochs", f"smoothing window must be odd >= 1, got {window}")
    x = np.asarray(x, dtype=np.float64)
    if window == 1:
        return x.copy()
    half = window // 2
    out = np.empty_like(x)
    for i in range(x.size):
        lo = max(0, i - half)
        hi = min(x.size, i + half + 1)
        out[i] = x[lo:hi].mean()
    return out


@dataclass(frozen=True)
class PhaseReport:
    t1: int | None  # last epoch of phase-I (first smoothed test-loss rise)
    t2: int | None  # last epoch of phase-II (accuracy saturation)
    epochs: np.ndarray
    smoothed_train_loss: np.ndarray
    smoothed_test_loss: np.ndarray
    smoothed_train_accuracy: np.ndarray
    smoothed_id_accuracy: np.ndarray
    smoothing: int
    delta: float


def detect_phases(
    metrics: MetricsSeries,
    train_name: str = "train",
    id_name: str | None = None,
    smoothing: int = 3,
    delta: float = 0.005,
) -> PhaseReport:
    names = metrics.datasets()
    if train_name not in names:
        raise ValidationError("UnknownDataset", f"metrics have no '{train_name}' series")
    test_names = [n for n in names if n != train_name]
    if not test_names:
        raise ValidationError("UnknownDataset", "metrics contain no test series")
    if id_name is None:
        id_name = "id" if "id" in test_names else test_names[0]
    elif id_name not in test_names:
        raise ValidationError("UnknownDataset", f"metrics have no '{id_name}' series")

    epochs, train_loss, train_acc = metrics.series(train_name)
    if epochs.size < 5:
        raise ValidationError("TooFewEpochs", f"need >= 5 epochs, got {epochs.size}")
    test_losses = []
    for name in test_names:
        e, loss, acc = metrics.series(name)
        if e.shape != epochs.shape or np.any(e != epochs):
            raise ValidationError("TooFewEpochs", f"'{name}' epochs differ from '{train_name}'")
        test_losses.append(loss)
        if name == id_name:
            id_acc = acc
    mean_test_loss = np.mean(np.stack(test_losses), axis=0)

    sm_train_loss = moving_average(train_loss, smoothing)
    sm_test_loss = moving_average(mean_test_loss, smoothing)
    sm_train_acc = moving_average(train_acc, smoothing)
    sm_id_acc = moving_average(id_acc, smoothing)

    t1 = None
    for i in range(1, epochs.size):
        if sm_test_loss[i] > sm_test_loss[i - 1] and sm_train_loss[i] < sm_train_loss[i - 1]:
            t1 = int(epochs[i - 1])
            break

    t2 = None
    for i in range(epochs.size):
        future_train = sm_train_acc[i + 1 :]
        future_id = sm_id_acc[i + 1 :]
        train_gain = future_train.max() - sm_train_acc[i] if future_train.size else -np.inf
        id_gain = future_id.max() - sm_id_acc[i] if future_id.size else -np.inf
        if train_gain < delta and id_gain < delta:
            t2 = int(epochs[i])
            break

    return PhaseReport(
        t1=t1,
        t2=t2,
        epochs=epochs,
        smoothed_train_loss=sm_train_loss,
        smoothed_test_loss=sm_test_loss,
        smoothed_train_accuracy=sm_train_acc,
        smoothed_id_accuracy=sm_id_acc,
        smoothing=smoothing,
        delta=delta,
    )
