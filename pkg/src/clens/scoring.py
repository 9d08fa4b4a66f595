"""Entropy and confusion scores of an ensemble's averaged class probabilities.

The per-epoch score of a sample is the Shannon entropy (nats) of the
ensemble-mean class distribution; the confusion score averages it over an
inclusive epoch window. Epochs are 1-based: epoch t is row t-1 of a log.

Reduction over runs happens in ascending model-id order, with runs whose
tensors are byte-identical collapsed into one weighted term. That makes
results independent of input order, and duplicating every run (an ensemble
"scaled" by 2) reproduces the exact same bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .parallel import map_chunks

ENTROPY_EPS = 1e-12


def entropy_rows(p: np.ndarray) -> np.ndarray:
    """Shannon entropy in nats along the last axis; 0*ln(0) contributes 0."""
    p = np.asarray(p, dtype=np.float64)
    mask = p > ENTROPY_EPS
    safe = np.where(mask, p, 1.0)
    return np.where(mask, -safe * np.log(safe), 0.0).sum(axis=-1)


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise ValidationError("NotADistribution", f"need a 1-d distribution, got shape {p.shape}")
    if np.any(p < 0.0):
        raise ValidationError("NotADistribution", "negative probability")
    total = float(p.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValidationError("NotADistribution", f"probabilities sum to {total:.9f}")
    return float(entropy_rows(p))


class EnsembleView:
    """Sorted, content-grouped runs ready for ensemble reductions."""

    def __init__(self, logs):
        logs = list(logs)
        if not logs:
            raise ValidationError("ShapeMismatch", "need at least one log")
        runs = sorted(logs, key=lambda lg: lg.model_id)
        ids = [r.model_id for r in runs]
        if len(set(ids)) != len(ids):
            raise ValidationError("ShapeMismatch", "duplicate model ids in ensemble")
        self.n_samples = runs[0].n_samples
        self.n_classes = runs[0].n_classes
        for r in runs:
            if (r.n_samples, r.n_classes) != (self.n_samples, self.n_classes):
                raise ValidationError(
                    "ShapeMismatch",
                    f"log '{r.model_id}' has shape ({r.n_samples}, {r.n_classes}), "
                    f"expected ({self.n_samples}, {self.n_classes})",
                )
        self.n_epochs = min(r.n_epochs for r in runs)
        self.n_runs = len(runs)
        self.model_ids = ids
        grouped: dict[str, list] = {}
        order: list[str] = []
        for r in runs:
            key = r.digest
            if key not in grouped:
                grouped[key] = [r.probs, 0]
                order.append(key)
            grouped[key][1] += 1
        self._groups = [(grouped[k][0], float(grouped[k][1])) for k in order]

    def check_epoch(self, epoch: int) -> None:
        if not 1 <= epoch <= self.n_epochs:
            raise ValidationError(
                "EpochOutOfRange", f"epoch {epoch} outside [1, {self.n_epochs}]"
            )

    def resolve_window(self, window) -> tuple[int, int]:
        if window is None:
            return 1, self.n_epochs
        a, b = int(window[0]), int(window[1])
        if not (1 <= a <= b <= self.n_epochs):
            raise ValidationError(
                "WindowOutOfRange", f"window [{a}, {b}] outside [1, {self.n_epochs}]"
            )
        return a, b

    def mean_block(self, epoch_lo: int, epoch_hi: int, lo: int, hi: int) -> np.ndarray:
        """Ensemble-mean probabilities, shape (epochs, hi-lo, classes), f64."""
        acc = np.zeros((epoch_hi - epoch_lo + 1, hi - lo, self.n_classes), dtype=np.float64)
        for probs, mult in self._groups:
            block = probs[epoch_lo - 1 : epoch_hi, lo:hi].astype(np.float64)
            if mult == 1.0:
                acc += block
            else:
                acc += mult * block
        acc /= self.n_runs
        return acc

    def mean_at(self, epoch: int) -> np.ndarray:
        self.check_epoch(epoch)
        return self.mean_block(epoch, epoch, 0, self.n_samples)[0]

    def entropy_series(self, window=None) -> np.ndarray:
        """s_t(x) for t in the window, shape (window length, n_samples)."""
        a, b = self.resolve_window(window)
        out = np.empty((b - a + 1, self.n_samples), dtype=np.float64)

        def work(lo: int, hi: int) -> None:
            out[:, lo:hi] = entropy_rows(self.mean_block(a, b, lo, hi))

        map_chunks(work, self.n_samples)
        return out


def ensemble_mean(logs, epoch: int, sample: int) -> np.ndarray:
    view = EnsembleView(logs)
    view.check_epoch(epoch)
    if not 0 <= sample < view.n_samples:
        raise ValidationError("ShapeMismatch", f"sample {sample} outside [0, {view.n_samples})")
    return view.mean_block(epoch, epoch, sample, sample + 1)[0, 0]


def entropy_scores_at(logs, epoch: int) -> np.ndarray:
    view = EnsembleView(logs)
    view.check_epoch(epoch)
    return view.entropy_series((epoch, epoch))[0]


def confusion_scores(logs, window=None) -> np.ndarray:
    view = EnsembleView(logs)
    return view.entropy_series(window).mean(axis=0)


def entropy_std(logs, tail_start: int = 10) -> np.ndarray:
    """Per-sample population std of s_t over epochs >= tail_start."""
    view = EnsembleView(logs)
    if not 1 <= tail_start <= view.n_epochs - 1:
        raise ValidationError(
            "TailTooShort",
            f"tail start {tail_start} leaves fewer than 2 of {view.n_epochs} epochs",
        )
    series = view.entropy_series((tail_start, view.n_epochs))
    return series.std(axis=0)


def ensemble_predict(logs, epoch: int) -> np.ndarray:
    """Consensus class per sample: argmax of the ensemble mean, ties -> lowest."""
    view = EnsembleView(logs)
    view.check_epoch(epoch)
    out = np.empty(view.n_samples, dtype=np.int64)

    def work(lo: int, hi: int) -> None:
        out[lo:hi] = np.argmax(view.mean_block(epoch, epoch, lo, hi)[0], axis=-1)

    map_chunks(work, view.n_samples)
    return out


@dataclass(frozen=True)
class ScoreTable:
    """Entropy trajectories plus windowed confusion scores for one dataset."""

    dataset_name: str
    window: tuple[int, int]
    entropy_series: np.ndarray  # (n_epochs, n_samples), epochs 1..T
    confusion: np.ndarray
    entropy_std: np.ndarray | None
    tail_start: int | None

    @property
    def n_epochs(self) -> int:
        return self.entropy_series.shape[0]

    @property
    def n_samples(self) -> int:
        return self.entropy_series.shape[1]


def score_table(
    logs,
    dataset_name: str,
    window=None,
    tail_start: int | None = 10,
) -> ScoreTable:
    view = EnsembleView(logs)
    a, b = view.resolve_window(window)
    series = view.entropy_series()
    confusion = series[a - 1 : b].mean(axis=0)
    std = None
    if tail_start is not None:
        if not 1 <= tail_start <= view.n_epochs - 1:
            raise ValidationError(
                "TailTooShort",
                f"tail start {tail_start} leaves fewer than 2 of {view.n_epochs} epochs",
            )
        std = series[tail_start - 1 :].std(axis=0)
    return ScoreTable(
        dataset_name=dataset_name,
        window=(a, b),
        entropy_series=series,
        confusion=confusion,
        entropy_std=std,
        tail_start=tail_start,
    )


def mean_entropy_trajectory(logs) -> np.ndarray:
    """Mean over samples of s_t(x), one value per epoch."""
    view = EnsembleView(logs)
    return view.entropy_series().mean(axis=1)
