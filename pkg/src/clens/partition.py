"""Confusion-score binning and label-dependent subpopulation splits.

Bins are uniform over [0, ln C]: half-open [lo, hi) with the last bin
closed, assignment by comparison against the shared edge grid so boundary
scores land deterministically. The easy/medium/hard split instead counts
how many runs classify each sample correctly and compares against real-
valued thresholds (strict on both sides).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .scoring import EnsembleView

SCORE_SLACK = 1e-9  # accumulated f64 rounding can push entropies past ln C

GROUP_NAMES = ("easy", "medium", "hard")


def bin_edges(n_bins: int, n_classes: int) -> np.ndarray:
    log_c = math.log(n_classes)
    edges = np.array([k * log_c / n_bins for k in range(n_bins + 1)], dtype=np.float64)
    edges[0] = 0.0
    edges[-1] = log_c
    return edges


@dataclass(frozen=True)
class BinPartition:
    n_bins: int
    n_classes: int
    bin_edges: np.ndarray  # n_bins + 1 values spanning [0, ln C]
    assignment: np.ndarray  # per-sample bin index
    ratios: np.ndarray  # per-bin participation fraction

    @property
    def n_samples(self) -> int:
        return self.assignment.shape[0]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_bins)

    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def bin_scores(scores: np.ndarray, n_bins: int, n_classes: int) -> BinPartition:
    if n_bins < 1:
        raise ValidationError("ZeroBins", f"n_bins must be >= 1, got {n_bins}")
    if n_classes < 2:
        raise ValidationError("ZeroBins", f"n_classes must be >= 2, got {n_classes}")
    scores = np.asarray(scores, dtype=np.float64)
    log_c = math.log(n_classes)
    bad = (scores < 0.0) | (scores > log_c + SCORE_SLACK) | ~np.isfinite(scores)
    if bool(bad.any()):
        i = int(np.flatnonzero(bad)[0])
        raise ValidationError(
            "ScoreOutOfRange", f"score {scores[i]!r} at index {i} outside [0, ln {n_classes}]"
        )
    edges = bin_edges(n_bins, n_classes)
    assignment = np.searchsorted(edges, scores, side="right") - 1
    assignment = np.clip(assignment, 0, n_bins - 1).astype(np.int64)
    counts = np.bincount(assignment, minlength=n_bins)
    return BinPartition(
        n_bins=n_bins,
        n_classes=n_classes,
        bin_edges=edges,
        assignment=assignment,
        ratios=counts / scores.shape[0],
    )


def participation_ratios(partition: BinPartition) -> np.ndarray:
    return partition.counts / partition.n_samples


def _resolve_epochs(view: EnsembleView, epoch_or_window) -> tuple[int, int]:
    if isinstance(epoch_or_window, (int, np.integer)):
        epoch = int(epoch_or_window)
        view.check_epoch(epoch)
        return epoch, epoch
    return view.resolve_window(epoch_or_window)


@dataclass(frozen=True)
class BinProfile:
    n_bins: int
    counts: np.ndarray
    ratios: np.ndarray
    mean_model_accuracy: np.ndarray  # NaN for empty bins
    ensemble_accuracy: np.ndarray
    mean_error_rate: np.ndarray
    ensembling_gain: np.ndarray


def per_bin_accuracy(
    partition: BinPartition, logs, labels: np.ndarray, epoch_or_window
) -> BinProfile:
    """Per-bin mean single-run accuracy, ensemble accuracy, and their gap."""
    view = EnsembleView(logs)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != view.n_samples or partition.n_samples != view.n_samples:
        raise ValidationError(
            "LengthMismatch",
            f"labels ({labels.shape[0]}), partition ({partition.n_samples}) and "
            f"logs ({view.n_samples}) disagree on sample count",
        )
    a, b = _resolve_epochs(view, epoch_or_window)
    n_epochs = b - a + 1
    runs = sorted(logs, key=lambda lg: lg.model_id)

    model_hits = np.zeros(view.n_samples, dtype=np.float64)
    ens_hits = np.zeros(view.n_samples, dtype=np.float64)
    for t in range(a, b + 1):
        for run in runs:
            preds = np.argmax(run.probs[t - 1], axis=-1)
            model_hits += preds == labels
        ens_preds = np.argmax(view.mean_block(t, t, 0, view.n_samples)[0], axis=-1)
        ens_hits += ens_preds == labels

    counts = partition.counts
    mean_acc = np.full(partition.n_bins, np.nan)
    ens_acc = np.full(partition.n_bins, np.nan)
    for k in range(partition.n_bins):
        mask = partition.assignment == k
        if counts[k] == 0:
            continue
        mean_acc[k] = model_hits[mask].sum() / (counts[k] * len(runs) * n_epochs)
        ens_acc[k] = ens_hits[mask].sum() / (counts[k] * n_epochs)
    return BinProfile(
        n_bins=partition.n_bins,
        counts=counts,
        ratios=counts / view.n_samples,
        mean_model_accuracy=mean_acc,
        ensemble_accuracy=ens_acc,
        mean_error_rate=1.0 - mean_acc,
        ensembling_gain=ens_acc - mean_acc,
    )


@dataclass(frozen=True)
class SubpopSplit:
    """easy/medium/hard by how many runs get each sample right at one epoch."""

    lo: float
    hi: float
    epoch: int
    correct_counts: np.ndarray
    groups: np.ndarray  # index into GROUP_NAMES
    ratios: dict[str, float]

    def mask(self, group: str) -> np.ndarray:
        return self.groups == GROUP_NAMES.index(group)


def correct_count_split(
    logs, labels: np.ndarray, epoch: int, lo: float | None = None, hi: float | None = None
) -> SubpopSplit:
    view = EnsembleView(logs)
    view.check_epoch(epoch)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != view.n_samples:
        raise ValidationError(
            "LengthMismatch", f"{labels.shape[0]} labels for {view.n_samples} samples"
        )
    n_runs = view.n_runs
    if lo is None:
        lo = n_runs / 3.0
    if hi is None:
        hi = 2.0 * n_runs / 3.0
    if not (0.0 <= lo < hi <= n_runs):
        raise ValidationError(
            "BadThresholds", f"need 0 <= lo < hi <= {n_runs}, got lo={lo}, hi={hi}"
        )
    counts = np.zeros(view.n_samples, dtype=np.int64)
    for run in sorted(logs, key=lambda lg: lg.model_id):
        counts += np.argmax(run.probs[epoch - 1], axis=-1) == labels
    groups = np.full(view.n_samples, GROUP_NAMES.index("medium"), dtype=np.int64)
    groups[counts > hi] = GROUP_NAMES.index("easy")
    groups[counts < lo] = GROUP_NAMES.index("hard")
    n = view.n_samples
    ratios = {name: float((groups == gi).sum() / n) for gi, name in enumerate(GROUP_NAMES)}
    return SubpopSplit(
        lo=float(lo), hi=float(hi), epoch=epoch, correct_counts=counts,
        groups=groups, ratios=ratios,
    )


@dataclass(frozen=True)
class SubpopAccuracy:
    count: int
    ratio: float
    per_run_accuracy: np.ndarray  # ascending model-id order; empty group -> NaN
    mean_run_accuracy: float
    ensemble_accuracy: float


def subpop_accuracy(
    split: SubpopSplit, logs, labels: np.ndarray, epoch: int
) -> dict[str, SubpopAccuracy]:
    view = EnsembleView(logs)
    view.check_epoch(epoch)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != view.n_samples or split.groups.shape[0] != view.n_samples:
        raise ValidationError(
            "LengthMismatch",
            f"labels ({labels.shape[0]}), split ({split.groups.shape[0]}) and "
            f"logs ({view.n_samples}) disagree on sample count",
        )
    runs = sorted(logs, key=lambda lg: lg.model_id)
    run_correct = np.stack(
        [np.argmax(r.probs[epoch - 1], axis=-1) == labels for r in runs]
    )  # (n_runs, n_samples)
    ens_correct = (
        np.argmax(view.mean_block(epoch, epoch, 0, view.n_samples)[0], axis=-1) == labels
    )
    out = {}
    for gi, name in enumerate(GROUP_NAMES):
        mask = split.groups == gi
        count = int(mask.sum())
        if count == 0:
            out[name] = SubpopAccuracy(
                count=0,
                ratio=0.0,
                per_run_accuracy=np.full(len(runs), np.nan),
                mean_run_accuracy=float("nan"),
                ensemble_accuracy=float("nan"),
            )
            continue
        per_run = run_correct[:, mask].mean(axis=1)
        out[name] = SubpopAccuracy(
            count=count,
            ratio=count / view.n_samples,
            per_run_accuracy=per_run,
            mean_run_accuracy=float(per_run.mean()),
            ensemble_accuracy=float(ens_correct[mask].mean()),
        )
    return out
