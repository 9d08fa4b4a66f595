"""OOD accuracy prediction from ID per-bin accuracies and OOD bin ratios.

The scoring ensemble (all runs by default) supplies confusion scores that
bin both the ID and the target dataset; the predicted model contributes
only its per-bin ID accuracy. The prediction is the OOD-ratio-weighted
average of those accuracies, with empty ID bins borrowing the accuracy of
the nearest non-empty bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .manifest import Experiment
from .partition import BinPartition, bin_scores
from .scoring import EnsembleView

ENSEMBLE_ID = "ensemble"


def predict_ood_accuracy(
    id_bin_accs: np.ndarray, id_bin_counts: np.ndarray, ood_ratios: np.ndarray
) -> tuple[float, int]:
    """Weighted average of per-bin accuracies; returns (prediction, fallbacks)."""
    accs = np.asarray(id_bin_accs, dtype=np.float64)
    counts = np.asarray(id_bin_counts, dtype=np.int64)
    ratios = np.asarray(ood_ratios, dtype=np.float64)
    if not accs.shape == counts.shape == ratios.shape:
        raise ValidationError(
            "LengthMismatch",
            f"bin vectors disagree: {accs.shape}, {counts.shape}, {ratios.shape}",
        )
    if abs(float(ratios.sum()) - 1.0) > 1e-9:
        raise ValidationError(
            "LengthMismatch", f"ood ratios sum to {float(ratios.sum())!r}, expected 1"
        )
    empty = (counts == 0) | ~np.isfinite(accs)
    filled_idx = np.flatnonzero(~empty)
    if filled_idx.size == 0:
        raise ValidationError("AllIdBinsEmpty", "no non-empty id bin to borrow from")
    filled = accs.copy()
    fallback_used = 0
    for k in np.flatnonzero(empty):
        # nearest non-empty bin by center distance; ties go to the lower index
        j = filled_idx[np.argmin(np.abs(filled_idx - k))]
        filled[k] = accs[j]
        if ratios[k] > 0.0:
            fallback_used += 1
    return float(np.dot(ratios, filled)), fallback_used


@dataclass(frozen=True)
class OodPrediction:
    ood_dataset: str
    model_id: str
    predicted_accuracy: float
    actual_accuracy: float | None
    residual: float | None
    n_bins: int
    window: tuple[int, int]
    fallback_bins_used: int


def _model_correct(exp: Experiment, model_id: str, dataset: str, epoch: int | None):
    """(correctness vector, epoch used) for one model or the consensus bag."""
    labels = exp.labels_for(dataset)
    if model_id == ENSEMBLE_ID:
        logs = exp.logs_for(dataset)
        view = EnsembleView(logs)
        t = view.n_epochs if epoch is None else epoch
        view.check_epoch(t)
        preds = np.argmax(view.mean_block(t, t, 0, view.n_samples)[0], axis=-1)
    else:
        exp.manifest.run(model_id)
        log = exp.logs[(model_id, dataset)]
        t = log.n_epochs if epoch is None else epoch
        if not 1 <= t <= log.n_epochs:
            raise ValidationError("EpochOutOfRange", f"epoch {t} outside [1, {log.n_epochs}]")
        preds = np.argmax(log.probs[t - 1], axis=-1)
    return preds == labels, t


def _per_bin_model_accuracy(part: BinPartition, correct: np.ndarray) -> np.ndarray:
    accs = np.full(part.n_bins, np.nan)
    for k in range(part.n_bins):
        mask = part.assignment == k
        if mask.any():
            accs[k] = float(correct[mask].mean())
    return accs


def _predict_with_scores(
    exp: Experiment,
    model_id: str,
    ood_name: str,
    id_scores: np.ndarray,
    ood_scores: np.ndarray,
    n_bins: int,
    window: tuple[int, int],
    eval_epoch: int | None,
) -> OodPrediction:
    id_entry = exp.manifest.require_id()
    ood_entry = exp.manifest.dataset(ood_name)
    part_id = bin_scores(id_scores, n_bins, exp.n_classes)
    part_ood = bin_scores(ood_scores, n_bins, exp.n_classes)

    id_correct, _ = _model_correct(exp, model_id, id_entry.name, eval_epoch)
    accs = _per_bin_model_accuracy(part_id, id_correct)
    predicted, fallbacks = predict_ood_accuracy(accs, part_id.counts, part_ood.ratios)

    actual = residual = None
    if exp.labels.get(ood_entry.name) is not None:
        ood_correct, _ = _model_correct(exp, model_id, ood_entry.name, eval_epoch)
        actual = float(ood_correct.mean())
        residual = predicted - actual
    return OodPrediction(
        ood_dataset=ood_name,
        model_id=model_id,
        predicted_accuracy=predicted,
        actual_accuracy=actual,
        residual=residual,
        n_bins=n_bins,
        window=window,
        fallback_bins_used=fallbacks,
    )


def predict_for_model(
    exp: Experiment,
    model_id: str,
    ood_name: str,
    n_bins: int = 40,
    window=None,
    scoring_ids=None,
    eval_epoch: int | None = None,
) -> OodPrediction:
    """Predict a model's accuracy on `ood_name` from confusion-score bins."""
    id_name = exp.manifest.require_id().name
    id_view = EnsembleView(exp.logs_for(id_name, scoring_ids))
    ood_view = EnsembleView(exp.logs_for(ood_name, scoring_ids))
    shared = min(id_view.n_epochs, ood_view.n_epochs)
    a, b = (1, shared) if window is None else id_view.resolve_window(window)
    ood_view.resolve_window((a, b))
    id_scores = id_view.entropy_series((a, b)).mean(axis=0)
    ood_scores = ood_view.entropy_series((a, b)).mean(axis=0)
    return _predict_with_scores(
        exp, model_id, ood_name, id_scores, ood_scores, n_bins, (a, b), eval_epoch
    )


def predict_epoch_variant(
    exp: Experiment,
    model_id: str,
    ood_name: str,
    epoch: int,
    n_bins: int = 40,
    scoring_ids=None,
    eval_epoch: int | None = None,
) -> OodPrediction:
    """Same as predict_for_model but partitioning by a single epoch's entropies."""
    return predict_for_model(
        exp,
        model_id,
        ood_name,
        n_bins=n_bins,
        window=(epoch, epoch),
        scoring_ids=scoring_ids,
        eval_epoch=eval_epoch,
    )


@dataclass(frozen=True)
class PredictionReport:
    rows: tuple[OodPrediction, ...]
    mean_confusion: dict[str, float]
    n_bins: int
    window: tuple[int, int]


def prediction_report(
    exp: Experiment,
    n_bins: int = 40,
    window=None,
    scoring_ids=None,
    eval_epoch: int | None = None,
    include_ensemble: bool = True,
) -> PredictionReport:
    """Predictions for every model on the ID set itself and every OOD set."""
    id_name = exp.manifest.require_id().name
    targets = sorted([id_name] + [d.name for d in exp.manifest.ood_datasets])

    views = {
        ds.name: EnsembleView(exp.logs_for(ds.name, scoring_ids))
        for ds in exp.manifest.datasets
    }
    shared = min(v.n_epochs for v in views.values())
    if window is None:
        resolved = (1, shared)
    else:
        resolved = next(iter(views.values())).resolve_window(window)
        if resolved[1] > shared:
            raise ValidationError(
                "WindowOutOfRange", f"window {resolved} exceeds shared epochs {shared}"
            )
    scores: dict[str, np.ndarray] = {}
    mean_confusion: dict[str, float] = {}
    for name, view in views.items():
        scores[name] = view.entropy_series(resolved).mean(axis=0)
        mean_confusion[name] = float(scores[name].mean())

    model_ids = list(exp.model_ids)
    if include_ensemble:
        model_ids.append(ENSEMBLE_ID)
    rows = []
    for model_id in sorted(model_ids):
        for name in targets:
            rows.append(
                _predict_with_scores(
                    exp, model_id, name, scores[id_name], scores[name],
                    n_bins, resolved, eval_epoch,
                )
            )
    rows.sort(key=lambda r: (r.model_id, r.ood_dataset))
    return PredictionReport(
        rows=tuple(rows), mean_confusion=mean_confusion, n_bins=n_bins, window=resolved
    )
