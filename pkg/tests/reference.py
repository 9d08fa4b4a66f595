"""Naive scalar reference implementations used as independent oracles.

Everything here is deliberately loop-based pure Python over float() values:
no numpy vectorization, no shared code with the library. Logs are passed as
(model_id, nested-list probs) pairs so the reference cannot accidentally
lean on library types.
"""

import math


def ref_entropy(p):
    h = 0.0
    for v in p:
        v = float(v)
        if v > 1e-12:
            h -= v * math.log(v)
    return h


def _ordered(logs):
    return sorted(logs, key=lambda item: item[0])


def ref_ensemble_mean(logs, epoch, sample):
    ordered = _ordered(logs)
    n_classes = len(ordered[0][1][0][0])
    acc = [0.0] * n_classes
    for _, probs in ordered:
        row = probs[epoch - 1][sample]
        for j in range(n_classes):
            acc[j] += float(row[j])
    return [v / len(ordered) for v in acc]


def ref_entropy_scores_at(logs, epoch):
    n_samples = len(logs[0][1][0])
    return [ref_entropy(ref_ensemble_mean(logs, epoch, i)) for i in range(n_samples)]


def ref_confusion_scores(logs, lo, hi):
    n_samples = len(logs[0][1][0])
    out = []
    for i in range(n_samples):
        total = 0.0
        for t in range(lo, hi + 1):
            total += ref_entropy(ref_ensemble_mean(logs, t, i))
        out.append(total / (hi - lo + 1))
    return out


def ref_entropy_std(logs, tail_start):
    n_epochs = min(len(probs) for _, probs in logs)
    n_samples = len(logs[0][1][0])
    out = []
    for i in range(n_samples):
        values = [
            ref_entropy(ref_ensemble_mean(logs, t, i)) for t in range(tail_start, n_epochs + 1)
        ]
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        out.append(math.sqrt(var))
    return out


def ref_argmax(row):
    best, best_v = 0, float(row[0])
    for j, v in enumerate(row):
        if float(v) > best_v:
            best, best_v = j, float(v)
    return best


def ref_ensemble_predict(logs, epoch):
    n_samples = len(logs[0][1][0])
    return [ref_argmax(ref_ensemble_mean(logs, epoch, i)) for i in range(n_samples)]


def ref_mean_entropy_trajectory(logs):
    n_epochs = min(len(probs) for _, probs in logs)
    n_samples = len(logs[0][1][0])
    out = []
    for t in range(1, n_epochs + 1):
        scores = ref_entropy_scores_at(logs, t)
        out.append(sum(scores) / n_samples)
    return out


def ref_bin_index(score, n_bins, n_classes):
    log_c = math.log(n_classes)
    edges = [k * log_c / n_bins for k in range(n_bins + 1)]
    edges[0] = 0.0
    edges[-1] = log_c
    for k in range(n_bins):
        if edges[k] <= score < edges[k + 1]:
            return k
    return n_bins - 1  # closed last bin


def ref_per_bin_accuracy(assignment, logs, labels, epoch, n_bins):
    ordered = _ordered(logs)
    n_samples = len(labels)
    mean_acc, ens_acc, counts = [], [], []
    for k in range(n_bins):
        members = [i for i in range(n_samples) if assignment[i] == k]
        counts.append(len(members))
        if not members:
            mean_acc.append(None)
            ens_acc.append(None)
            continue
        hits = 0
        for _, probs in ordered:
            for i in members:
                hits += ref_argmax(probs[epoch - 1][i]) == labels[i]
        mean_acc.append(hits / (len(members) * len(ordered)))
        ens_hits = 0
        for i in members:
            ens_hits += ref_argmax(ref_ensemble_mean(logs, epoch, i)) == labels[i]
        ens_acc.append(ens_hits / len(members))
    return counts, mean_acc, ens_acc


def ref_correct_counts(logs, labels, epoch):
    ordered = _ordered(logs)
    out = []
    for i, label in enumerate(labels):
        count = 0
        for _, probs in ordered:
            count += ref_argmax(probs[epoch - 1][i]) == label
        out.append(count)
    return out


def ref_weighted_prediction(bin_accs, bin_counts, ood_ratios):
    """Mixture prediction with nearest-non-empty borrowing (ties lower)."""
    n = len(bin_accs)
    non_empty = [k for k in range(n) if bin_counts[k] > 0 and bin_accs[k] is not None]
    total = 0.0
    fallbacks = 0
    for k in range(n):
        if bin_counts[k] > 0 and bin_accs[k] is not None:
            acc = bin_accs[k]
        else:
            best = min(non_empty, key=lambda j: (abs(j - k), j))
            acc = bin_accs[best]
            if ood_ratios[k] > 0:
                fallbacks += 1
        total += ood_ratios[k] * acc
    return total, fallbacks
