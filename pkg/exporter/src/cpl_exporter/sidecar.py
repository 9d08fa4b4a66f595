"""Sidecar files next to captured logs: labels, metrics, manifest fragments.

Formats mirror what the analysis side parses: headerless integer labels,
`epoch,dataset,loss,accuracy` metrics rows, and a YAML run entry that can
be merged into an experiment manifest's `runs:` list.
"""

from __future__ import annotations

import yaml


def write_labels_csv(labels, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for value in labels:
            fh.write(f"{int(value)}\n")


def write_metrics_csv(rows, path: str) -> None:
    """rows: iterable of (epoch, dataset, loss, accuracy)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,dataset,loss,accuracy\n")
        for epoch, dataset, loss, accuracy in rows:
            fh.write(f"{int(epoch)},{dataset},{float(loss)!r},{float(accuracy)!r}\n")


def manifest_fragment(
    model_id: str,
    family: str,
    seed: int,
    param_count: int,
    log_path: str,
    metrics_path: str | None = None,
) -> str:
    """YAML snippet for one run, mergeable under a manifest's `runs:` key."""
    entry = {
        "model_id": model_id,
        "family": family,
        "seed": seed,
        "param_count": param_count,
        "log_path": log_path,
    }
    if metrics_path:
        entry["metrics_path"] = metrics_path
    return yaml.safe_dump({"runs": [entry]}, sort_keys=False)
