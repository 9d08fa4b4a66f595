import os

import numpy as np
import pytest

from clens.manifest import Experiment
from clens.problog import ProbLog, write_cpl, write_labels, write_tags


def build_experiment(root, runs, datasets):
    """Write CPL logs + labels and return a loaded Experiment.

    runs: dict model_id -> dict dataset_name -> probs array (T, N, C)
    datasets: dict name -> dict(role=..., labels=array|None, tags=list|None,
                                family=..., seed=..., param_count=...)
    """
    root = str(root)
    doc_datasets = []
    for name, spec in datasets.items():
        entry = {
            "name": name,
            "role": spec["role"],
            "n_samples": int(spec["n_samples"]),
        }
        labels = spec.get("labels")
        if labels is not None:
            rel = f"{name}_labels.csv"
            write_labels(np.asarray(labels), os.path.join(root, rel))
            entry["labels_path"] = rel
        tags = spec.get("tags")
        if tags is not None:
            rel = f"{name}_tags.csv"
            write_tags(tags, os.path.join(root, rel))
            entry["tags_path"] = rel
        doc_datasets.append(entry)

    doc_runs = []
    for model_id, logs in runs.items():
        run_dir = os.path.join(root, "runs", model_id)
        os.makedirs(run_dir, exist_ok=True)
        for ds_name, probs in logs.items():
            log = probs if isinstance(probs, ProbLog) else ProbLog.from_probs(model_id, probs)
            write_cpl(log, os.path.join(run_dir, f"{ds_name}.cpl"))
        doc_runs.append(
            {
                "model_id": model_id,
                "family": model_id.rsplit("-", 1)[0],
                "seed": 0,
                "param_count": 100,
                "log_path": f"runs/{model_id}/{{dataset}}.cpl",
            }
        )

    import yaml

    manifest_path = os.path.join(root, "manifest.yaml")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        yaml.safe_dump({"datasets": doc_datasets, "runs": doc_runs}, fh, sort_keys=False)
    return Experiment.load(manifest_path)


def random_logs(rng, n_runs=None, n_epochs=None, n_samples=None, n_classes=None):
    """Random valid ProbLogs sharing (N, C); rows normalized in f64."""
    n_runs = n_runs or int(rng.integers(1, 9))
    n_epochs = n_epochs or int(rng.integers(1, 7))
    n_samples = n_samples or int(rng.integers(1, 65))
    n_classes = n_classes or int(rng.integers(2, 11))
    logs = []
    for m in range(n_runs):
        raw = rng.random((n_epochs, n_samples, n_classes)) + 1e-3
        probs = raw / raw.sum(axis=-1, keepdims=True)
        logs.append(ProbLog.from_probs(f"run-{m:02d}", probs))
    return logs


def as_nested(log: ProbLog):
    """(model_id, nested lists) pair for the scalar reference oracles."""
    return log.model_id, log.probs.tolist()


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
