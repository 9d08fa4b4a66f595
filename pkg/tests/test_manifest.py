import os

import numpy as np
import pytest
import yaml

from clens.errors import ClensError, FormatError, ValidationError
from clens.manifest import read_manifest
from clens.problog import ProbLog, write_cpl, write_labels

from .conftest import build_experiment


def write_doc(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def seed_run_files(root, model_id, datasets, t=2, c=3, rng=None):
    rng = rng or np.random.default_rng(0)
    run_dir = os.path.join(root, "runs", model_id)
    os.makedirs(run_dir, exist_ok=True)
    for name, n in datasets.items():
        raw = rng.random((t, n, c)) + 1e-2
        log = ProbLog.from_probs(model_id, raw / raw.sum(axis=-1, keepdims=True))
        write_cpl(log, os.path.join(run_dir, f"{name}.cpl"))
    return f"runs/{model_id}/{{dataset}}.cpl"


def test_valid_manifest_loads(tmp_path, rng):
    n = 12
    labels = rng.integers(0, 3, size=n)
    exp = build_experiment(
        tmp_path,
        {
            f"m-{i}": {
                "id": (lambda: (lambda raw: raw / raw.sum(axis=-1, keepdims=True))(
                    rng.random((2, n, 3)) + 1e-2))(),
                "ood1": (lambda: (lambda raw: raw / raw.sum(axis=-1, keepdims=True))(
                    rng.random((2, n, 3)) + 1e-2))(),
            }
            for i in range(3)
        },
        {
            "id": {"role": "id", "n_samples": n, "labels": labels},
            "ood1": {"role": "ood", "n_samples": n},
        },
    )
    assert exp.model_ids == ["m-0", "m-1", "m-2"]
    assert exp.n_classes == 3
    assert exp.manifest.id_dataset.name == "id"
    assert exp.labels["ood1"] is None
    logs = exp.logs_for("id")
    assert [lg.model_id for lg in logs] == ["m-0", "m-1", "m-2"]


def test_inconsistent_class_count(tmp_path, rng):
    root = str(tmp_path)
    write_labels(np.zeros(4, dtype=int), os.path.join(root, "id_labels.csv"))
    p1 = seed_run_files(root, "a-0", {"id": 4}, c=3, rng=rng)
    p2 = seed_run_files(root, "b-0", {"id": 4}, c=5, rng=rng)
    doc = {
        "datasets": [
            {"name": "id", "role": "id", "n_samples": 4, "labels_path": "id_labels.csv"}
        ],
        "runs": [
            {"model_id": "a-0", "family": "a", "seed": 0, "param_count": 1, "log_path": p1},
            {"model_id": "b-0", "family": "b", "seed": 0, "param_count": 1, "log_path": p2},
        ],
    }
    path = os.path.join(root, "manifest.yaml")
    write_doc(path, doc)
    with pytest.raises(ValidationError) as err:
        read_manifest(path)
    assert err.value.code == "InconsistentClassCount"


def test_missing_id_labels(tmp_path, rng):
    root = str(tmp_path)
    p1 = seed_run_files(root, "a-0", {"id": 4}, rng=rng)
    doc = {
        "datasets": [{"name": "id", "role": "id", "n_samples": 4}],
        "runs": [
            {"model_id": "a-0", "family": "a", "seed": 0, "param_count": 1, "log_path": p1}
        ],
    }
    path = os.path.join(root, "manifest.yaml")
    write_doc(path, doc)
    with pytest.raises(ValidationError) as err:
        read_manifest(path)
    assert err.value.code == "MissingIdLabels"


def test_missing_log_file(tmp_path):
    root = str(tmp_path)
    write_labels(np.zeros(4, dtype=int), os.path.join(root, "id_labels.csv"))
    doc = {
        "datasets": [
            {"name": "id", "role": "id", "n_samples": 4, "labels_path": "id_labels.csv"}
        ],
        "runs": [
            {"model_id": "a-0", "family": "a", "seed": 0, "param_count": 1,
             "log_path": "runs/a-0/{dataset}.cpl"}
        ],
    }
    path = os.path.join(root, "manifest.yaml")
    write_doc(path, doc)
    with pytest.raises(FormatError) as err:
        read_manifest(path)
    assert err.value.code == "MissingFile"


def test_sample_count_mismatch(tmp_path, rng):
    root = str(tmp_path)
    write_labels(np.zeros(9, dtype=int), os.path.join(root, "id_labels.csv"))
    p1 = seed_run_files(root, "a-0", {"id": 4}, rng=rng)
    doc = {
        "datasets": [
            {"name": "id", "role": "id", "n_samples": 9, "labels_path": "id_labels.csv"}
        ],
        "runs": [
            {"model_id": "a-0", "family": "a", "seed": 0, "param_count": 1, "log_path": p1}
        ],
    }
    path = os.path.join(root, "manifest.yaml")
    write_doc(path, doc)
    with pytest.raises(ValidationError) as err:
        read_manifest(path)
    assert err.value.code == "LengthMismatch"


def test_duplicate_names_and_bad_role(tmp_path, rng):
    root = str(tmp_path)
    write_labels(np.zeros(4, dtype=int), os.path.join(root, "id_labels.csv"))
    p1 = seed_run_files(root, "a-0", {"id": 4}, rng=rng)
    base = {
        "datasets": [
            {"name": "id", "role": "id", "n_samples": 4, "labels_path": "id_labels.csv"}
        ],
        "runs": [
            {"model_id": "a-0", "family": "a", "seed": 0, "param_count": 1, "log_path": p1}
        ],
    }
    path = os.path.join(root, "manifest.yaml")

    doc = {**base, "datasets": base["datasets"] * 2}
    write_doc(path, doc)
    with pytest.raises(ValidationError) as err:
        read_manifest(path)
    assert err.value.code == "SchemaError"

    doc = {**base, "datasets": [{**base["datasets"][0], "role": "test"}]}
    write_doc(path, doc)
    with pytest.raises(ValidationError):
        read_manifest(path)

    doc = {**base, "runs": base["runs"] * 2}
    write_doc(path, doc)
    with pytest.raises(ValidationError):
        read_manifest(path)


def test_embedded_model_id_must_match(tmp_path, rng):
    root = str(tmp_path)
    write_labels(np.zeros(4, dtype=int), os.path.join(root, "id_labels.csv"))
    seed_run_files(root, "other-id", {"id": 4}, rng=rng)
    doc = {
        "datasets": [
            {"name": "id", "role": "id", "n_samples": 4, "labels_path": "id_labels.csv"}
        ],
        "runs": [
            {"model_id": "a-0", "family": "a", "seed": 0, "param_count": 1,
             "log_path": "runs/other-id/{dataset}.cpl"}
        ],
    }
    path = os.path.join(root, "manifest.yaml")
    write_doc(path, doc)
    with pytest.raises(ValidationError) as err:
        read_manifest(path)
    assert err.value.code == "SchemaError"


def test_experiment_unknown_lookups(tmp_path, rng):
    n = 6
    raw = rng.random((2, n, 3)) + 1e-2
    exp = build_experiment(
        tmp_path,
        {"m-0": {"id": raw / raw.sum(axis=-1, keepdims=True)}},
        {"id": {"role": "id", "n_samples": n, "labels": np.zeros(n, dtype=int)}},
    )
    with pytest.raises(ClensError) as err:
        exp.logs_for("nope")
    assert err.value.code == "UnknownDataset"
    with pytest.raises(ClensError) as err:
        exp.logs_for("id", ["ghost"])
    assert err.value.code == "UnknownModel"
