"""Experiment manifests: a YAML file binding datasets, labels, and CPL logs.

A run's ``log_path`` may contain a ``{dataset}`` placeholder; it expands to
one CPL file per evaluated dataset. ``read_manifest`` resolves paths and
validates headers (existence, class-count consistency, sample counts);
``Experiment.load`` pulls the full tensors into memory for scoring.
"""

from __future__ import annotations

from dataclasses import dataclass

import os

import numpy as np
import yaml

from . import problog
from .errors import FormatError, ValidationError

ROLES = ("train", "id", "ood")


@dataclass(frozen=True)
class DatasetEntry:
    name: str
    role: str
    n_samples: int
    labels_path: str | None = None
    tags_path: str | None = None


@dataclass(frozen=True)
class RunEntry:
    model_id: str
    family: str
    seed: int
    param_count: int
    log_path: str
    metrics_path: str | None = None

    def log_file(self, dataset: str) -> str:
        return self.log_path.replace("{dataset}", dataset)


@dataclass(frozen=True)
class Manifest:
    datasets: tuple[DatasetEntry, ...]
    runs: tuple[RunEntry, ...]
    base_dir: str

    def dataset(self, name: str) -> DatasetEntry:
        for d in self.datasets:
            if d.name == name:
                return d
        raise ValidationError("UnknownDataset", f"no dataset named '{name}'")

    def run(self, model_id: str) -> RunEntry:
        for r in self.runs:
            if r.model_id == model_id:
                return r
        raise ValidationError("UnknownModel", f"no run named '{model_id}'")

    @property
    def id_dataset(self) -> DatasetEntry | None:
        for d in self.datasets:
            if d.role == "id":
                return d
        return None

    def require_id(self) -> DatasetEntry:
        d = self.id_dataset
        if d is None:
            raise ValidationError("MissingIdLabels", "manifest declares no id dataset")
        return d

    @property
    def ood_datasets(self) -> tuple[DatasetEntry, ...]:
        return tuple(d for d in self.datasets if d.role == "ood")


def _resolve(base: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base, path))


def _require(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise ValidationError("SchemaError", f"{where}: missing key '{key}'")
    value = doc[key]
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ValidationError("SchemaError", f"{where}: key '{key}' must be {kind.__name__}")
    return value


def read_manifest(path: str) -> Manifest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise FormatError("MissingFile", f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError("SchemaError", f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("SchemaError", f"{path}: manifest must be a mapping")
    base = os.path.dirname(os.path.abspath(path))

    raw_datasets = _require(doc, "datasets", list, path)
    raw_runs = _require(doc, "runs", list, path)
    if not raw_datasets or not raw_runs:
        raise ValidationError("SchemaError", f"{path}: need at least one dataset and one run")

    datasets = []
    for i, entry in enumerate(raw_datasets):
        where = f"{path}: datasets[{i}]"
        if not isinstance(entry, dict):
            raise ValidationError("SchemaError", f"{where}: must be a mapping")
        name = _require(entry, "name", str, where)
        role = _require(entry, "role", str, where)
        if role not in ROLES:
            raise ValidationError("SchemaError", f"{where}: role must be one of {ROLES}")
        n = _require(entry, "n_samples", int, where)
        labels = entry.get("labels_path")
        tags = entry.get("tags_path")
        datasets.append(
            DatasetEntry(
                name=name,
                role=role,
                n_samples=n,
                labels_path=_resolve(base, labels) if labels else None,
                tags_path=_resolve(base, tags) if tags else None,
            )
        )

    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise ValidationError("SchemaError", f"{path}: duplicate dataset names")
    if sum(1 for d in datasets if d.role == "id") > 1:
        raise ValidationError("SchemaError", f"{path}: more than one id dataset")
    for d in datasets:
        if d.role == "id" and d.labels_path is None:
            raise ValidationError("MissingIdLabels", f"{path}: id dataset '{d.name}' has no labels")
        if d.role == "train" and d.labels_path is None:
            raise ValidationError("SchemaError", f"{path}: train dataset '{d.name}' has no labels")

    runs = []
    for i, entry in enumerate(raw_runs):
        where = f"{path}: runs[{i}]"
        if not isinstance(entry, dict):
            raise ValidationError("SchemaError", f"{where}: must be a mapping")
        metrics = entry.get("metrics_path")
        runs.append(
            RunEntry(
                model_id=_require(entry, "model_id", str, where),
                family=_require(entry, "family", str, where),
                seed=_require(entry, "seed", int, where),
                param_count=_require(entry, "param_count", int, where),
                log_path=_resolve(base, _require(entry, "log_path", str, where)),
                metrics_path=_resolve(base, metrics) if metrics else None,
            )
        )
    ids = [r.model_id for r in runs]
    if len(set(ids)) != len(ids):
        raise ValidationError("SchemaError", f"{path}: duplicate model ids")

    manifest = Manifest(datasets=tuple(datasets), runs=tuple(runs), base_dir=base)
    _validate_references(manifest)
    return manifest


def _validate_references(manifest: Manifest) -> None:
    n_classes: int | None = None
    for run in manifest.runs:
        for ds in manifest.datasets:
            log_file = run.log_file(ds.name)
            if not os.path.isfile(log_file):
                raise FormatError(
                    "MissingFile", f"run '{run.model_id}': no log for '{ds.name}' at {log_file}"
                )
            model_id, _, n, c, _, _ = problog.read_cpl_header(log_file)
            if model_id != run.model_id:
                raise ValidationError(
                    "SchemaError",
                    f"{log_file}: embeds model id '{model_id}', manifest says '{run.model_id}'",
                )
            if n != ds.n_samples:
                raise ValidationError(
                    "LengthMismatch",
                    f"{log_file}: {n} samples, dataset '{ds.name}' declares {ds.n_samples}",
                )
            if n_classes is None:
                n_classes = c
            elif c != n_classes:
                raise ValidationError(
                    "InconsistentClassCount",
                    f"{log_file}: {c} classes, other runs have {n_classes}",
                )
        if run.metrics_path is not None and not os.path.isfile(run.metrics_path):
            raise FormatError("MissingFile", f"run '{run.model_id}': {run.metrics_path}")
    for ds in manifest.datasets:
        for p in (ds.labels_path, ds.tags_path):
            if p is not None and not os.path.isfile(p):
                raise FormatError("MissingFile", f"dataset '{ds.name}': {p}")


class Experiment:
    """A manifest with every referenced file loaded into memory."""

    def __init__(self, manifest: Manifest):
        self.manifest = manifest
        self.logs: dict[tuple[str, str], problog.ProbLog] = {}
        self.labels: dict[str, np.ndarray | None] = {}
        self.tags: dict[str, list[tuple[str, ...]] | None] = {}
        self.metrics: dict[str, problog.MetricsSeries | None] = {}
        self.n_classes = 0

    @classmethod
    def load(cls, manifest_path: str) -> "Experiment":
        return cls.from_manifest(read_manifest(manifest_path))

    @classmethod
    def from_manifest(cls, manifest: Manifest) -> "Experiment":
        exp = cls(manifest)
        for run in manifest.runs:
            for ds in manifest.datasets:
                log = problog.read_cpl(run.log_file(ds.name))
                exp.logs[(run.model_id, ds.name)] = log
                exp.n_classes = log.n_classes
            exp.metrics[run.model_id] = (
                problog.read_metrics(run.metrics_path) if run.metrics_path else None
            )
        for ds in manifest.datasets:
            exp.labels[ds.name] = (
                problog.read_labels(ds.labels_path, ds.n_samples, exp.n_classes)
                if ds.labels_path
                else None
            )
            exp.tags[ds.name] = (
                problog.read_tags(ds.tags_path, ds.n_samples) if ds.tags_path else None
            )
        return exp

    @property
    def model_ids(self) -> list[str]:
        return sorted(r.model_id for r in self.manifest.runs)

    def logs_for(self, dataset: str, model_ids=None) -> list[problog.ProbLog]:
        """Logs for one dataset, sorted by model id (the scoring order)."""
        self.manifest.dataset(dataset)
        if model_ids is None:
            model_ids = self.model_ids
        out = []
        for mid in sorted(model_ids):
            key = (mid, dataset)
            if key not in self.logs:
                raise ValidationError("UnknownModel", f"no run named '{mid}'")
            out.append(self.logs[key])
        return out

    def labels_for(self, dataset: str) -> np.ndarray:
        arr = self.labels.get(dataset)
        if arr is None:
            raise ValidationError(
                "LengthMismatch", f"dataset '{dataset}' has no labels on file"
            )
        return arr


def write_manifest_doc(doc: dict, path: str, provenance: str | None = None) -> None:
    text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)
    head = f"# {provenance}\n" if provenance else ""
    problog.atomic_write_text(path, head + text)
