"""Subcommand implementations: generate, train, score, partition, predict,
phases, fit, extremes, report.

Every operation takes a request model, writes its artifacts atomically under
the requested output directory, and returns a response model. Artifacts embed
a provenance line (tool version + hash of the request) and never embed
timestamps, so reruns with identical inputs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from contextlib import contextmanager

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, ValidationError
from .fits import complexity_index, fit_collinearity, fit_group_model
from .manifest import Experiment, write_manifest_doc
from .partition import bin_scores, correct_count_split, per_bin_accuracy
from .phases import detect_phases
from .predictor import prediction_report
from .problog import atomic_write_text, write_cpl, write_metrics
from .scoring import EnsembleView, ensemble_predict, score_table
from .service import schemas
from .synth import (
    SynthConfig,
    dataset_role,
    gen_colored_two_class,
    gen_mixture,
    read_dataset_bundle,
    write_dataset_bundle,
)
from .trainer import ToyArch, TrainConfig, train_ensemble


_LOCATION_KEYS = ("out_dir", "data_dir", "manifest_path")


def request_payload(req) -> dict:
    """Request fields that define the analysis; storage locations excluded
    so the same configuration hashes identically wherever it runs."""
    payload = req.model_dump()
    for key in _LOCATION_KEYS:
        payload.pop(key, None)
    return payload


def config_hash(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def provenance(payload) -> str:
    return f"clens {__version__} config={config_hash(payload)}"


@contextmanager
def _locked_out_dir(out_dir: str):
    """Advisory lock: concurrent writers on one output dir are unsupported."""
    os.makedirs(out_dir, exist_ok=True)
    lock = os.path.join(out_dir, ".clens.lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            "OutputDirLocked", f"{lock} exists; another invocation may be running"
        ) from None
    try:
        os.close(fd)
        yield
    finally:
        try:
            os.unlink(lock)
        except OSError:
            pass


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def _write_csv(path: str, header: str, rows, note: str) -> None:
    body = "".join(",".join(_fmt(v) for v in row) + "\n" for row in rows)
    atomic_write_text(path, f"# {note}\n{header}\n{body}")


# ---------------------------------------------------------------- presets

def _mixture_preset(seed: int, sizes, params):
    sizes = sizes or {"train": 2500, "id": 4000, "ood_shift": 4000}
    corruption = float(params.get("corruption", 0.04))
    base = dict(
        n_classes=int(params.get("n_classes", 4)),
        core_dims=int(params.get("core_dims", 8)),
        nuisance_dims=int(params.get("nuisance_dims", 4)),
        separation=float(params.get("separation", 2.4)),
        corruption_rate=corruption,
        class_specific=((0, 1, float(params.get("cs_strength", 0.25))),),
        weak=((1, (0, 1, 2), float(params.get("weak_strength", 0.3))),),
        seed=seed,
    )
    main_sizes = {k: v for k, v in sizes.items() if k in ("train", "id")}
    shift_sizes = {k: v for k, v in sizes.items() if k not in ("train", "id")}
    datasets = {}
    if main_sizes:
        datasets.update(gen_mixture(SynthConfig(sizes=main_sizes, **base)))
    if shift_sizes:
        # the shifted slice of the same world: more corruption, stronger
        # class-specific pull (a noisier, harder test distribution)
        shifted = dict(
            base,
            corruption_rate=float(params.get("ood_corruption", min(0.25, corruption + 0.16))),
            class_specific=((0, 1, float(params.get("ood_cs_strength", 0.5))),),
        )
        datasets.update(gen_mixture(SynthConfig(sizes=shift_sizes, **shifted)))
    trainer_defaults = {
        "archs": ["16", "6"],
        "arch_seeds": [0, 1, 2, 3],
        "epochs": 24,
        "batch_size": 64,
        "learning_rate": 0.08,
        "momentum": 0.9,
    }
    echo = dict(base, sizes=dict(sizes))
    echo["class_specific"] = [list(e) for e in echo["class_specific"]]
    echo["weak"] = [[d, list(cs), s] for d, cs, s in echo["weak"]]
    return datasets, echo, trainer_defaults


def _colored2_preset(seed: int, sizes, params):
    sizes = sizes or {"train": 1200, "ood_all_green": 800, "ood_all_red": 800}
    kwargs = dict(
        corruption=float(params.get("corruption", 0.10)),
        color_corr=float(params.get("color_corr", 0.80)),
        core_dims=int(params.get("core_dims", 6)),
        separation=float(params.get("separation", 1.0)),
        color_scale=float(params.get("color_scale", 3.0)),
    )
    datasets = gen_colored_two_class(seed=seed, sizes=sizes, **kwargs)
    # slow-ish training keeps the color-shortcut phase visible in the window
    trainer_defaults = {
        "archs": ["12", "6"],
        "arch_seeds": [0, 1, 2],
        "epochs": 14,
        "batch_size": 64,
        "learning_rate": 0.03,
        "momentum": 0.9,
    }
    echo = dict(kwargs, n_classes=2, sizes=dict(sizes), seed=seed)
    return datasets, echo, trainer_defaults


PRESETS = {"mixture": _mixture_preset, "colored2": _colored2_preset}


# ------------------------------------------------------------------- gen

def run_gen(req: schemas.GenRequest) -> schemas.GenResponse:
    if req.preset not in PRESETS:
        raise ConfigError(
            "UnknownPreset", f"preset '{req.preset}' not in {sorted(PRESETS)}"
        )
    note = provenance(request_payload(req))
    with _locked_out_dir(req.out_dir):
        datasets, echo, trainer_defaults = PRESETS[req.preset](req.seed, req.sizes, req.params)
        summaries = []
        index_rows = []
        for name, ds in datasets.items():
            role = dataset_role(name)
            bundle = os.path.join(req.out_dir, name)
            write_dataset_bundle(ds, bundle, role, echo, provenance=note)
            summaries.append(
                schemas.DatasetSummary(
                    name=name, role=role, n_samples=ds.n_samples, bundle_dir=bundle
                )
            )
            index_rows.append({"name": name, "role": role, "n_samples": int(ds.n_samples)})
        index = {
            "preset": req.preset,
            "seed": req.seed,
            "datasets": index_rows,
            "trainer_defaults": trainer_defaults,
        }
        atomic_write_text(
            os.path.join(req.out_dir, "datasets.yaml"),
            f"# {note}\n" + yaml.safe_dump(index, sort_keys=False),
        )
    return schemas.GenResponse(
        out_dir=req.out_dir,
        preset=req.preset,
        config_hash=config_hash(request_payload(req)),
        datasets=summaries,
    )


# ------------------------------------------------------------------ train

def _parse_arch(spec: str) -> tuple[str, tuple[int, ...]]:
    spec = spec.strip()
    if not spec:
        return "logreg", ()
    widths = tuple(int(w) for w in spec.split(","))
    return "mlp-" + "x".join(str(w) for w in widths), widths


def run_train(req: schemas.TrainRequest) -> schemas.TrainResponse:
    index_path = os.path.join(req.data_dir, "datasets.yaml")
    if not os.path.isfile(index_path):
        raise ConfigError("ConfigInvalid", f"no datasets.yaml under {req.data_dir}")
    with open(index_path, "r", encoding="utf-8") as fh:
        index = yaml.safe_load(fh)
    defaults = index.get("trainer_defaults", {})

    def pick(field, fallback):
        value = getattr(req, field)
        return fallback if value is None else value

    arch_specs = [_parse_arch(s) for s in pick("archs", defaults.get("archs", ["16"]))]
    seeds = [int(s) for s in pick("arch_seeds", defaults.get("arch_seeds", [0, 1]))]
    config = TrainConfig(
        epochs=int(pick("epochs", defaults.get("epochs", 30))),
        batch_size=int(pick("batch_size", defaults.get("batch_size", 128))),
        learning_rate=float(pick("learning_rate", defaults.get("learning_rate", 0.05))),
        momentum=float(pick("momentum", defaults.get("momentum", 0.9))),
        seed=int(pick("seed", index.get("seed", 0))),
        include_epoch_zero=req.include_epoch_zero,
    )

    datasets = []
    ds_entries = []
    n_classes = None
    for entry in index.get("datasets", []):
        name = entry["name"]
        bundle = os.path.join(req.data_dir, name)
        got_name, role, feats, labels, _tags = read_dataset_bundle(bundle)
        with open(os.path.join(bundle, "config.yaml"), "r", encoding="utf-8") as fh:
            bundle_doc = yaml.safe_load(fh)
        n_classes = int(bundle_doc["generator"]["n_classes"])
        datasets.append((name, feats.astype(np.float64), labels))
        ds_entries.append((name, role, feats.shape, bundle))
    if not datasets:
        raise ConfigError("ConfigInvalid", f"{index_path} lists no datasets")
    input_dim = datasets[0][1].shape[1]
    archs = [(family, ToyArch(input_dim, n_classes, widths)) for family, widths in arch_specs]

    note = provenance(request_payload(req))
    with _locked_out_dir(req.out_dir):
        results = train_ensemble(datasets, archs, seeds, config)
        run_entries = []
        summaries = []
        for run in results:
            run_dir = os.path.join(req.out_dir, "runs", run.model_id)
            os.makedirs(run_dir, exist_ok=True)
            for name, log in run.logs.items():
                write_cpl(log, os.path.join(run_dir, f"{name}.cpl"))
            write_metrics(run.metrics, os.path.join(run_dir, "metrics.csv"), provenance=note)
            run_entries.append(
                {
                    "model_id": run.model_id,
                    "family": run.family,
                    "seed": run.seed,
                    "param_count": run.param_count,
                    "log_path": f"runs/{run.model_id}/{{dataset}}.cpl",
                    "metrics_path": f"runs/{run.model_id}/metrics.csv",
                }
            )
            final = {}
            for ds_name in ("train", "id"):
                try:
                    _, _, accs = run.metrics.series(ds_name)
                    final[ds_name] = float(accs[-1])
                except ValidationError:
                    final[ds_name] = None
            summaries.append(
                schemas.RunSummary(
                    model_id=run.model_id,
                    family=run.family,
                    seed=run.seed,
                    param_count=run.param_count,
                    final_train_accuracy=final["train"],
                    final_id_accuracy=final["id"],
                )
            )

        manifest_doc = {"datasets": [], "runs": run_entries}
        for name, role, shape, bundle in ds_entries:
            entry = {
                "name": name,
                "role": role,
                "n_samples": int(shape[0]),
                "labels_path": os.path.relpath(
                    os.path.join(bundle, "labels.csv"), req.out_dir
                ),
            }
            tags_file = os.path.join(bundle, "tags.csv")
            if os.path.isfile(tags_file):
                entry["tags_path"] = os.path.relpath(tags_file, req.out_dir)
            manifest_doc["datasets"].append(entry)
        manifest_path = os.path.join(req.out_dir, "manifest.yaml")
        write_manifest_doc(manifest_doc, manifest_path, provenance=note)
    return schemas.TrainResponse(
        manifest_path=manifest_path,
        config_hash=config_hash(request_payload(req)),
        n_epochs=config.epochs,
        runs=summaries,
    )


# ------------------------------------------------------------------ score

_EXPERIMENT_CACHE: dict[str, tuple[str, Experiment]] = {}
_CACHE_LIMIT = 4


def _experiment_signature(manifest_path: str) -> str:
    h = hashlib.sha256()
    manifest_path = os.path.abspath(manifest_path)
    with open(manifest_path, "rb") as fh:
        h.update(fh.read())
    doc = yaml.safe_load(open(manifest_path, "r", encoding="utf-8"))
    base = os.path.dirname(manifest_path)
    paths = []
    for entry in doc.get("runs", []) if isinstance(doc, dict) else []:
        for ds in doc.get("datasets", []):
            paths.append(entry["log_path"].replace("{dataset}", ds["name"]))
    for entry in doc.get("datasets", []) if isinstance(doc, dict) else []:
        for key in ("labels_path", "tags_path"):
            if entry.get(key):
                paths.append(entry[key])
    for rel in sorted(set(paths)):
        p = rel if os.path.isabs(rel) else os.path.join(base, rel)
        try:
            st = os.stat(p)
            h.update(f"{rel}:{st.st_size}:{st.st_mtime_ns};".encode())
        except OSError:
            h.update(f"{rel}:missing;".encode())
    return h.hexdigest()


def load_experiment(manifest_path: str) -> Experiment:
    """Load (or reuse) a fully validated experiment; the service cache key
    covers the manifest bytes and every referenced file's stat signature."""
    key = os.path.abspath(manifest_path)
    try:
        sig = _experiment_signature(key)
    except (OSError, yaml.YAMLError, KeyError, TypeError):
        sig = ""
    if sig:
        hit = _EXPERIMENT_CACHE.get(key)
        if hit and hit[0] == sig:
            return hit[1]
    exp = Experiment.load(manifest_path)
    if sig:
        if len(_EXPERIMENT_CACHE) >= _CACHE_LIMIT:
            _EXPERIMENT_CACHE.pop(next(iter(_EXPERIMENT_CACHE)))
        _EXPERIMENT_CACHE[key] = (sig, exp)
    return exp


def _shared_window(exp: Experiment, scoring_ids, window) -> tuple[int, int]:
    views = [EnsembleView(exp.logs_for(d.name, scoring_ids)) for d in exp.manifest.datasets]
    shared = min(v.n_epochs for v in views)
    if window is None:
        return (1, shared)
    a, b = int(window[0]), int(window[1])
    if not (1 <= a <= b <= shared):
        raise ValidationError("WindowOutOfRange", f"window [{a}, {b}] outside [1, {shared}]")
    return (a, b)


def run_score(req: schemas.ScoreRequest) -> schemas.ScoreResponse:
    exp = load_experiment(req.manifest_path)
    window = _shared_window(exp, req.scoring_ids, req.window)
    note = provenance(request_payload(req))
    summaries = []
    artifacts = []
    with _locked_out_dir(req.out_dir):
        for ds in exp.manifest.datasets:
            logs = exp.logs_for(ds.name, req.scoring_ids)
            table = score_table(logs, ds.name, window=window, tail_start=req.tail_start)
            for epoch in req.epochs:
                if not 1 <= epoch <= table.n_epochs:
                    raise ValidationError(
                        "EpochOutOfRange", f"epoch {epoch} outside [1, {table.n_epochs}]"
                    )
            header = "sample_index,confusion,entropy_std" + "".join(
                f",s_{t}" for t in req.epochs
            )
            rows = []
            for i in range(table.n_samples):
                row = [
                    i,
                    float(table.confusion[i]),
                    None if table.entropy_std is None else float(table.entropy_std[i]),
                ]
                row.extend(float(table.entropy_series[t - 1, i]) for t in req.epochs)
                rows.append(row)
            path = os.path.join(req.out_dir, f"scores_{ds.name}.csv")
            _write_csv(path, header, rows, note)
            artifacts.append(path)
            summaries.append(
                schemas.ScoreSummary(
                    dataset=ds.name,
                    n_samples=table.n_samples,
                    mean_confusion=float(table.confusion.mean()),
                    mean_entropy_std=(
                        None if table.entropy_std is None else float(table.entropy_std.mean())
                    ),
                )
            )
        summary_path = os.path.join(req.out_dir, "scores_summary.csv")
        _write_csv(
            summary_path,
            "dataset,n_samples,mean_confusion,mean_entropy_std",
            [
                [s.dataset, s.n_samples, s.mean_confusion, s.mean_entropy_std]
                for s in summaries
            ],
            note,
        )
        artifacts.append(summary_path)
    return schemas.ScoreResponse(
        config_hash=config_hash(request_payload(req)),
        window=window,
        summaries=summaries,
        artifacts=artifacts,
    )


# -------------------------------------------------------------- partition

def run_partition(req: schemas.PartitionRequest) -> schemas.PartitionResponse:
    exp = load_experiment(req.manifest_path)
    window = _shared_window(exp, req.scoring_ids, req.window)
    note = provenance(request_payload(req))
    ratios = {}
    artifacts = []
    with _locked_out_dir(req.out_dir):
        ratio_rows = []
        for ds in exp.manifest.datasets:
            logs = exp.logs_for(ds.name, req.scoring_ids)
            view = EnsembleView(logs)
            scores = view.entropy_series(window).mean(axis=0)
            part = bin_scores(scores, req.bins, exp.n_classes)
            path = os.path.join(req.out_dir, f"partition_{ds.name}.csv")
            _write_csv(
                path,
                "sample_index,bin",
                [[i, int(part.assignment[i])] for i in range(part.n_samples)],
                note,
            )
            artifacts.append(path)
            ratios[ds.name] = [float(r) for r in part.ratios]
            for k in range(part.n_bins):
                ratio_rows.append(
                    [
                        ds.name,
                        k,
                        float(part.bin_edges[k]),
                        float(part.bin_edges[k + 1]),
                        int(part.counts[k]),
                        float(part.ratios[k]),
                    ]
                )
            if exp.labels.get(ds.name) is not None:
                eval_epoch = view.n_epochs
                profile = per_bin_accuracy(part, logs, exp.labels_for(ds.name), eval_epoch)
                prof_path = os.path.join(req.out_dir, f"profile_{ds.name}.csv")
                _write_csv(
                    prof_path,
                    "bin,lo,hi,count,ratio,mean_acc,ens_acc,gain",
                    [
                        [
                            k,
                            float(part.bin_edges[k]),
                            float(part.bin_edges[k + 1]),
                            int(profile.counts[k]),
                            float(profile.ratios[k]),
                            float(profile.mean_model_accuracy[k]),
                            float(profile.ensemble_accuracy[k]),
                            float(profile.ensembling_gain[k]),
                        ]
                        for k in range(part.n_bins)
                    ],
                    note,
                )
                artifacts.append(prof_path)
        ratios_path = os.path.join(req.out_dir, "ratios.csv")
        _write_csv(ratios_path, "dataset,bin,lo,hi,count,ratio", ratio_rows, note)
        artifacts.append(ratios_path)
    return schemas.PartitionResponse(
        config_hash=config_hash(request_payload(req)),
        bins=req.bins,
        window=window,
        ratios=ratios,
        artifacts=artifacts,
    )


# ---------------------------------------------------------------- predict

def run_predict(req: schemas.PredictRequest) -> schemas.PredictResponse:
    exp = load_experiment(req.manifest_path)
    window = (req.epoch, req.epoch) if req.epoch is not None else req.window
    report = prediction_report(
        exp,
        n_bins=req.bins,
        window=window,
        scoring_ids=req.scoring_ids,
        eval_epoch=req.eval_epoch,
        include_ensemble=req.include_ensemble,
    )
    note = provenance(request_payload(req))
    rows = [
        schemas.PredictionRow(
            model_id=r.model_id,
            ood=r.ood_dataset,
            predicted=r.predicted_accuracy,
            actual=r.actual_accuracy,
            residual=r.residual,
            fallback_bins=r.fallback_bins_used,
        )
        for r in report.rows
    ]
    artifacts = []
    with _locked_out_dir(req.out_dir):
        path = os.path.join(req.out_dir, "predictions.csv")
        _write_csv(
            path,
            "model_id,ood,predicted,actual,residual,fallback_bins",
            [[r.model_id, r.ood, r.predicted, r.actual, r.residual, r.fallback_bins] for r in rows],
            note,
        )
        artifacts.append(path)
        if req.format == "structured":
            doc = {
                "bins": report.n_bins,
                "window": list(report.window),
                "mean_confusion": {k: float(v) for k, v in sorted(report.mean_confusion.items())},
                "predictions": [r.model_dump() for r in rows],
            }
            spath = os.path.join(req.out_dir, "predictions.yaml")
            atomic_write_text(spath, f"# {note}\n" + yaml.safe_dump(doc, sort_keys=False))
            artifacts.append(spath)
        mc_path = os.path.join(req.out_dir, "mean_confusion.csv")
        _write_csv(
            mc_path,
            "dataset,mean_confusion",
            [[k, float(v)] for k, v in sorted(report.mean_confusion.items())],
            note,
        )
        artifacts.append(mc_path)
    return schemas.PredictResponse(
        config_hash=config_hash(request_payload(req)),
        bins=report.n_bins,
        window=report.window,
        mean_confusion={k: float(v) for k, v in report.mean_confusion.items()},
        rows=rows,
        artifacts=artifacts,
    )


# ----------------------------------------------------------------- phases

def run_phases(req: schemas.PhasesRequest) -> schemas.PhasesResponse:
    exp = load_experiment(req.manifest_path)
    note = provenance(request_payload(req))
    rows = []
    for model_id in exp.model_ids:
        metrics = exp.metrics.get(model_id)
        if metrics is None:
            raise ValidationError(
                "SchemaError", f"run '{model_id}' has no metrics_path in the manifest"
            )
        report = detect_phases(
            metrics,
            train_name=req.train_name,
            id_name=req.id_name,
            smoothing=req.smoothing,
            delta=req.delta,
        )
        rows.append(schemas.PhaseRow(model_id=model_id, t1=report.t1, t2=report.t2))
    artifacts = []
    with _locked_out_dir(req.out_dir):
        path = os.path.join(req.out_dir, "phases.csv")
        _write_csv(
            path, "model_id,t1,t2", [[r.model_id, r.t1, r.t2] for r in rows], note
        )
        artifacts.append(path)
    return schemas.PhasesResponse(
        config_hash=config_hash(request_payload(req)), rows=rows, artifacts=artifacts
    )


# -------------------------------------------------------------------- fit

def run_fit(req: schemas.FitRequest) -> schemas.FitResponse:
    exp = load_experiment(req.manifest_path)
    window = _shared_window(exp, req.scoring_ids, req.window)
    id_name = exp.manifest.require_id().name
    id_logs = exp.logs_for(id_name, req.scoring_ids)
    id_view = EnsembleView(id_logs)
    id_scores = id_view.entropy_series(window).mean(axis=0)
    part = bin_scores(id_scores, req.bins, exp.n_classes)
    centers = part.centers()
    id_labels = exp.labels_for(id_name)

    runs = sorted(exp.manifest.runs, key=lambda r: r.model_id)
    counts = [r.param_count for r in runs]
    try:
        alphas = complexity_index(counts)
        alpha_by_id = {r.model_id: float(a) for r, a in zip(runs, alphas)}
    except ValidationError:
        alpha_by_id = {}

    group_rows = []
    for run in runs:
        log = exp.logs[(run.model_id, id_name)]
        eval_epoch = req.eval_epoch or log.n_epochs
        preds = np.argmax(log.probs[eval_epoch - 1], axis=-1)
        correct = preds == id_labels
        accs = np.full(part.n_bins, np.nan)
        for k in range(part.n_bins):
            mask = part.assignment == k
            if mask.any():
                accs[k] = float(correct[mask].mean())
        fit = fit_group_model(centers, accs, part.counts.astype(float), exp.n_classes)
        group_rows.append(
            schemas.GroupFitRow(
                model_id=run.model_id,
                family=run.family,
                param_count=run.param_count,
                complexity_alpha=alpha_by_id.get(run.model_id),
                fitted_alpha=fit.alpha,
                fit_rss=fit.fit_rss,
                bins_used=fit.n_bins_used,
            )
        )

    collinearity = None
    skipped = None
    labeled = [d for d in exp.manifest.datasets if exp.labels.get(d.name) is not None
               and d.role != "train"]
    if len(labeled) < 2:
        skipped = "need >= 2 labeled non-train datasets"
    elif not alpha_by_id:
        skipped = "complexity index undefined (all runs have equal parameter counts)"
    else:
        tables = {}
        ratios = {}
        split_lo = split_hi = None
        try:
            for ds in labeled:
                labels = exp.labels_for(ds.name)
                logs = exp.logs_for(ds.name, req.scoring_ids)
                eval_epoch = req.eval_epoch or min(lg.n_epochs for lg in logs)
                lo = hi = None
                if req.thresholds is not None:
                    lo, hi = req.thresholds
                split = correct_count_split(logs, labels, eval_epoch, lo=lo, hi=hi)
                split_lo, split_hi = split.lo, split.hi
                ratios[ds.name] = (
                    split.ratios["easy"], split.ratios["medium"], split.ratios["hard"]
                )
                pairs = []
                for run in runs:
                    log = exp.logs[(run.model_id, ds.name)]
                    t = req.eval_epoch or log.n_epochs
                    acc = float((np.argmax(log.probs[t - 1], axis=-1) == labels).mean())
                    pairs.append((alpha_by_id[run.model_id], acc))
                arr = np.asarray(pairs)
                tables[ds.name] = (arr[:, 0], arr[:, 1])
            fit = fit_collinearity(tables, ratios, exp.n_classes)
            collinearity = schemas.CollinearitySummary(
                minacc_easy=_nan_to_none(fit.minacc_easy),
                s_easy=_nan_to_none(fit.s_easy),
                minacc_med=_nan_to_none(fit.minacc_med),
                s_med=_nan_to_none(fit.s_med),
                chance_level=fit.chance_level,
                split_lo=split_lo,
                split_hi=split_hi,
                datasets=[
                    schemas.CollinearityDatasetRow(
                        dataset=name,
                        minacc=fit.per_dataset[name][0],
                        slope=fit.per_dataset[name][1],
                        ols_rss=fit.per_dataset[name][2],
                        ratio_easy=ratios[name][0],
                        ratio_med=ratios[name][1],
                        ratio_hard=ratios[name][2],
                        minacc_residual=fit.constraint_residuals[name][0],
                        slope_residual=fit.constraint_residuals[name][1],
                    )
                    for name in sorted(tables)
                ],
            )
        except ValidationError as exc:
            skipped = str(exc)

    note = provenance(request_payload(req))
    artifacts = []
    with _locked_out_dir(req.out_dir):
        path = os.path.join(req.out_dir, "fit_group_model.csv")
        _write_csv(
            path,
            "model_id,family,param_count,complexity_alpha,fitted_alpha,fit_rss,bins_used",
            [
                [
                    r.model_id, r.family, r.param_count, r.complexity_alpha,
                    r.fitted_alpha, r.fit_rss, r.bins_used,
                ]
                for r in group_rows
            ],
            note,
        )
        artifacts.append(path)
        if collinearity is not None:
            cpath = os.path.join(req.out_dir, "fit_collinearity.csv")
            header = (
                "dataset,minacc,slope,ols_rss,ratio_easy,ratio_med,ratio_hard,"
                "minacc_residual,slope_residual,split_lo,split_hi"
            )
            rows = [
                [
                    d.dataset, d.minacc, d.slope, d.ols_rss, d.ratio_easy, d.ratio_med,
                    d.ratio_hard, d.minacc_residual, d.slope_residual,
                    collinearity.split_lo, collinearity.split_hi,
                ]
                for d in collinearity.datasets
            ]
            rows.append(
                [
                    "(shared)",
                    collinearity.minacc_easy,
                    collinearity.s_easy,
                    None,
                    None,
                    None,
                    None,
                    collinearity.minacc_med,
                    collinearity.s_med,
                    collinearity.split_lo,
                    collinearity.split_hi,
                ]
            )
            _write_csv(cpath, header, rows, note)
            artifacts.append(cpath)
    return schemas.FitResponse(
        config_hash=config_hash(request_payload(req)),
        group_fits=group_rows,
        collinearity=collinearity,
        collinearity_skipped=skipped,
        artifacts=artifacts,
    )


def _nan_to_none(value: float):
    return None if value != value else value


# --------------------------------------------------------------- extremes

def run_extremes(req: schemas.ExtremesRequest) -> schemas.ExtremesResponse:
    exp = load_experiment(req.manifest_path)
    ds = exp.manifest.dataset(req.dataset)
    logs = exp.logs_for(ds.name, req.scoring_ids)
    view = EnsembleView(logs)
    window = view.resolve_window(req.window)
    scores = view.entropy_series(window).mean(axis=0)
    if req.k < 0:
        raise ValidationError("ConfigInvalid", f"k must be >= 0, got {req.k}")

    labels = exp.labels.get(ds.name)
    preds = None
    if labels is not None:
        preds = ensemble_predict(logs, view.n_epochs)

    if req.which == "lowest":
        order = np.argsort(scores, kind="stable")
    else:
        order = np.argsort(-scores, kind="stable")
    if req.mistakes_only:
        if labels is None or preds is None:
            raise ValidationError(
                "LengthMismatch", f"dataset '{ds.name}' has no labels for mistakes_only"
            )
        order = order[preds[order] != labels[order]]
    picked = order[: req.k]

    tags = exp.tags.get(ds.name)
    rows = []
    for rank, idx in enumerate(picked):
        i = int(idx)
        rows.append(
            schemas.ExtremeRow(
                rank=rank,
                sample_index=i,
                confusion=float(scores[i]),
                label=None if labels is None else int(labels[i]),
                ensemble_pred=None if preds is None else int(preds[i]),
                tags=None if tags is None else ";".join(tags[i]),
            )
        )
    artifacts = []
    if req.out_dir:
        note = provenance(request_payload(req))
        suffix = "_mistakes" if req.mistakes_only else ""
        with _locked_out_dir(req.out_dir):
            path = os.path.join(
                req.out_dir, f"extremes_{ds.name}_{req.which}{suffix}.csv"
            )
            _write_csv(
                path,
                "rank,sample_index,confusion,label,ensemble_pred,tags",
                [
                    [r.rank, r.sample_index, r.confusion, r.label, r.ensemble_pred, r.tags]
                    for r in rows
                ],
                note,
            )
            artifacts.append(path)
    return schemas.ExtremesResponse(
        config_hash=config_hash(request_payload(req)),
        dataset=ds.name,
        which=req.which,
        rows=rows,
        artifacts=artifacts,
    )


# ----------------------------------------------------------------- report

_REPORT_SECTIONS = (
    ("scores", "scores_summary.csv"),
    ("ratios", "ratios.csv"),
    ("predictions", "predictions.csv"),
    ("mean_confusion", "mean_confusion.csv"),
    ("phases", "phases.csv"),
    ("group_fits", "fit_group_model.csv"),
    ("collinearity", "fit_collinearity.csv"),
)


def _read_artifact_rows(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        return [], []
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def run_report(req: schemas.ReportRequest) -> schemas.ReportResponse:
    """Aggregate previously written artifacts; no recomputation."""
    if not os.path.isdir(req.out_dir):
        raise ConfigError("ConfigInvalid", f"no clens artifacts under {req.out_dir}")
    with _locked_out_dir(req.out_dir):
        sections = {}
        for key, filename in _REPORT_SECTIONS:
            path = os.path.join(req.out_dir, filename)
            if os.path.isfile(path):
                header, rows = _read_artifact_rows(path)
                sections[key] = {"columns": header, "rows": rows}
        for name in sorted(os.listdir(req.out_dir)):
            if name.startswith(("extremes_", "profile_")) and name.endswith(".csv"):
                header, rows = _read_artifact_rows(os.path.join(req.out_dir, name))
                sections[name[: -len(".csv")]] = {"columns": header, "rows": rows}
        if not sections:
            raise ConfigError("ConfigInvalid", f"no clens artifacts under {req.out_dir}")

        note = provenance(request_payload(req))
        if req.format == "structured":
            report_path = os.path.join(req.out_dir, "report.yaml")
            doc = {"tool": f"clens {__version__}", "sections": sections}
            atomic_write_text(report_path, f"# {note}\n" + yaml.safe_dump(doc, sort_keys=False))
        else:
            report_path = os.path.join(req.out_dir, "report.csv")
            lines = [f"# {note}", "section,row"]
            for key in sections:
                lines.append(f"{key},{';'.join(sections[key]['columns'])}")
                for row in sections[key]["rows"]:
                    lines.append(f"{key},{';'.join(row)}")
            atomic_write_text(report_path, "\n".join(lines) + "\n")
    return schemas.ReportResponse(report_path=report_path, sections=sorted(sections))
