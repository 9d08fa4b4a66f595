"""Synthetic multiclass datasets with ground-truth difficulty tags.

Samples are Gaussian class cores plus a nuisance block carrying per-class
signatures. Spurious structure is injected by redirecting draws: a
class-specific entry (source, target, strength) makes a source-class sample
carry the target class's nuisance signature with probability `strength`;
a weak entry (dim, class_set, strength) re-centers one nuisance dim on a
signature shared by several classes. Label corruption resamples the label
uniformly among the other classes. Every redirect is recorded as a tag, so
generated datasets double as oracles for the scoring pipeline.

Draw order per sample is frozen (class, core, redirect draws, nuisance,
weak draws, corruption) so one (config, seed) pair reproduces identical
bytes anywhere.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ValidationError
from .partition import bin_scores
from .problog import (
    atomic_write_text,
    read_features,
    read_labels,
    read_tags,
    write_features,
    write_labels,
    write_tags,
)
from .rng import Xoshiro256pp, derive_seed

TAG_CLEAN = "clean"
TAG_CORRUPTED = "corrupted"
TAG_AMBIGUOUS = "ambiguous"


def tag_class_specific(source: int, target: int) -> str:
    return f"class_specific_sp({source}->{target})"


def tag_weak(dim: int) -> str:
    return f"weak_sp({dim})"


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int
    core_dims: int
    nuisance_dims: int
    separation: float  # norm of each class-core mean, in noise-sigma units
    corruption_rate: float
    class_specific: tuple[tuple[int, int, float], ...]  # (source, target, strength)
    weak: tuple[tuple[int, tuple[int, ...], float], ...]  # (dim, class_set, strength)
    sizes: dict[str, int]
    seed: int

    def validate(self) -> "SynthConfig":
        if self.n_classes < 2:
            raise ValidationError("ConfigInvalid", "need >= 2 classes")
        if self.core_dims < 1 or self.nuisance_dims < 0:
            raise ValidationError("ConfigInvalid", "bad feature dims")
        if not 0.0 <= self.corruption_rate < 1.0:
            raise ValidationError("ConfigInvalid", "corruption_rate outside [0, 1)")
        for source, target, strength in self.class_specific:
            ok = (
                0 <= source < self.n_classes
                and 0 <= target < self.n_classes
                and source != target
                and 0.0 <= strength <= 1.0
            )
            if not ok:
                raise ValidationError(
                    "ConfigInvalid", f"bad class_specific entry ({source}, {target}, {strength})"
                )
        for dim, class_set, strength in self.weak:
            ok = (
                0 <= dim < self.nuisance_dims
                and class_set
                and all(0 <= c < self.n_classes for c in class_set)
                and 0.0 <= strength <= 1.0
            )
            if not ok:
                raise ValidationError("ConfigInvalid", f"bad weak entry ({dim}, {class_set})")
        if not self.sizes or any(n < 1 for n in self.sizes.values()):
            raise ValidationError("ConfigInvalid", "every dataset size must be >= 1")
        return self

    def echo(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "core_dims": self.core_dims,
            "nuisance_dims": self.nuisance_dims,
            "separation": self.separation,
            "corruption_rate": self.corruption_rate,
            "class_specific": [list(e) for e in self.class_specific],
            "weak": [[d, list(cs), s] for d, cs, s in self.weak],
            "sizes": dict(self.sizes),
            "seed": self.seed,
        }


@dataclass
class SynthDataset:
    name: str
    features: np.ndarray  # (n, d) float32
    labels: np.ndarray  # (n,) int64
    latent: np.ndarray  # true class before corruption
    tags: list[tuple[str, ...]]
    origin_indices: np.ndarray | None = None  # set by resample_by_bins

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    def tagged(self, *wanted: str) -> np.ndarray:
        """Boolean mask of samples carrying any tag with one of the prefixes."""
        out = np.zeros(self.n_samples, dtype=bool)
        for i, tags in enumerate(self.tags):
            out[i] = any(t.startswith(w) for t in tags for w in wanted)
        return out


def _unit(vec: np.ndarray) -> np.ndarray:
    return vec / np.linalg.norm(vec)


@dataclass
class _World:
    class_means: np.ndarray  # (C, core_dims)
    signatures: np.ndarray  # (C, nuisance_dims), unit norm
    weak_signs: tuple[float, ...]


def _make_world(config: SynthConfig) -> _World:
    stream = Xoshiro256pp(derive_seed(config.seed, "world"))
    means = np.stack(
        [config.separation * _unit(stream.normals(config.core_dims))
         for _ in range(config.n_classes)]
    )
    if config.nuisance_dims > 0:
        signatures = np.stack(
            [_unit(stream.normals(config.nuisance_dims)) for _ in range(config.n_classes)]
        )
    else:
        signatures = np.zeros((config.n_classes, 0))
    signs = tuple(1.0 if stream.next_double() < 0.5 else -1.0 for _ in config.weak)
    return _World(class_means=means, signatures=signatures, weak_signs=signs)


def _gen_dataset(config: SynthConfig, world: _World, name: str, n: int) -> SynthDataset:
    stream = Xoshiro256pp(derive_seed(config.seed, f"dataset:{name}"))
    c, d, nn = config.n_classes, config.core_dims, config.nuisance_dims
    features = np.empty((n, d + nn), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    latent = np.empty(n, dtype=np.int64)
    tags: list[tuple[str, ...]] = []
    for i in range(n):
        z = stream.next_below(c)
        core = world.class_means[z] + stream.normals(d)
        row_tags: list[str] = []

        source_class = z
        for source, target, strength in config.class_specific:
            if source != z:
                continue
            u = stream.next_double()
            if source_class == z and u < strength:
                source_class = target
                row_tags.append(tag_class_specific(source, target))
        nuisance = world.signatures[source_class] + stream.normals(nn)

        for w_idx, (dim, class_set, strength) in enumerate(config.weak):
            if z not in class_set:
                continue
            if stream.next_double() < strength:
                nuisance[dim] = world.weak_signs[w_idx] + stream.next_normal()
                row_tags.append(tag_weak(dim))

        label = z
        if config.corruption_rate > 0.0 and stream.next_double() < config.corruption_rate:
            j = stream.next_below(c - 1)
            label = j if j < z else j + 1
            row_tags.append(TAG_CORRUPTED)

        dists = np.linalg.norm(world.class_means - core, axis=1)
        if int(np.argmin(dists)) != z:
            row_tags.append(TAG_AMBIGUOUS)
        if not any(t == TAG_CORRUPTED or t.startswith(("class_specific_sp", "weak_sp"))
                   for t in row_tags):
            row_tags.insert(0, TAG_CLEAN)

        features[i, :d] = core
        features[i, d:] = nuisance
        labels[i] = label
        latent[i] = z
        tags.append(tuple(row_tags))
    return SynthDataset(
        name=name,
        features=features.astype(np.float32),
        labels=labels,
        latent=latent,
        tags=tags,
    )


def gen_mixture(config: SynthConfig) -> dict[str, SynthDataset]:
    """Generate every dataset named in config.sizes from one shared world."""
    config.validate()
    world = _make_world(config)
    return {name: _gen_dataset(config, world, name, n) for name, n in config.sizes.items()}


def resample_by_bins(
    src: SynthDataset,
    scores: np.ndarray,
    target_ratios: np.ndarray,
    n_out: int,
    seed: int,
    n_classes: int,
    name: str | None = None,
) -> SynthDataset:
    """Bootstrap a shifted dataset: draw per confusion bin to hit target ratios.

    Sampling is with replacement inside each source bin; per-bin counts come
    from largest-remainder rounding of target_ratios * n_out.
    """
    ratios = np.asarray(target_ratios, dtype=np.float64)
    if abs(float(ratios.sum()) - 1.0) > 1e-9 or np.any(ratios < 0):
        raise ValidationError("ConfigInvalid", "target ratios must be >= 0 and sum to 1")
    if n_out < 1:
        raise ValidationError("ConfigInvalid", "n_out must be >= 1")
    part = bin_scores(np.asarray(scores, dtype=np.float64), ratios.size, n_classes)
    if part.n_samples != src.n_samples:
        raise ValidationError(
            "LengthMismatch", f"{part.n_samples} scores for {src.n_samples} samples"
        )

    raw = ratios * n_out
    counts = np.floor(raw).astype(np.int64)
    remainder = n_out - int(counts.sum())
    # distribute leftovers by largest fractional part, ties to the lower bin
    order = sorted(range(ratios.size), key=lambda k: (-(raw[k] - counts[k]), k))
    for k in order[:remainder]:
        counts[k] += 1

    stream = Xoshiro256pp(derive_seed(seed, f"resample:{src.name}"))
    chosen: list[int] = []
    for k in range(ratios.size):
        if counts[k] == 0:
            continue
        members = np.flatnonzero(part.assignment == k)
        if members.size == 0:
            raise ValidationError(
                "EmptySourceBin", f"target bin {k} has weight but no source samples"
            )
        for _ in range(int(counts[k])):
            chosen.append(int(members[stream.next_below(members.size)]))
    idx = np.asarray(chosen, dtype=np.int64)
    return SynthDataset(
        name=name or f"{src.name}_resampled",
        features=src.features[idx].copy(),
        labels=src.labels[idx].copy(),
        latent=src.latent[idx].copy(),
        tags=[src.tags[i] for i in idx],
        origin_indices=idx,
    )


def gen_colored_two_class(
    corruption: float = 0.10,
    color_corr: float = 0.80,
    seed: int = 0,
    sizes: dict[str, int] | None = None,
    core_dims: int = 6,
    separation: float = 1.0,
    color_scale: float = 3.0,
) -> dict[str, SynthDataset]:
    """Two classes plus a 2-dim color block; color 0 is "red", color 1 "green".

    Training data colors each class with its own color with probability
    `color_corr`; the two shift datasets force one color everywhere. A sample
    wearing the other class's color carries that class's spurious correlate
    and is tagged accordingly. Label corruption applies to the training split
    only.
    """
    if not (0.0 <= corruption < 1.0 and 0.0 <= color_corr <= 1.0):
        raise ValidationError("ConfigInvalid", "corruption/color_corr outside [0, 1]")
    sizes = sizes or {"train": 2000, "ood_all_green": 2000, "ood_all_red": 2000}
    world_stream = Xoshiro256pp(derive_seed(seed, "world"))
    # antipodal cores: class distance is 2*separation for every seed
    axis = separation * _unit(world_stream.normals(core_dims))
    means = np.stack([axis, -axis])
    colors = np.array([[color_scale, 0.0], [0.0, color_scale]])

    out: dict[str, SynthDataset] = {}
    for name, n in sizes.items():
        forced = {"ood_all_green": 1, "ood_all_red": 0}.get(name)
        stream = Xoshiro256pp(derive_seed(seed, f"dataset:{name}"))
        features = np.empty((n, core_dims + 2), dtype=np.float64)
        labels = np.empty(n, dtype=np.int64)
        latent = np.empty(n, dtype=np.int64)
        tags: list[tuple[str, ...]] = []
        for i in range(n):
            z = stream.next_below(2)
            core = means[z] + stream.normals(core_dims)
            if forced is None:
                color_class = z if stream.next_double() < color_corr else 1 - z
            else:
                color_class = forced
            block = colors[color_class] + stream.normals(2)
            label = z
            row_tags: list[str] = []
            if color_class != z:
                row_tags.append(tag_class_specific(z, 1 - z))
            if forced is None and corruption > 0.0 and stream.next_double() < corruption:
                label = 1 - z
                row_tags.append(TAG_CORRUPTED)
            if not row_tags:
                row_tags.append(TAG_CLEAN)
            features[i, :core_dims] = core
            features[i, core_dims:] = block
            labels[i] = label
            latent[i] = z
            tags.append(tuple(row_tags))
        out[name] = SynthDataset(
            name=name,
            features=features.astype(np.float32),
            labels=labels,
            latent=latent,
            tags=tags,
        )
    return out


def dataset_role(name: str) -> str:
    if name == "train":
        return "train"
    if name == "id":
        return "id"
    return "ood"


def write_dataset_bundle(
    ds: SynthDataset, out_dir: str, role: str, echo: dict, provenance: str | None = None
) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_features(ds.name, ds.features, os.path.join(out_dir, "features.cft"))
    write_labels(ds.labels, os.path.join(out_dir, "labels.csv"))
    write_tags(ds.tags, os.path.join(out_dir, "tags.csv"), provenance)
    doc = {"name": ds.name, "role": role, "n_samples": int(ds.n_samples), "generator": echo}
    head = f"# {provenance}\n" if provenance else ""
    atomic_write_text(
        os.path.join(out_dir, "config.yaml"),
        head + yaml.safe_dump(doc, sort_keys=False),
    )


def read_dataset_bundle(bundle_dir: str):
    """Returns (name, role, features, labels, tags)."""
    with open(os.path.join(bundle_dir, "config.yaml"), "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    name, feats = read_features(os.path.join(bundle_dir, "features.cft"))
    if name != doc.get("name"):
        raise ValidationError("SchemaError", f"{bundle_dir}: bundle name mismatch")
    role = doc.get("role")
    if role not in ("train", "id", "ood"):
        raise ValidationError("SchemaError", f"{bundle_dir}: bad role {role!r}")
    n = feats.shape[0]
    n_classes = int(doc.get("generator", {}).get("n_classes", 2))
    labels = read_labels(os.path.join(bundle_dir, "labels.csv"), n, n_classes)
    tags_path = os.path.join(bundle_dir, "tags.csv")
    tags = read_tags(tags_path, n) if os.path.isfile(tags_path) else None
    return name, role, feats, labels, tags
