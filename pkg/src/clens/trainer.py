"""Small feedforward ensembles trained with SGD+momentum on cross-entropy.

Everything is plain numpy in f64 with hand-derived gradients and PRNG-driven
init/shuffles, so a (family, seed, config, dataset) tuple fully determines
every probability the run ever emits. After each epoch the full train and
eval sets are forwarded and appended to per-dataset CPL buffers, which is
what turns these toy runs into probability logs for the scoring pipeline.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .parallel import worker_count
from .problog import MetricsSeries, ProbLog
from .rng import Xoshiro256pp, derive_seed

_TINY = 1e-300


@dataclass(frozen=True)
class ToyArch:
    input_dim: int
    n_classes: int
    hidden_widths: tuple[int, ...] = ()  # empty -> multinomial logistic regression

    def __post_init__(self):
        if self.input_dim < 1 or self.n_classes < 2 or any(w < 1 for w in self.hidden_widths):
            raise ValidationError("ConfigInvalid", f"bad architecture {self}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_widths, self.n_classes]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def param_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_dims)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    include_epoch_zero: bool = False

    def __post_init__(self):
        # lr may be 0: a frozen model is a legitimate degenerate run
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate < 0:
            raise ValidationError("ConfigInvalid", f"bad train config {self}")


class ToyModel:
    def __init__(self, arch: ToyArch, weights, biases):
        self.arch = arch
        self.weights = weights
        self.biases = biases


def init_model(arch: ToyArch, seed: int) -> ToyModel:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    stream = Xoshiro256pp(seed)
    weights, biases = [], []
    for fan_in, fan_out in arch.layer_dims:
        bound = 1.0 / np.sqrt(fan_in)
        flat = stream.doubles(fan_in * fan_out)
        weights.append((2.0 * bound * flat - bound).reshape(fan_in, fan_out))
        biases.append(np.zeros(fan_out))
    return ToyModel(arch, weights, biases)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: ToyModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch (or a single feature vector)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != model.arch.input_dim:
        raise ValidationError(
            "ShapeMismatch", f"{h.shape[1]} features, model expects {model.arch.input_dim}"
        )
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    probs = _softmax(h @ model.weights[-1] + model.biases[-1])
    return probs[0] if single else probs


def cross_entropy_loss(model: ToyModel, x: np.ndarray, y: np.ndarray) -> float:
    probs = forward(model, x)
    picked = probs[np.arange(len(y)), y]
    return float(-np.log(np.maximum(picked, _TINY)).mean())


def _loss_and_grads(model: ToyModel, x: np.ndarray, y: np.ndarray):
    acts = [x]
    h = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    probs = _softmax(h @ model.weights[-1] + model.biases[-1])
    n = x.shape[0]
    picked = probs[np.arange(n), y]
    loss = float(-np.log(np.maximum(picked, _TINY)).mean())

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (acts[layer] > 0.0)
    return loss, grads_w, grads_b, probs


def train_epoch(
    model: ToyModel,
    velocity,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    shuffle_stream: Xoshiro256pp,
):
    """One seeded-shuffle pass of momentum SGD; returns (loss, accuracy)."""
    if x.shape[0] == 0:
        raise ValidationError("ShapeMismatch", "empty training data")
    idx = np.arange(x.shape[0])
    shuffle_stream.shuffle(idx)
    vel_w, vel_b = velocity
    total_loss = 0.0
    total_hits = 0
    for lo in range(0, x.shape[0], config.batch_size):
        batch = idx[lo : lo + config.batch_size]
        loss, grads_w, grads_b, probs = _loss_and_grads(model, x[batch], y[batch])
        if not np.isfinite(loss):
            raise ValidationError("NonFiniteLoss", f"training diverged (loss={loss})")
        total_loss += loss * batch.size
        total_hits += int((np.argmax(probs, axis=1) == y[batch]).sum())
        for layer in range(len(model.weights)):
            vel_w[layer] = config.momentum * vel_w[layer] + grads_w[layer]
            vel_b[layer] = config.momentum * vel_b[layer] + grads_b[layer]
            model.weights[layer] -= config.learning_rate * vel_w[layer]
            model.biases[layer] -= config.learning_rate * vel_b[layer]
    n = x.shape[0]
    return total_loss / n, total_hits / n


@dataclass
class RunResult:
    model_id: str
    family: str
    seed: int
    param_count: int
    logs: dict[str, ProbLog]
    metrics: MetricsSeries


def train_run(
    family: str,
    arch: ToyArch,
    seed: int,
    datasets: list[tuple[str, np.ndarray, np.ndarray | None]],
    config: TrainConfig,
    train_name: str = "train",
) -> RunResult:
    """Train one run and log probabilities for every dataset after each epoch."""
    names = [name for name, _, _ in datasets]
    if train_name not in names:
        raise ValidationError("ConfigInvalid", f"no '{train_name}' dataset to train on")
    data = {name: (np.asarray(x, dtype=np.float64), y) for name, x, y in datasets}
    x_train, y_train = data[train_name]
    if y_train is None:
        raise ValidationError("ConfigInvalid", "training data has no labels")

    model_id = f"{family}-s{seed}"
    model = init_model(arch, derive_seed(config.seed, f"init:{model_id}"))
    shuffle_stream = Xoshiro256pp(derive_seed(config.seed, f"shuffle:{model_id}"))
    velocity = (
        [np.zeros_like(w) for w in model.weights],
        [np.zeros_like(b) for b in model.biases],
    )

    buffers: dict[str, list[np.ndarray]] = {name: [] for name in names}
    metric_rows = []

    def snapshot(epoch: int) -> None:
        for name in names:
            x_eval, y_eval = data[name]
            probs = forward(model, x_eval)
            buffers[name].append(probs.astype(np.float32))
            if y_eval is not None:
                picked = probs[np.arange(len(y_eval)), y_eval]
                loss = float(-np.log(np.maximum(picked, _TINY)).mean())
                acc = float((np.argmax(probs, axis=1) == y_eval).mean())
                metric_rows.append((epoch, name, loss, acc))

    if config.include_epoch_zero:
        snapshot(0)
    for epoch in range(1, config.epochs + 1):
        train_epoch(model, velocity, x_train, y_train, config, shuffle_stream)
        snapshot(epoch)

    logs = {
        name: ProbLog.from_probs(model_id, np.stack(rows)) for name, rows in buffers.items()
    }
    return RunResult(
        model_id=model_id,
        family=family,
        seed=seed,
        param_count=arch.param_count,
        logs=logs,
        metrics=MetricsSeries(rows=tuple(metric_rows)).validate(),
    )


def train_ensemble(
    datasets: list[tuple[str, np.ndarray, np.ndarray | None]],
    arch_specs: list[tuple[str, ToyArch]],
    seeds: list[int],
    config: TrainConfig,
    train_name: str = "train",
) -> list[RunResult]:
    """Train family x seed runs (in parallel; each run is sequential)."""
    jobs = [(family, arch, seed) for family, arch in arch_specs for seed in seeds]

    def one(job):
        family, arch, seed = job
        return train_run(family, arch, seed, datasets, config, train_name)

    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        results = [one(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, jobs))
    return sorted(results, key=lambda r: r.model_id)
