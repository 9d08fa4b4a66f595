"""Probability-log and dataset file formats.

CPL holds one run's per-epoch class probabilities as little-endian f32,
epoch-major. CFT holds dataset feature matrices in the same envelope.
Labels and tags are headerless/one-header CSVs; metrics are CSV rows of
(epoch, dataset, loss, accuracy). Readers validate eagerly so everything
downstream can assume well-formed tensors.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ValidationError

CPL_MAGIC = b"CPL1"
CFT_MAGIC = b"CFT1"
FORMAT_VERSION = 1

# A stored row may deviate from sum 1 by up to ROW_SUM_TOL and still load
# (after renormalization). Rows closer than the f32 rounding floor are kept
# bit-identical, which is what makes write->read a true round trip.
ROW_SUM_TOL = 1e-3


def _renorm_skip_tol(n_classes: int) -> float:
    return max(1e-6, n_classes * 2.0 ** -24)


def atomic_write_bytes(path: str, data: bytes) -> None:
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            if os.path.exists(tmp):
                os.unlink(tmp)
        except OSError:
            pass
        raise FormatError("IoFailure", f"cannot write {path}: {exc}") from exc


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _normalize_rows(raw: np.ndarray, n_classes: int, where: str) -> np.ndarray:
    """Validate and conditionally renormalize an (..., C) f32 probability block."""
    if np.any(raw < 0.0):
        idx = np.argwhere(raw < 0.0)[0]
        raise ValidationError(
            "NegativeProbability", f"{where}: negative probability at {tuple(idx)}"
        )
    sums = raw.astype(np.float64).sum(axis=-1)
    dev = np.abs(sums - 1.0)
    worst = float(dev.max())
    if worst > ROW_SUM_TOL:
        idx = np.unravel_index(int(dev.argmax()), dev.shape)
        raise ValidationError(
            "RowSumOutOfTolerance",
            f"{where}: row {idx} sums to {float(sums[idx]):.9f} "
            f"(deviation {worst:.3e} > {ROW_SUM_TOL})",
        )
    needs = (dev > _renorm_skip_tol(n_classes)) | (raw.max(axis=-1) > 1.0)
    if not bool(needs.any()):
        return np.ascontiguousarray(raw)
    scaled = raw.astype(np.float64) / sums[..., None]
    scaled32 = np.minimum(scaled.astype(np.float32), np.float32(1.0))
    out = np.where(needs[..., None], scaled32, raw)
    return np.ascontiguousarray(out)


@dataclass(frozen=True)
class ProbLog:
    """One run's probabilities, shape (epochs, samples, classes), f32."""

    model_id: str
    probs: np.ndarray
    _digest: str = field(default="", repr=False, compare=False)

    @property
    def n_epochs(self) -> int:
        return self.probs.shape[0]

    @property
    def n_samples(self) -> int:
        return self.probs.shape[1]

    @property
    def n_classes(self) -> int:
        return self.probs.shape[2]

    @property
    def digest(self) -> str:
        if not self._digest:
            h = hashlib.sha256()
            h.update(struct.pack("<III", *self.probs.shape))
            h.update(self.probs.tobytes())
            object.__setattr__(self, "_digest", h.hexdigest())
        return self._digest

    @classmethod
    def from_probs(cls, model_id: str, probs: np.ndarray) -> "ProbLog":
        arr = np.asarray(probs, dtype=np.float32)
        if arr.ndim != 3:
            raise ValidationError(
                "DimensionZero", f"probability tensor must be 3-d, got shape {arr.shape}"
            )
        t, n, c = arr.shape
        _check_dims(t, n, c, f"log '{model_id}'")
        arr = _normalize_rows(arr, c, f"log '{model_id}'")
        return cls(model_id=model_id, probs=arr)


def _check_dims(n_epochs: int, n_samples: int, n_classes: int, where: str) -> None:
    if n_epochs < 1 or n_samples < 1 or n_classes < 2:
        raise ValidationError(
            "DimensionZero",
            f"{where}: need epochs >= 1, samples >= 1, classes >= 2; "
            f"got ({n_epochs}, {n_samples}, {n_classes})",
        )


def _read_tensor_file(path: str, magic: bytes):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError("MissingFile", f"cannot read {path}: {exc}") from exc
    if len(data) < 4 or data[:4] != magic:
        raise FormatError("BadMagic", f"{path}: expected magic {magic!r}")
    if len(data) < 4 + 4:
        raise FormatError("TruncatedFile", f"{path}: header cut short")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError("BadMagic", f"{path}: unsupported version {version}")
    return data


def read_cpl_header(path: str):
    """(model_id, n_epochs, n_samples, n_classes, payload_offset, data)."""
    data = _read_tensor_file(path, CPL_MAGIC)
    if len(data) < 22:
        raise FormatError("TruncatedFile", f"{path}: header cut short")
    n_epochs, n_samples, n_classes, id_len = struct.unpack_from("<IIIH", data, 8)
    off = 22
    if len(data) < off + id_len:
        raise FormatError("TruncatedFile", f"{path}: model id cut short")
    model_id = data[off : off + id_len].decode("utf-8")
    _check_dims(n_epochs, n_samples, n_classes, path)
    return model_id, n_epochs, n_samples, n_classes, off + id_len, data


def read_cpl(path: str) -> ProbLog:
    model_id, t, n, c, off, data = read_cpl_header(path)
    expected = off + 4 * t * n * c
    if len(data) != expected:
        raise FormatError(
            "TruncatedFile", f"{path}: expected {expected} bytes, found {len(data)}"
        )
    raw = np.frombuffer(data, dtype="<f4", offset=off).reshape(t, n, c)
    probs = _normalize_rows(raw, c, path)
    return ProbLog(model_id=model_id, probs=probs)


def write_cpl(log: ProbLog, path: str) -> None:
    t, n, c = log.probs.shape
    _check_dims(t, n, c, path)
    # pre-normalized rows only; anything further off belongs to from_probs
    sums = log.probs.astype(np.float64).sum(axis=-1)
    if np.abs(sums - 1.0).max() > _renorm_skip_tol(c):
        raise ValidationError(
            "RowSumOutOfTolerance",
            f"refusing to write unnormalized log '{log.model_id}'",
        )
    ident = log.model_id.encode("utf-8")
    header = CPL_MAGIC + struct.pack(
        "<IIIIH", FORMAT_VERSION, t, n, c, len(ident)
    ) + ident
    payload = np.ascontiguousarray(log.probs, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + payload)


def read_features(path: str):
    """Returns (name, features) with features shaped (n_samples, n_dims) f32."""
    data = _read_tensor_file(path, CFT_MAGIC)
    if len(data) < 18:
        raise FormatError("TruncatedFile", f"{path}: header cut short")
    n_samples, n_dims, name_len = struct.unpack_from("<IIH", data, 8)
    off = 18
    if len(data) < off + name_len:
        raise FormatError("TruncatedFile", f"{path}: name cut short")
    name = data[off : off + name_len].decode("utf-8")
    off += name_len
    if n_samples < 1 or n_dims < 1:
        raise ValidationError("DimensionZero", f"{path}: empty feature tensor")
    expected = off + 4 * n_samples * n_dims
    if len(data) != expected:
        raise FormatError(
            "TruncatedFile", f"{path}: expected {expected} bytes, found {len(data)}"
        )
    feats = np.frombuffer(data, dtype="<f4", offset=off).reshape(n_samples, n_dims)
    return name, np.ascontiguousarray(feats)


def write_features(name: str, features: np.ndarray, path: str) -> None:
    arr = np.ascontiguousarray(features, dtype="<f4")
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError("DimensionZero", f"feature tensor must be (n, d), got {arr.shape}")
    ident = name.encode("utf-8")
    header = CFT_MAGIC + struct.pack(
        "<IIIH", FORMAT_VERSION, arr.shape[0], arr.shape[1], len(ident)
    ) + ident
    atomic_write_bytes(path, header + arr.tobytes())


def _read_text(path: str) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise FormatError("MissingFile", f"cannot read {path}: {exc}") from exc


def _data_lines(lines: list[str]) -> list[str]:
    return [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]


def read_labels(path: str, expected_n: int, n_classes: int) -> np.ndarray:
    lines = _data_lines(_read_text(path))
    if len(lines) != expected_n:
        raise ValidationError(
            "LengthMismatch", f"{path}: {len(lines)} labels, expected {expected_n}"
        )
    out = np.empty(expected_n, dtype=np.int64)
    for i, ln in enumerate(lines):
        try:
            v = int(ln.strip())
        except ValueError as exc:
            raise ValidationError("ClassOutOfRange", f"{path}:{i + 1}: not an integer") from exc
        if not 0 <= v < n_classes:
            raise ValidationError(
                "ClassOutOfRange", f"{path}:{i + 1}: label {v} outside [0, {n_classes})"
            )
        out[i] = v
    return out


def write_labels(labels: np.ndarray, path: str) -> None:
    atomic_write_text(path, "".join(f"{int(v)}\n" for v in labels))


def read_tags(path: str, expected_n: int) -> list[tuple[str, ...]]:
    lines = _data_lines(_read_text(path))
    if not lines or lines[0].split(",")[0] != "sample_index":
        raise ValidationError("SchemaError", f"{path}: missing tags header")
    rows = lines[1:]
    if len(rows) != expected_n:
        raise ValidationError(
            "LengthMismatch", f"{path}: {len(rows)} tag rows, expected {expected_n}"
        )
    out: list[tuple[str, ...]] = []
    for i, ln in enumerate(rows):
        idx_s, _, tag_s = ln.partition(",")
        if int(idx_s) != i:
            raise ValidationError("SchemaError", f"{path}: tag rows out of order at {i}")
        out.append(tuple(t for t in tag_s.split(";") if t))
    return out


def write_tags(tags: list[tuple[str, ...]], path: str, provenance: str | None = None) -> None:
    head = f"# {provenance}\n" if provenance else ""
    body = "".join(f"{i},{';'.join(t)}\n" for i, t in enumerate(tags))
    atomic_write_text(path, f"{head}sample_index,tags\n{body}")


@dataclass(frozen=True)
class MetricsSeries:
    """Per-epoch (dataset, loss, accuracy) rows for one run."""

    rows: tuple[tuple[int, str, float, float], ...]

    def datasets(self) -> list[str]:
        seen: dict[str, None] = {}
        for _, name, _, _ in self.rows:
            seen.setdefault(name)
        return list(seen)

    def series(self, dataset: str):
        """(epochs, losses, accuracies) arrays for one dataset."""
        picked = [(e, l, a) for e, name, l, a in self.rows if name == dataset]
        if not picked:
            raise ValidationError("SchemaError", f"no metrics rows for dataset '{dataset}'")
        e, l, a = zip(*picked)
        return (
            np.asarray(e, dtype=np.int64),
            np.asarray(l, dtype=np.float64),
            np.asarray(a, dtype=np.float64),
        )

    def validate(self) -> "MetricsSeries":
        last: dict[str, int] = {}
        for epoch, name, loss, acc in self.rows:
            if name in last and epoch <= last[name]:
                raise ValidationError(
                    "SchemaError", f"metrics epochs not increasing for '{name}'"
                )
            last[name] = epoch
            if loss < 0 or not np.isfinite(loss):
                raise ValidationError("SchemaError", f"bad loss {loss} for '{name}'")
            if not 0.0 <= acc <= 1.0:
                raise ValidationError("SchemaError", f"bad accuracy {acc} for '{name}'")
        return self


def read_metrics(path: str) -> MetricsSeries:
    lines = _data_lines(_read_text(path))
    if not lines or lines[0] != "epoch,dataset,loss,accuracy":
        raise ValidationError("SchemaError", f"{path}: expected metrics header")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 4:
            raise ValidationError("SchemaError", f"{path}:{i}: expected 4 fields")
        try:
            rows.append((int(parts[0]), parts[1], float(parts[2]), float(parts[3])))
        except ValueError as exc:
            raise ValidationError("SchemaError", f"{path}:{i}: bad field") from exc
    return MetricsSeries(rows=tuple(rows)).validate()


def write_metrics(metrics: MetricsSeries, path: str, provenance: str | None = None) -> None:
    head = f"# {provenance}\n" if provenance else ""
    body = "".join(
        f"{epoch},{name},{loss!r},{acc!r}\n" for epoch, name, loss, acc in metrics.rows
    )
    atomic_write_text(path, f"{head}epoch,dataset,loss,accuracy\n{body}")
