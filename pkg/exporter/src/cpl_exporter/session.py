"""CPL capture sessions and array-file conversion.

CPL layout: magic "CPL1", u32 version (1), u32 n_epochs, u32 n_samples,
u32 n_classes, u16 model-id length, UTF-8 model id, then f32-LE
probabilities, epoch-major, sample next, class fastest.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"CPL1"
VERSION = 1
ROW_SUM_TOL = 1e-3
_EPOCHS_OFFSET = 8  # magic + version


class ExporterError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class CaptureSession:
    """Append-only writer for one model's probability log."""

    def __init__(self, path: str, n_samples: int, n_classes: int, model_id: str, fh):
        self.path = path
        self.n_samples = n_samples
        self.n_classes = n_classes
        self.model_id = model_id
        self.epochs_written = 0
        self._fh = fh

    @property
    def closed(self) -> bool:
        return self._fh is None

    def __enter__(self) -> "CaptureSession":
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is None:
            finalize(self)
        elif self._fh is not None:
            self._fh.close()
            self._fh = None
        return False


def begin_session(path: str, n_samples: int, n_classes: int, model_id: str) -> CaptureSession:
    """Write the header placeholder (0 epochs) and open for appends."""
    if n_samples < 1 or n_classes < 2:
        raise ExporterError(
            "BadArrayShape", f"need n_samples >= 1 and n_classes >= 2, got ({n_samples}, {n_classes})"
        )
    if os.path.exists(path):
        raise ExporterError("IoFailure", f"{path} exists; captures never append to finalized files")
    ident = model_id.encode("utf-8")
    header = MAGIC + struct.pack("<IIIIH", VERSION, 0, n_samples, n_classes, len(ident)) + ident
    try:
        fh = open(path, "xb")
        fh.write(header)
        fh.flush()
    except OSError as exc:
        raise ExporterError("IoFailure", f"cannot open {path}: {exc}") from exc
    return CaptureSession(path, n_samples, n_classes, model_id, fh)


def append_epoch(session: CaptureSession, probs) -> None:
    """Validate and append one epoch of rows; nothing is renormalized.

    Validation runs on the f32 values that actually hit the disk, so the
    exporter's verdict always matches what a reader of the file will see.
    """
    if session.closed:
        raise ExporterError("IoFailure", f"{session.path} is already finalized")
    arr = np.ascontiguousarray(probs, dtype="<f4")
    if arr.shape != (session.n_samples, session.n_classes):
        raise ExporterError(
            "ShapeMismatch",
            f"expected ({session.n_samples}, {session.n_classes}), got {arr.shape}",
        )
    if np.any(arr < 0.0):
        raise ExporterError("NegativeProbability", "negative probability in epoch matrix")
    sums = arr.astype(np.float64).sum(axis=1)
    dev = np.abs(sums - 1.0)
    if dev.max() > ROW_SUM_TOL:
        row = int(dev.argmax())
        raise ExporterError(
            "RowSumOutOfTolerance",
            f"row {row} sums to {float(sums[row]):.9f} (deviation {float(dev.max()):.3e})",
        )
    try:
        session._fh.write(arr.tobytes())
        session._fh.flush()
    except OSError as exc:
        raise ExporterError("IoFailure", f"cannot append to {session.path}: {exc}") from exc
    session.epochs_written += 1


def finalize(session: CaptureSession) -> None:
    """Patch the header's epoch count and close; empty sessions refuse."""
    if session.closed:
        return
    if session.epochs_written == 0:
        session._fh.close()
        session._fh = None
        raise ExporterError("EmptySession", f"{session.path} captured no epochs")
    try:
        session._fh.seek(_EPOCHS_OFFSET)
        session._fh.write(struct.pack("<I", session.epochs_written))
        session._fh.close()
    except OSError as exc:
        raise ExporterError("IoFailure", f"cannot finalize {session.path}: {exc}") from exc
    session._fh = None


def convert(array_file: str, out_path: str, model_id: str) -> None:
    """Turn a saved (epochs, samples, classes) .npy array into a CPL file."""
    try:
        arr = np.load(array_file)
    except (OSError, ValueError) as exc:
        raise ExporterError("IoFailure", f"cannot load {array_file}: {exc}") from exc
    if arr.ndim != 3:
        raise ExporterError(
            "BadArrayShape", f"{array_file}: expected (epochs, samples, classes), got {arr.shape}"
        )
    t, n, c = arr.shape
    if t < 1:
        raise ExporterError("EmptySession", f"{array_file}: zero epochs")
    session = begin_session(out_path, n, c, model_id)
    try:
        for epoch in range(t):
            append_epoch(session, arr[epoch])
    except ExporterError:
        session._fh.close()
        session._fh = None
        os.unlink(out_path)
        raise
    finalize(session)
