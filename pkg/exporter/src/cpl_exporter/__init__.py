"""Capture per-epoch class probabilities from a host training loop.

A CaptureSession streams one model's softmax outputs into a CPL file:
open it before training, call append_epoch after every epoch, finalize on
close. The file header carries a zero epoch count until finalize patches
it, so a crashed or unfinished capture is rejected by downstream readers
instead of silently truncating.

This package only produces files; analysis lives elsewhere. Validation is
strict (shapes, row sums) but nothing is renormalized here: normalization
is the reader's documented job, and double-normalizing would make the
written bytes depend on who wrote them.
"""

from .session import (
    CaptureSession,
    ExporterError,
    append_epoch,
    begin_session,
    convert,
    finalize,
)
from .sidecar import manifest_fragment, write_labels_csv, write_metrics_csv

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "CaptureSession",
    "ExporterError",
    "begin_session",
    "append_epoch",
    "finalize",
    "convert",
    "write_labels_csv",
    "write_metrics_csv",
    "manifest_fragment",
]
