"""Readers for dense CSV matrices and CIFAR-10 binary batches."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import FormatError

CIFAR_RECORD = 3073  # 1 label byte + 32*32*3 pixel bytes
CIFAR_PIXELS = 3072
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))


def read_csv_matrix(path, skip_header: bool | None = None) -> np.ndarray:
    """Dense numeric CSV, one row per sample.

    A first row that does not parse as numbers is taken as a header unless
    ``skip_header`` says otherwise. Malformed rows raise :class:`FormatError`
    naming the line.
    """
    path = Path(path)
    rows: list[list[float]] = []
    width = None
    with path.open(newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if rec[0].lstrip().startswith("#"):
                continue
            try:
                vals = [float(c) for c in rec]
            except ValueError:
                if lineno == 1 and skip_header is not False:
                    continue
                raise FormatError(f"{path}:{lineno}: non-numeric field in {rec!r}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise FormatError(f"{path}:{lineno}: expected {width} fields, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no numeric rows")
    return np.array(rows, dtype=np.float64)


def write_csv_matrix(path, M, header: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for row in np.atleast_2d(M):
            w.writerow([repr(float(v)) for v in row])


def read_cifar10_batch(path) -> tuple[np.ndarray, np.ndarray]:
    """Pixels (N, 3072) uint8 and labels (N,) from one binary batch file."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % CIFAR_RECORD:
        full = raw.size // CIFAR_RECORD
        raise FormatError(
            f"{path}: {raw.size} bytes is not a multiple of the {CIFAR_RECORD}-byte record; "
            f"last complete record ends at offset {full * CIFAR_RECORD}"
        )
    rec = raw.reshape(-1, CIFAR_RECORD)
    labels = rec[:, 0].copy()
    if labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise FormatError(f"{path}: label {labels[bad]} > 9 at offset {bad * CIFAR_RECORD}")
    return rec[:, 1:].copy(), labels


def load_cifar10(source) -> tuple[np.ndarray, np.ndarray]:
    """Load a directory holding data_batch_1..5.bin, or a single batch file."""
    source = Path(source)
    if source.is_dir():
        files = [source / f for f in CIFAR_TRAIN_FILES if (source / f).exists()]
        if not files:
            raise FormatError(f"{source}: no data_batch_*.bin files")
    elif source.exists():
        files = [source]
    else:
        raise FileNotFoundError(source)
    parts = [read_cifar10_batch(f) for f in files]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def write_cifar10_batch(path, pixels: np.ndarray, labels: np.ndarray) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8).reshape(-1, CIFAR_PIXELS)
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    np.concatenate([labels, pixels], axis=1).tofile(path)
