"""Dense single-precision feature matrices and the Combination transform.

Feature matrices are plain 2-D ``float32`` numpy arrays (rows = vertices or
edges); the helpers here validate, generate, and serialize them.
"""

from __future__ import annotations

import os
import struct

import numpy as np

FEATURE_DTYPE = np.float32
_HEADER = struct.Struct("<QQ")


class ShapeError(ValueError):
    pass


def as_features(x, rows: int | None = None, name: str = "features") -> np.ndarray:
    """Return ``x`` as a C-contiguous float32 matrix, checking shape and finiteness."""
    a = np.ascontiguousarray(x, dtype=FEATURE_DTYPE)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if rows is not None and a.shape[0] != rows:
        raise ShapeError(f"{name} has {a.shape[0]} rows, expected {rows}")
    if not np.isfinite(a).all():
        raise ShapeError(f"{name} contains non-finite entries")
    return a


def matmul(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Single-precision dense product ``x @ w`` (the Combination transform)."""
    x = as_features(x, name="x")
    w = as_features(w, name="weights")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"cannot multiply {x.shape} by {w.shape}: inner dimensions differ")
    return np.matmul(x, w)


def random_features(rows: int, cols: int, seed: int) -> np.ndarray:
    """Uniform [-1, 1) float32 matrix, a pure function of ``seed``."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    return rng.uniform(-1.0, 1.0, size=(rows, cols)).astype(FEATURE_DTYPE)


def identity_weights(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=FEATURE_DTYPE)


# ---------------------------------------------------------------------------
# File formats: binary (u64 rows, u64 cols, little-endian f32 payload) or text
# ---------------------------------------------------------------------------


def write_binary(x: np.ndarray, path: str | os.PathLike) -> None:
    x = as_features(x)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*x.shape))
        fh.write(x.astype("<f4").tobytes())


def write_text(x: np.ndarray, path: str | os.PathLike) -> None:
    x = as_features(x)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for row in x.astype(np.float64):
            fh.write(" ".join(repr(v) for v in row.tolist()) + "\n")


def _looks_binary(path) -> bool:
    size = os.path.getsize(path)
    if size < _HEADER.size:
        return False
    with open(path, "rb") as fh:
        rows, cols = _HEADER.unpack(fh.read(_HEADER.size))
    return size == _HEADER.size + 4 * rows * cols


def read_features(path: str | os.PathLike) -> np.ndarray:
    """Read either format; binary is recognized by a header consistent with the file size."""
    if _looks_binary(path):
        with open(path, "rb") as fh:
            rows, cols = _HEADER.unpack(fh.read(_HEADER.size))
            data = np.frombuffer(fh.read(), dtype="<f4")
        return as_features(data.reshape(rows, cols))
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(t) for t in line.split()])
            except ValueError:
                raise ShapeError(f"line {lineno}: non-numeric feature value") from None
            if len(rows[-1]) != len(rows[0]):
                raise ShapeError(f"line {lineno}: expected {len(rows[0])} values, got {len(rows[-1])}")
    if not rows:
        raise ShapeError(f"{path}: no feature rows")
    return as_features(np.asarray(rows, dtype=np.float64))
