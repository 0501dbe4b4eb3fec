"""Supervised spectral datasets: target encoding, centering, covariances and CSV I/O.

Matrices follow the column convention used by the solvers: variables along
rows, samples along columns (``inputs`` is ``n x N``, ``targets`` is ``m x N``).
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    InputError,
    InsufficientSamplesError,
    InvalidLabelError,
    InvariantViolationError,
)

__all__ = [
    "RawDataset",
    "CenteredDataset",
    "CovarianceSet",
    "encode_targets",
    "center",
    "covariances",
    "read_matrix",
    "write_matrix",
    "read_labels",
    "write_labels",
    "atomic_write_text",
]


def _frozen(a, ndim=2):
    a = np.array(a, dtype=np.float64, copy=True)
    if a.ndim != ndim:
        raise DimensionMismatchError(f"expected a {ndim}-D array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RawDataset:
    """Uncentered inputs (non-negative spectra) and targets.

    ``groups`` is optional metadata (song or image of origin) used by grouped
    cross-validation; it never enters the solvers.
    """

    inputs: np.ndarray
    targets: np.ndarray
    class_labels: Optional[np.ndarray] = None
    groups: Optional[np.ndarray] = None

    def __post_init__(self):
        x = _frozen(self.inputs)
        y = _frozen(self.targets)
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise InputError("inputs and targets must be finite")
        if np.any(x < 0):
            i, j = np.argwhere(x < 0)[0]
            raise InputError(f"inputs must be non-negative; found {x[i, j]!r} at ({i}, {j})")
        if x.shape[1] != y.shape[1]:
            raise DimensionMismatchError(
                f"inputs have {x.shape[1]} samples but targets have {y.shape[1]}"
            )
        if x.shape[1] < 2:
            raise InsufficientSamplesError("at least two samples are required")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)
        for name in ("class_labels", "groups"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.array(v, copy=True)
            if v.shape != (x.shape[1],):
                raise DimensionMismatchError(f"{name} must have one entry per sample")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def from_labels(cls, inputs, labels, n_classes=None, groups=None):
        labels = np.asarray(labels, dtype=int)
        if n_classes is None:
            n_classes = int(labels.max()) + 1 if labels.size else 0
        return cls(inputs, encode_targets(labels, n_classes), labels, groups)

    @property
    def n_features(self):
        return self.inputs.shape[0]

    @property
    def n_targets(self):
        return self.targets.shape[0]

    @property
    def n_samples(self):
        return self.inputs.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        return RawDataset(
            self.inputs[:, idx],
            self.targets[:, idx],
            None if self.class_labels is None else self.class_labels[idx],
            None if self.groups is None else self.groups[idx],
        )


@dataclass(frozen=True)
class CenteredDataset:
    x: np.ndarray
    y: np.ndarray
    mu_x: np.ndarray
    mu_y: np.ndarray

    def __post_init__(self):
        x, y = _frozen(self.x), _frozen(self.y)
        mu_x, mu_y = _frozen(self.mu_x, 1), _frozen(self.mu_y, 1)
        if x.shape[1] != y.shape[1]:
            raise DimensionMismatchError("x and y must have the same number of columns")
        if mu_x.shape != (x.shape[0],) or mu_y.shape != (y.shape[0],):
            raise DimensionMismatchError("means must match the row counts of x and y")
        for name, v in (("x", x), ("y", y), ("mu_x", mu_x), ("mu_y", mu_y)):
            object.__setattr__(self, name, v)

    @property
    def n_samples(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class CovarianceSet:
    """Unnormalized sample covariances ``cxx = X X^T``, ``cxy = X Y^T``, ``cyy = Y Y^T``."""

    cxx: np.ndarray
    cxy: np.ndarray
    cyy: np.ndarray

    def __post_init__(self):
        cxx, cxy, cyy = _frozen(self.cxx), _frozen(self.cxy), _frozen(self.cyy)
        n, m = cxy.shape
        if cxx.shape != (n, n) or cyy.shape != (m, m):
            raise DimensionMismatchError(
                f"inconsistent covariance shapes {cxx.shape}, {cxy.shape}, {cyy.shape}"
            )
        for name, v in (("cxx", cxx), ("cyy", cyy)):
            scale = float(np.abs(v).max()) if v.size else 0.0
            if np.abs(v - v.T).max(initial=0.0) > 1e-12 * scale:
                raise InvariantViolationError(f"{name} is not symmetric")
        for name, v in (("cxx", cxx), ("cxy", cxy), ("cyy", cyy)):
            object.__setattr__(self, name, v)

    @property
    def n_features(self):
        return self.cxy.shape[0]

    @property
    def n_targets(self):
        return self.cxy.shape[1]


def encode_targets(labels: Sequence[int], m: int) -> np.ndarray:
    """1-of-m encoding: column ``i`` is the indicator vector of ``labels[i]``."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise InputError("labels must be a 1-D sequence")
    for i, lab in enumerate(labels):
        if int(lab) != lab or not 0 <= lab < m:
            raise InvalidLabelError(i, lab, m)
    y = np.zeros((m, labels.size))
    y[labels.astype(int), np.arange(labels.size)] = 1.0
    return y


def center(raw) -> CenteredDataset:
    """Subtract the per-row sample means from inputs and targets."""
    inputs = np.asarray(raw.inputs, dtype=np.float64)
    targets = np.asarray(raw.targets, dtype=np.float64)
    if inputs.shape[1] < 2:
        raise InsufficientSamplesError(
            f"centering needs at least 2 samples, got {inputs.shape[1]}"
        )
    mu_x = inputs.mean(axis=1)
    mu_y = targets.mean(axis=1)
    return CenteredDataset(inputs - mu_x[:, None], targets - mu_y[:, None], mu_x, mu_y)


def covariances(d: CenteredDataset) -> CovarianceSet:
    x, y = d.x, d.y
    return CovarianceSet(x @ x.T, x @ y.T, y @ y.T)


# ---------------------------------------------------------------------------
# CSV matrices: comma separated, one matrix row per line, no header.


def _current_umask():
    mask = os.umask(0)
    os.umask(mask)
    return mask


_UMASK = _current_umask()


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_matrix(a) -> str:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in a)


def write_matrix(path, a, role=None, sidecar=False):
    """Write a matrix as CSV; optionally add a ``<path>.json`` descriptor."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    atomic_write_text(path, format_matrix(a))
    if sidecar:
        desc = {"rows": int(a.shape[0]), "cols": int(a.shape[1])}
        if role is not None:
            desc["role"] = role
        atomic_write_text(str(path) + ".json", json.dumps(desc, indent=2) + "\n")


def read_matrix(path) -> np.ndarray:
    """Read a CSV matrix, checking the optional sidecar descriptor if present."""
    path = Path(path)
    rows = []
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None
        if len(rows[-1]) != len(rows[0]):
            raise InputError(
                f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(rows[-1])}"
            )
    if not rows:
        raise InputError(f"{path}: empty matrix")
    a = np.array(rows, dtype=np.float64)
    side = Path(str(path) + ".json")
    if side.exists():
        desc = json.loads(side.read_text(encoding="utf-8"))
        expect = (desc.get("rows", a.shape[0]), desc.get("cols", a.shape[1]))
        if tuple(expect) != a.shape:
            raise InputError(f"{path}: descriptor says {expect}, file holds {a.shape}")
    return a


def read_labels(path) -> np.ndarray:
    """One integer per line; blank lines are ignored."""
    out = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s:
            continue
        try:
            out.append(int(s))
        except ValueError:
            raise InputError(f"{path}:{lineno}: not an integer: {s!r}") from None
    return np.array(out, dtype=int)


def write_labels(path, labels):
    atomic_write_text(path, "".join(f"{int(v)}\n" for v in labels))
