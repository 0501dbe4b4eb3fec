"""Filter banks: feature extraction, interpretability metrics, fixed baseline banks, persistence."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import atomic_write_text, format_matrix
from .exceptions import (
    BankFormatError,
    DimensionMismatchError,
    InputError,
    InvariantViolationError,
)

__all__ = [
    "FilterBank",
    "FeatureMatrix",
    "BANK_METHODS",
    "extract",
    "nz_rate",
    "interpretability",
    "reconstruction_loss",
    "gabor_bank",
    "philips_bank",
    "philips_band_of_bin",
    "save_bank",
    "load_bank",
]

BANK_METHODS = ("nopls", "pnopls", "defnopls", "nmf_opls", "popls", "opls", "gabor", "philips")
UNCONSTRAINED_METHODS = ("opls",)


@dataclass(frozen=True)
class FilterBank:
    """An ``n x n_f`` bank whose columns are filter frequency responses.

    ``flags`` carries solver annotations, currently ``degenerate_columns``
    (indices of columns allowed to be identically zero).
    """

    u: np.ndarray
    method: str
    ordered_by_relevance: bool = False
    preproc: dict = field(default_factory=dict)
    mu_x: Optional[np.ndarray] = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        u = np.array(self.u, dtype=np.float64, copy=True)
        if u.ndim == 1:
            u = u[:, None]
        if u.ndim != 2 or u.shape[0] < 1 or u.shape[1] < 1:
            raise DimensionMismatchError(f"a bank must be a non-empty matrix, got shape {u.shape}")
        if self.method not in BANK_METHODS:
            raise InputError(f"unknown bank method {self.method!r}")
        if not np.all(np.isfinite(u)):
            raise InvariantViolationError("bank coefficients must be finite")
        if self.method not in UNCONSTRAINED_METHODS and np.any(u < 0):
            i, j = np.argwhere(u < 0)[0]
            raise InvariantViolationError(
                f"{self.method} bank has negative coefficient {u[i, j]!r} at ({i}, {j})"
            )
        flags = dict(self.flags)
        flags["degenerate_columns"] = sorted(int(j) for j in flags.get("degenerate_columns", []))
        zero = [j for j in range(u.shape[1]) if not np.any(u[:, j])]
        undeclared = sorted(set(zero) - set(flags["degenerate_columns"]))
        if undeclared:
            raise InvariantViolationError(
                f"all-zero columns {undeclared} are not flagged as degenerate"
            )
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "preproc", dict(self.preproc))
        if self.mu_x is not None:
            mu = np.array(self.mu_x, dtype=np.float64, copy=True).ravel()
            if mu.shape != (u.shape[0],):
                raise DimensionMismatchError("mu_x must have one entry per bank row")
            mu.setflags(write=False)
            object.__setattr__(self, "mu_x", mu)

    @property
    def n(self):
        return self.u.shape[0]

    @property
    def n_f(self):
        return self.u.shape[1]

    def truncate(self, k):
        """First ``k`` filters (meaningful only for relevance-ordered banks)."""
        deg = [j for j in self.flags["degenerate_columns"] if j < k]
        return FilterBank(self.u[:, :k], self.method, self.ordered_by_relevance,
                          self.preproc, self.mu_x, {**self.flags, "degenerate_columns": deg})

    def header(self):
        return {
            "method": self.method,
            "n": int(self.n),
            "n_f": int(self.n_f),
            "ordered_by_relevance": bool(self.ordered_by_relevance),
            "preproc": self.preproc,
            "mu_x": None if self.mu_x is None else [float(v) for v in self.mu_x],
            "flags": self.flags,
        }


@dataclass(frozen=True)
class FeatureMatrix:
    """Projected data ``x_prime = U^T x`` plus the offset ``U^T mu_x``.

    ``x_prime + offset`` recovers the features of the uncentered spectra.
    """

    x_prime: np.ndarray
    offset: np.ndarray

    @property
    def uncentered(self):
        return self.x_prime + self.offset[:, None]


def extract(bank, x, mu_x=None) -> FeatureMatrix:
    u = bank.u if isinstance(bank, FilterBank) else np.asarray(bank, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != u.shape[0]:
        raise DimensionMismatchError(
            f"bank expects {u.shape[0]} input rows, data has {x.shape[0]}"
        )
    if mu_x is None:
        offset = np.zeros(u.shape[1])
    else:
        mu_x = np.asarray(mu_x, dtype=np.float64).ravel()
        if mu_x.shape != (u.shape[0],):
            raise DimensionMismatchError("mu_x length must equal the bank dimension")
        offset = u.T @ mu_x
    return FeatureMatrix(u.T @ x, offset)


def nz_rate(bank, zero_threshold=None) -> float:
    """Fraction of coefficients whose magnitude exceeds ``zero_threshold``.

    The default threshold, ``1e-10 * max|u|``, counts exact NNLS zeros and
    epsilon-floored multiplicative-update entries alike as zeros.
    """
    u = bank.u if isinstance(bank, FilterBank) else np.asarray(bank, dtype=np.float64)
    if u.size == 0:
        raise InputError("empty bank")
    if zero_threshold is None:
        zero_threshold = 1e-10 * float(np.max(np.abs(u)))
    return float(np.count_nonzero(np.abs(u) > zero_threshold)) / u.size


def interpretability(nz, n_f, n_ref) -> float:
    """Combined measure ``-log10(nz) - log10(n_f / n_ref)``."""
    if not 0 < nz <= 1:
        raise InputError(f"NZ must lie in (0, 1], got {nz!r}")
    if n_f < 1 or n_ref < 1:
        raise InputError("n_f and n_ref must be >= 1")
    return -math.log10(nz) - math.log10(n_f / n_ref)


def reconstruction_loss(u, w, dataset) -> float:
    """Exact ``||Y - W U^T X||_F^2`` computed from the residual matrix.

    ``dataset`` may be centered (``x``/``y``) or raw (``inputs``/``targets``).
    """
    if hasattr(dataset, "x"):
        x, y = dataset.x, dataset.y
    else:
        x, y = dataset.inputs, dataset.targets
    u = np.asarray(u, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    if w.ndim == 1:
        w = w[:, None]
    if u.shape[0] != x.shape[0] or w.shape[0] != y.shape[0] or u.shape[1] != w.shape[1]:
        raise DimensionMismatchError(
            f"shapes u {u.shape}, w {w.shape} do not conform with x {x.shape}, y {y.shape}"
        )
    r = y - w @ (u.T @ x)
    return float(np.sum(r * r))


def _frequency_grid(rho):
    # block centres of the zero-centred, rho x rho decimated spectrum (cycles/pixel)
    f = (np.arange(rho) + 0.5) / rho - 0.5
    return np.meshgrid(f, f, indexing="xy")


def gabor_bank(rho=12, n_freq=4, n_orient=6, freq_ratio=math.sqrt(2), gamma=0.5,
               eta=0.5, max_freq=0.327) -> FilterBank:
    """Frequency-domain Gabor bank sampled on the decimated spectrum grid.

    Each column is the magnitude response of an even (cosine) Gabor filter:
    two Gaussian lobes at ``+/- f`` along orientation ``theta``,

        exp(-(pi/f)^2 * (gamma^2 (u' -/+ f)^2 + eta^2 v'^2)),

    with centre frequencies ``max_freq / freq_ratio**i`` and orientations
    ``k * pi / n_orient``. Columns are ordered frequency-major. Rows follow the
    row-major layout of :func:`nnopls.preprocess.image_to_spectrum`.
    """
    if rho < 2:
        raise InputError("rho must be >= 2")
    uu, vv = _frequency_grid(rho)
    cols = []
    for i in range(n_freq):
        f = max_freq / freq_ratio**i
        for k in range(n_orient):
            theta = k * math.pi / n_orient
            up = uu * math.cos(theta) + vv * math.sin(theta)
            vp = -uu * math.sin(theta) + vv * math.cos(theta)
            scale = (math.pi / f) ** 2
            g = (np.exp(-scale * (gamma**2 * (up - f) ** 2 + eta**2 * vp**2))
                 + np.exp(-scale * (gamma**2 * (up + f) ** 2 + eta**2 * vp**2)))
            cols.append(g.ravel())
    u = np.column_stack(cols)
    preproc = {"kind": "image", "rho": int(rho), "n_freq": n_freq, "n_orient": n_orient,
               "freq_ratio": freq_ratio, "gamma": gamma, "eta": eta, "max_freq": max_freq}
    return FilterBank(u, "gabor", False, preproc, None, {"magnitude_response": True})


PHILIPS_BANDS = ((0.0, 0.0), (0.0, 2.0), (3.0, 15.0), (20.0, math.inf))


def philips_band_of_bin(k, d, frame_rate_hz=400.0 / 3.0):
    """Band index (0-3) of periodogram bin ``k``, or ``None`` for unassigned bins."""
    hz = k * frame_rate_hz / (2.0 * (d - 1))
    if k == 0:
        return 0
    if 0.0 < hz < 2.0:
        return 1
    if 3.0 <= hz < 15.0:
        return 2
    if hz >= 20.0:
        return 3
    return None


def philips_bank(d=129, frame_rate_hz=400.0 / 3.0, n_coeffs=1) -> FilterBank:
    """Four-band modulation indicator bank (DC, 0-2 Hz, 3-15 Hz, above 20 Hz).

    One ``d x 4`` block per coefficient, stacked block-diagonally. Bins between
    2 and 3 Hz and between 15 and 20 Hz belong to no band.
    """
    if d < 2:
        raise InputError("periodogram length must be >= 2")
    block = np.zeros((d, 4))
    for k in range(d):
        b = philips_band_of_bin(k, d, frame_rate_hz)
        if b is not None:
            block[k, b] = 1.0
    u = np.kron(np.eye(n_coeffs), block)
    empty = [j for j in range(u.shape[1]) if not u[:, j].any()]
    preproc = {"kind": "periodogram", "d": int(d), "n_coeffs": int(n_coeffs),
               "frame_rate_hz": float(frame_rate_hz)}
    return FilterBank(u, "philips", False, preproc, None, {"degenerate_columns": empty})


SEPARATOR = "---"


def save_bank(bank: FilterBank, path):
    """JSON header, a ``---`` line, then the ``n x n_f`` matrix as CSV."""
    text = json.dumps(bank.header(), indent=2, sort_keys=False) + "\n" + SEPARATOR + "\n"
    text += format_matrix(bank.u)
    atomic_write_text(path, text)


_REQUIRED = ("method", "n", "n_f", "ordered_by_relevance", "preproc", "mu_x")


def load_bank(path) -> FilterBank:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise BankFormatError(f"cannot read {path}: {exc}") from exc
    try:
        sep = lines.index(SEPARATOR)
    except ValueError:
        raise BankFormatError(f"missing '{SEPARATOR}' separator line") from None
    try:
        header = json.loads("\n".join(lines[:sep]))
    except json.JSONDecodeError as exc:
        raise BankFormatError(f"invalid JSON header: {exc.msg}", line=exc.lineno) from None
    if not isinstance(header, dict):
        raise BankFormatError("header must be a JSON object", line=1)
    for key in _REQUIRED:
        if key not in header:
            raise BankFormatError("missing header field", field=key)
    n, n_f = header["n"], header["n_f"]
    if not isinstance(n, int) or n < 1:
        raise BankFormatError("must be a positive integer", field="n")
    if not isinstance(n_f, int) or n_f < 1:
        raise BankFormatError("must be a positive integer", field="n_f")
    rows = []
    for lineno, line in enumerate(lines[sep + 1:], start=sep + 2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != n_f:
            raise BankFormatError(f"expected {n_f} values, got {len(parts)}", line=lineno)
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise BankFormatError(str(exc), line=lineno) from None
    if len(rows) != n:
        raise BankFormatError(f"header declares n = {n} rows, payload has {len(rows)}", field="n")
    mu = header["mu_x"]
    if mu is not None and (not isinstance(mu, list) or len(mu) != n):
        raise BankFormatError(f"must be null or a list of {n} numbers", field="mu_x")
    try:
        return FilterBank(
            np.array(rows, dtype=np.float64),
            header["method"],
            bool(header["ordered_by_relevance"]),
            header["preproc"] or {},
            None if mu is None else np.array(mu, dtype=np.float64),
            header.get("flags", {}),
        )
    except InvariantViolationError:
        raise
    except InputError as exc:
        raise BankFormatError(str(exc)) from None
