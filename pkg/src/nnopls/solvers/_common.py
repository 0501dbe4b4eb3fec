from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ..dataset import CenteredDataset, CovarianceSet, RawDataset, center, covariances
from ..exceptions import ConfigurationError, InputError

METHODS = ("nopls", "pnopls", "defnopls", "nmf_opls", "popls", "opls")
RELEVANCE_ORDERED = {"nopls": True, "pnopls": False, "defnopls": True,
                     "nmf_opls": False, "popls": True, "opls": True}


@dataclass(frozen=True)
class SolverConfig:
    """Shared solver settings.

    ``delta`` is a relative tolerance whose meaning depends on the method:
    eigenvalue-trace change over the first trace (nopls, pnopls), one minus
    the cosine between consecutive filter iterates (defnopls, popls) and the
    Frobenius change of U over its norm (nmf_opls). ``None`` selects the
    per-method default. ``ridge_tau=None`` means ``1e-8 * trace(cxx) / n``.
    """

    n_f: int = 2
    delta: Optional[float] = None
    max_outer_iterations: int = 1000
    epsilon_floor: float = 1e-16
    ridge_tau: Optional[float] = None
    popls_restarts: int = 5
    seed: int = 0
    kkt_tolerance: Optional[float] = None
    nonnegative: bool = True
    sign_search: bool = True

    def __post_init__(self):
        if int(self.n_f) != self.n_f or self.n_f < 1:
            raise ConfigurationError(f"n_f must be a positive integer, got {self.n_f!r}")
        if self.delta is not None and not self.delta > 0:
            raise ConfigurationError("delta must be > 0")
        if self.max_outer_iterations < 1:
            raise ConfigurationError("max_outer_iterations must be >= 1")
        if not self.epsilon_floor > 0:
            raise ConfigurationError("epsilon_floor must be > 0")
        if self.ridge_tau is not None and self.ridge_tau < 0:
            raise ConfigurationError("ridge_tau must be >= 0")
        if self.popls_restarts < 1:
            raise ConfigurationError("popls_restarts must be >= 1")

    def tolerance(self, default):
        return default if self.delta is None else self.delta

    def to_dict(self):
        return asdict(self)


@dataclass
class SolverReport:
    method: str
    outer_iterations: int = 0
    loss_trajectory: list = field(default_factory=list)
    eigenvalue_trace_trajectory: list = field(default_factory=list)
    stop_reason: str = "tolerance"
    wall_time: float = 0.0
    unordered: bool = False
    n_filters: int = 0
    degenerate_columns: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    deflation_residuals: list = field(default_factory=list)
    trace_difference_signs: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def final_loss(self):
        return self.loss_trajectory[-1] if self.loss_trajectory else math.nan

    def to_dict(self):
        d = asdict(self)
        d["extras"] = {k: _jsonable(v) for k, v in d["extras"].items()}
        return {k: _jsonable(v) for k, v in d.items()}


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, list):
        return [_jsonable(x) for x in v]
    return v


@dataclass(frozen=True)
class EigenPair:
    lam: np.ndarray
    w: np.ndarray


class SolverResult(NamedTuple):
    bank: "FilterBank"  # noqa: F821
    w: Optional[np.ndarray]
    report: SolverReport

    @property
    def u(self):
        return self.bank.u


def as_covariances(data) -> CovarianceSet:
    if isinstance(data, CovarianceSet):
        return data
    if isinstance(data, CenteredDataset):
        return covariances(data)
    if isinstance(data, RawDataset):
        return covariances(center(data))
    raise InputError(f"expected a dataset or covariance set, got {type(data).__name__}")


def as_centered(data) -> CenteredDataset:
    if isinstance(data, CenteredDataset):
        return data
    if isinstance(data, RawDataset):
        return center(data)
    raise InputError(f"expected a dataset, got {type(data).__name__}")


def default_ridge(cxx, tau=None):
    if tau is not None:
        return float(tau)
    n = cxx.shape[0]
    return 1e-8 * float(np.trace(cxx)) / n


def loss_from_cov(cov: CovarianceSet, u, w) -> float:
    """``||Y - W U^T X||_F^2`` expressed through the covariance traces."""
    u = np.asarray(u, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return float(
        np.trace(cov.cyy)
        - 2.0 * np.sum((cov.cxy @ w) * u)
        + np.sum((u.T @ cov.cxx @ u) * (w.T @ w))
    )


def refit_w(cov: CovarianceSet, u) -> np.ndarray:
    """Least-squares regression matrix for a fixed bank (unconstrained W)."""
    u = np.asarray(u, dtype=np.float64)
    g = u.T @ cov.cxx @ u
    return (cov.cxy.T @ u) @ np.linalg.pinv(g, hermitian=True)


def bank_loss(cov: CovarianceSet, u) -> float:
    """Smallest attainable loss of a bank when W is refit by least squares."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    g = u.T @ cov.cxx @ u
    m = u.T @ cov.cxy
    return float(np.trace(cov.cyy) - np.trace(np.linalg.pinv(g, hermitian=True) @ m @ m.T))


def sign_by_largest(v):
    """Flip columns so their largest-magnitude coordinate is positive."""
    v = np.array(v, dtype=np.float64)
    if v.ndim == 1:
        i = int(np.argmax(np.abs(v)))
        return -v if v[i] < 0 else v
    idx = np.argmax(np.abs(v), axis=0)
    s = np.sign(v[idx, np.arange(v.shape[1])])
    s[s == 0] = 1.0
    return v * s


def zero_columns(u, rel=0.0):
    u = np.asarray(u)
    scale = float(np.max(np.abs(u))) if u.size else 0.0
    thr = rel * scale
    return [int(j) for j in range(u.shape[1]) if np.all(np.abs(u[:, j]) <= thr)]


def check_n_f(n_f, n):
    if n_f > n:
        raise ConfigurationError(f"n_f = {n_f} exceeds the input dimension n = {n}")
