"""Alternating W/U solvers for the non-negative OPLS objective.

All three methods minimize ``||Y - W U^T X||_F^2`` subject to ``U >= 0`` and
``W^T W = I`` by alternating a W-step (closed form for fixed U) with an exact
U-step (one NNLS problem per filter):

* :func:`nopls`: W from the eigendecomposition of ``M^T M``, ``M = U^T C_XY``.
* :func:`pnopls`: W from the orthogonal Procrustes solution ``Q P^T``.
* :func:`defnopls`: one filter at a time with Schur-complement deflation of
  ``C_XY`` between filters.
"""

from __future__ import annotations

import time
import warnings

import numpy as np

from ..exceptions import (
    ConfigurationError,
    DeflationExhausted,
    DegenerateProjectionError,
    PreconditionError,
)
from ..dataset import CovarianceSet
from ..filterbank import FilterBank
from ..nnls import nnls_gram
from ._common import (
    EigenPair,
    SolverConfig,
    SolverReport,
    SolverResult,
    as_covariances,
    check_n_f,
    loss_from_cov,
    sign_by_largest,
)

__all__ = [
    "w_step",
    "u_step",
    "nopls",
    "procrustes_w",
    "pnopls",
    "unidim_w",
    "schur_deflate",
    "defnopls",
]

_TINY = np.finfo(np.float64).tiny


def _mean_of(data):
    return getattr(data, "mu_x", None)


def w_step(cov, u) -> EigenPair:
    """Top ``min(m, n_f)`` eigenpairs of ``M^T M`` with ``M = U^T C_XY``.

    Only an ``m x m`` symmetric matrix is decomposed. Each eigenvector's sign
    is chosen so that ``u_j^T C_XY w_j >= 0`` (the sign that lowers the
    objective for the current U); when that product vanishes the
    largest-magnitude coordinate is made positive.
    """
    cov = as_covariances(cov)
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    if not np.any(u):
        raise DegenerateProjectionError("U is identically zero; the W-step is undefined")
    m_mat = u.T @ cov.cxy
    k = min(cov.n_targets, u.shape[1])
    lam, vec = np.linalg.eigh(m_mat.T @ m_mat)
    order = np.argsort(-lam, kind="stable")[:k]
    lam = np.clip(lam[order], 0.0, None)
    vec = sign_by_largest(vec[:, order])
    align = np.einsum("jm,mj->j", m_mat[:k], vec)
    scale = np.abs(m_mat).max() * 1e-12
    flip = align < -scale
    vec[:, flip] *= -1.0
    return EigenPair(lam, vec)


def _check_orthonormal(w, tol=1e-8):
    live = np.flatnonzero(np.any(w != 0, axis=0))
    g = w[:, live].T @ w[:, live]
    err = np.max(np.abs(g - np.eye(live.size))) if live.size else 0.0
    if err > tol:
        raise PreconditionError(
            f"U-step needs W with orthonormal (or zero) columns; |W^T W - I| = {err:.2e}"
        )


def u_step(data, w, kkt_tolerance=None, nonnegative=True) -> np.ndarray:
    """Minimize the objective over ``U >= 0`` for a fixed orthonormal W.

    With ``W^T W = I`` the objective separates into one NNLS problem per
    filter, all sharing the Gram matrix ``C_XX`` and with right-hand sides
    the columns of ``C_XY W``. ``nonnegative=False`` solves the unconstrained
    least-squares problem instead.
    """
    cov = as_covariances(data)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 1:
        w = w[:, None]
    _check_orthonormal(w)
    rhs = cov.cxy @ w
    if not nonnegative:
        return np.linalg.lstsq(cov.cxx, rhs, rcond=None)[0]
    return nnls_gram(cov.cxx, rhs, kkt_tolerance).x


def _column_objective(cxx, u, rhs):
    return np.einsum("ij,ij->j", u, cxx @ u) - 2.0 * np.einsum("ij,ij->j", u, rhs)


def signed_u_step(cov, w, kkt_tolerance=None):
    """U-step that also picks the sign of every W column.

    Eigenvectors are only defined up to sign. For each column both ``w_j``
    and ``-w_j`` are tried and the one whose NNLS filter attains the lower
    objective is kept, which is an exact minimization over the filter and
    the sign together. Returns ``(u, w)`` with ``w`` sign-adjusted.
    """
    cov = as_covariances(cov)
    w = np.array(w, dtype=np.float64)
    if w.ndim == 1:
        w = w[:, None]
    _check_orthonormal(w)
    rhs = cov.cxy @ w
    both = nnls_gram(cov.cxx, np.hstack([rhs, -rhs]), kkt_tolerance).x
    k = w.shape[1]
    up, un = both[:, :k], both[:, k:]
    flip = _column_objective(cov.cxx, un, -rhs) < _column_objective(cov.cxx, up, rhs)
    w[:, flip] *= -1.0
    return np.where(flip, un, up), w


def _finish(method, cov, u, w, report, t0, ordered, mu_x):
    zero = [j for j in range(u.shape[1]) if not np.any(u[:, j])]
    report.degenerate_columns = zero
    report.n_filters = u.shape[1] - len(zero)
    report.unordered = not ordered
    report.wall_time = time.perf_counter() - t0
    unconstrained = bool(np.any(u < 0))
    bank = FilterBank(
        u,
        "opls" if unconstrained else method,
        ordered,
        {},
        mu_x,
        {"degenerate_columns": zero, "unconstrained": unconstrained},
    )
    return SolverResult(bank, w, report)


_MAX_PERIOD = 8
_STALL_PATIENCE = 100


def _cycle_period(report, trace_scale, tol):
    traces = report.eigenvalue_trace_trajectory
    losses = report.loss_trajectory
    for p in range(2, _MAX_PERIOD + 1):
        if len(traces) < 2 * p:
            break
        if all(abs(traces[-1 - i] - traces[-1 - i - p]) <= trace_scale
               and abs(losses[-1 - i] - losses[-1 - i - p]) <= tol * max(abs(losses[-1 - i]), _TINY)
               for i in range(p)):
            return p
    return 0


def _alternate(data, config, method, w_update, search_signs=False):
    t0 = time.perf_counter()
    config = config or SolverConfig()
    cov = as_covariances(data)
    n, m = cov.cxy.shape
    n_f = config.n_f
    check_n_f(n_f, n)
    report = SolverReport(method)
    tol = config.tolerance(1e-8)

    u = np.eye(n, n_f)
    w = np.zeros((m, n_f))
    best = None
    trace_first = trace_prev = None
    report.stop_reason = "max_iterations"
    for it in range(1, config.max_outer_iterations + 1):
        try:
            w_new, trace = w_update(cov, u)
        except DegenerateProjectionError:
            if it == 1 and np.any(u):
                raise
            report.warnings.append("U collapsed to zero: C_XY carries no usable signal")
            report.stop_reason = "tolerance"
            break
        w = np.zeros((m, n_f))
        w[:, : w_new.shape[1]] = w_new
        if search_signs and config.nonnegative:
            u, w = signed_u_step(cov, w, config.kkt_tolerance)
        else:
            u = u_step(cov, w, config.kkt_tolerance, config.nonnegative)
        loss = loss_from_cov(cov, u, w)
        report.outer_iterations = it
        report.loss_trajectory.append(loss)
        report.eigenvalue_trace_trajectory.append(trace)
        if best is None or loss < best[0]:
            best = (loss, u, w)
            report.extras["best_iteration"] = it
        if trace_first is None:
            trace_first = trace
        if trace_prev is not None:
            diff = trace - trace_prev
            report.trace_difference_signs.append(int(np.sign(diff)))
            if abs(diff) <= tol * max(trace_first, _TINY):
                report.stop_reason = "tolerance"
                break
            # the eigen W-step is not a block minimizer, so the iterates can
            # settle into a short cycle that the trace rule never detects
            period = _cycle_period(report, tol * max(trace_first, _TINY), tol)
            if period:
                report.stop_reason = "cycle"
                report.extras["cycle_period"] = period
                report.warnings.append(f"iterates entered a {period}-cycle; returning the best iterate")
                break
            if it - report.extras["best_iteration"] >= _STALL_PATIENCE:
                report.stop_reason = "stalled"
                report.warnings.append(
                    f"no loss improvement in {_STALL_PATIENCE} iterations; returning the best iterate")
                break
        if not np.any(u):
            report.warnings.append("U collapsed to zero: C_XY carries no usable signal")
            report.stop_reason = "tolerance"
            break
        trace_prev = trace
    # with tied eigenvalues the eigen step may rotate away from a better
    # iterate without moving the trace, so the lowest-loss iterate is kept
    if best is not None:
        _, u, w = best
    return cov, u, w, report, t0


def nopls(data, config=None) -> SolverResult:
    """Non-negative OPLS by alternating eigen W-steps and NNLS U-steps.

    U starts as the Kronecker-delta matrix (``u_ij = 1`` iff ``i == j``).
    Iteration stops when the eigenvalue trace of consecutive W-steps changes
    by at most ``delta`` times the first trace, when the iterates repeat
    with a short period (up to eight), or when the best loss has not improved
    for 100 iterations. The lowest-loss iterate is returned. Columns come out
    in descending eigenvalue order. When ``n_f > m`` only ``m`` eigenvectors
    exist; the remaining columns of W are zero, their filters collapse to
    zero and are listed in ``report.degenerate_columns``.
    """
    def update(cov, u):
        ep = w_step(cov, u)
        return ep.w, float(ep.lam.sum())

    config = config or SolverConfig()
    cov, u, w, report, t0 = _alternate(data, config, "nopls", update, config.sign_search)
    if w.shape[1] > cov.n_targets:
        report.warnings.append(
            f"n_f exceeds m = {cov.n_targets}; trailing W columns are zero padding"
        )
    return _finish("nopls", cov, u, w, report, t0, True, _mean_of(data))


def procrustes_w(m_matrix) -> np.ndarray:
    """``W = Q P^T`` from the thin SVD ``m_matrix = P D Q^T`` (``n_f x m`` input)."""
    m_matrix = np.atleast_2d(np.asarray(m_matrix, dtype=np.float64))
    if not np.any(m_matrix):
        raise DegenerateProjectionError("Procrustes W-step of a zero matrix is undefined")
    p, _, qt = np.linalg.svd(m_matrix, full_matrices=False)
    return qt.T @ p.T


def pnopls(data, config=None) -> SolverResult:
    """Non-negative OPLS with the orthogonal Procrustes W-step.

    Filters are not relevance-ordered. ``n_f > m`` is rejected because an
    ``m x n_f`` W with orthonormal columns does not exist. A warning is added
    to the report when the loss rises by more than ``1e-6`` (relative) within
    the last ten iterations.
    """
    config = config or SolverConfig()
    cov = as_covariances(data)
    if config.n_f > cov.n_targets:
        raise ConfigurationError(
            f"pnopls needs n_f <= m (got n_f = {config.n_f}, m = {cov.n_targets})"
        )

    def update(cov, u):
        m_mat = u.T @ cov.cxy
        return procrustes_w(m_mat), float(np.sum(m_mat * m_mat))

    cov, u, w, report, t0 = _alternate(cov, config, "pnopls", update)
    losses = report.loss_trajectory
    for i in range(1, len(losses)):
        window = losses[max(0, i - 10): i + 1]
        if any(b > a + 1e-6 * abs(a) for a, b in zip(window, window[1:])):
            report.warnings.append(f"oscillation: loss increased near iteration {i + 1}")
            break
    return _finish("pnopls", cov, u, w, report, t0, False, _mean_of(data))


def unidim_w(cxy, u) -> np.ndarray:
    """Unit-norm ``C_XY^T u``; raises :class:`DeflationExhausted` if it vanishes."""
    cxy = np.asarray(cxy, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64).ravel()
    v = cxy.T @ u
    norm = float(np.linalg.norm(v))
    if norm == 0.0 or norm <= 1e-14 * np.linalg.norm(cxy) * np.linalg.norm(u):
        raise DeflationExhausted("u^T C_XY is zero")
    return v / norm


def schur_deflate(cxy, u) -> np.ndarray:
    """Schur-complement deflation ``C <- C (I - C^T u u^T C / (u^T C C^T u))``.

    Evaluated as ``C - (C w) w^T`` with ``w = C^T u / ||C^T u||``, which is the
    same matrix and leaves ``u^T C`` at rounding level.
    """
    cxy = np.asarray(cxy, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64).ravel()
    v = cxy.T @ u
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        warnings.warn("u is already left-orthogonal to C_XY; deflation skipped", stacklevel=2)
        return cxy.copy()
    w = v / norm
    return cxy - np.outer(cxy @ w, w)


def defnopls(data, config=None) -> SolverResult:
    """Sequential non-negative OPLS with Schur deflation of ``C_XY``.

    Filter ``j`` starts from the Kronecker vector ``e_j`` and alternates
    :func:`unidim_w` with a single-filter NNLS U-step until the cosine
    between consecutive iterates exceeds ``1 - delta``. Extraction stops
    early when deflation has exhausted ``C_XY``.
    """
    t0 = time.perf_counter()
    config = config or SolverConfig()
    cov = as_covariances(data)
    n, m = cov.cxy.shape
    n_f = config.n_f
    check_n_f(n_f, n)
    tol = config.tolerance(1e-10)
    report = SolverReport("defnopls")

    c = cov.cxy.copy()
    c0 = float(np.linalg.norm(c))
    u_cols, w_cols = [], []
    for j in range(n_f):
        cnorm = float(np.linalg.norm(c))
        if c0 == 0.0 or cnorm <= 1e-12 * c0:
            report.warnings.append(f"deflation exhausted C_XY after {j} filters")
            break
        u = np.zeros(n)
        u[j] = 1.0
        if np.linalg.norm(c.T @ u) <= 1e-12 * cnorm:
            i = int(np.argmax(np.linalg.norm(c, axis=1)))
            u = np.zeros(n)
            u[i] = 1.0
            report.warnings.append(f"filter {j}: e_{j} orthogonal to C_XY, started from e_{i}")
        converged = False
        try:
            for k in range(1, config.max_outer_iterations + 1):
                w = unidim_w(c, u)
                if config.sign_search:
                    u_new = signed_u_step(CovarianceSet(cov.cxx, c, cov.cyy), w,
                                          config.kkt_tolerance)[0][:, 0]
                else:
                    u_new = nnls_gram(cov.cxx, c @ w, config.kkt_tolerance).x
                if not np.any(u_new):
                    raise DeflationExhausted("U-step returned a zero filter")
                cos = float(u_new @ u) / (np.linalg.norm(u_new) * np.linalg.norm(u))
                u = u_new
                if cos > 1.0 - tol:
                    converged = True
                    break
            w = unidim_w(c, u)
        except DeflationExhausted:
            report.warnings.append(f"deflation exhausted C_XY at filter {j}")
            break
        if not converged:
            report.warnings.append(f"filter {j}: inner loop hit the iteration cap")
            report.stop_reason = "max_iterations"
        report.inner_iterations.append(k)
        u_cols.append(u)
        w_cols.append(w)
        c = schur_deflate(c, u)
        report.deflation_residuals.append(
            float(np.linalg.norm(u @ c) / (np.linalg.norm(u) * cnorm))
        )
        uu, ww = np.column_stack(u_cols), np.column_stack(w_cols)
        report.loss_trajectory.append(loss_from_cov(cov, uu, ww))
        report.outer_iterations = j + 1

    if not u_cols:
        u, w = np.zeros((n, 1)), np.zeros((m, 1))
        report.loss_trajectory.append(float(np.trace(cov.cyy)))
    else:
        u, w = np.column_stack(u_cols), np.column_stack(w_cols)
    return _finish("defnopls", cov, u, w, report, t0, True, _mean_of(data))
