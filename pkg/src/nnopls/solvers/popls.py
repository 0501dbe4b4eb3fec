"""Positive OPLS (one non-negative Rayleigh quotient per filter) and the
unconstrained OPLS baseline."""

from __future__ import annotations

import time

import numpy as np
from scipy import linalg

from ..exceptions import InputError
from ..filterbank import FilterBank
from ._common import (
    SolverConfig,
    SolverReport,
    SolverResult,
    as_covariances,
    bank_loss,
    check_n_f,
    default_ridge,
    refit_w,
    sign_by_largest,
)
from .nopls import schur_deflate

__all__ = ["popls_quotient", "maximize_quotient", "popls", "opls_baseline"]


def popls_quotient(cxx, cxy, u, ridge_tau=0.0) -> float:
    """``u^T C_XY C_XY^T u / u^T (C_XX + tau I) u``."""
    u = np.asarray(u, dtype=np.float64).ravel()
    if not np.any(u):
        raise InputError("the quotient is undefined at u = 0")
    v = np.asarray(cxy, dtype=np.float64).T @ u
    den = float(u @ np.asarray(cxx, dtype=np.float64) @ u) + ridge_tau * float(u @ u)
    return float(v @ v) / den


class _Quotient:
    def __init__(self, a, b):
        self.a, self.b = a, b

    def value(self, u):
        return float(u @ self.a @ u) / float(u @ self.b @ u)

    def grad(self, u):
        bu = self.b @ u
        den = float(u @ bu)
        f = float(u @ self.a @ u) / den
        return 2.0 * (self.a @ u - f * bu) / den, f


def _project(v):
    v = np.maximum(v, 0.0)
    nv = np.linalg.norm(v)
    return None if nv == 0.0 else v / nv


def _ascend(q, u, max_iter, tol):
    """Projected gradient ascent on the non-negative part of the sphere."""
    f = q.value(u)
    step = 1.0
    for it in range(max_iter):
        g, f = q.grad(u)
        gn = np.linalg.norm(g)
        if gn == 0.0:
            return u, f, it
        step = max(step, 1e-12) * 2.0
        while True:
            cand = _project(u + (step / gn) * g)
            if cand is not None:
                fc = q.value(cand)
                if fc >= f + 1e-4 * float(g @ (cand - u)) and fc >= f:
                    break
            step *= 0.5
            if step < 1e-14:
                return u, f, it
        cos = float(cand @ u)
        u, f_old, f = cand, f, fc
        if cos > 1.0 - tol and f - f_old <= 1e-15 * abs(f):
            return u, f, it + 1
    return u, f, max_iter


def _face_polish(q, u):
    """Exact maximizer on the face spanned by the support of ``u``, if it is
    interior to that face."""
    s = np.flatnonzero(u > 0)
    if s.size == 0:
        return u
    lam, vec = linalg.eigh(q.a[np.ix_(s, s)], q.b[np.ix_(s, s)])
    v = vec[:, -1]
    if np.all(v <= 0):
        v = -v
    if not np.all(v > 0):
        return u
    cand = np.zeros_like(u)
    cand[s] = v / np.linalg.norm(v)
    return cand if q.value(cand) >= q.value(u) else u


def maximize_quotient(a, b, starts, max_iter=5000, tol=1e-14):
    """Best local maximizer of ``u^T a u / u^T b u`` over ``u >= 0``, ``||u|| = 1``.

    Each start is refined by projected gradient ascent, polished on its
    support face, and re-ascended while a coordinate outside the support
    still has a positive gradient (KKT violation).
    """
    q = _Quotient(a, b)
    best_u, best_f, iters = None, -np.inf, 0
    for u0 in starts:
        u = _project(np.asarray(u0, dtype=np.float64))
        if u is None:
            continue
        for _ in range(50):
            u, f, it = _ascend(q, u, max_iter, tol)
            iters += it
            u = _face_polish(q, u)
            g, f = q.grad(u)
            off = u <= 0
            kkt_tol = 1e-10 * max(np.abs(g).max(), f, 1e-300)
            if not np.any(g[off] > kkt_tol):
                break
            i = np.flatnonzero(off)[np.argmax(g[off])]
            u = u.copy()
            u[i] += 1e-3
            u = _project(u)
        if f > best_f:
            best_u, best_f = u, f
    return best_u, best_f, iters


def _starts(c, restarts):
    n = c.shape[0]
    norms = np.linalg.norm(c, axis=1)
    order = np.argsort(-norms, kind="stable")[: max(restarts - 1, 0)]
    starts = []
    for i in order:
        e = np.zeros(n)
        e[i] = 1.0
        starts.append(e)
    left = np.linalg.svd(c, full_matrices=False)[0]
    starts.append(np.abs(left[:, 0]))
    return starts


def popls(data, config=None) -> SolverResult:
    """Positive OPLS: maximize the ridge-regularized quotient over unit-norm
    non-negative vectors, one filter at a time with Schur deflation between
    filters. ``w`` in the result is the least-squares refit for the bank."""
    t0 = time.perf_counter()
    config = config or SolverConfig()
    cov = as_covariances(data)
    n, m = cov.cxy.shape
    check_n_f(config.n_f, n)
    tau = default_ridge(cov.cxx, config.ridge_tau)
    b = cov.cxx + tau * np.eye(n)
    report = SolverReport("popls")
    report.extras["ridge_tau"] = tau
    tol = config.tolerance(1e-14)

    c = cov.cxy.copy()
    c0 = float(np.linalg.norm(c))
    cols = []
    for j in range(config.n_f):
        cnorm = float(np.linalg.norm(c))
        if c0 == 0.0 or cnorm <= 1e-12 * c0:
            report.warnings.append(f"deflation exhausted C_XY after {j} filters")
            break
        u, f, iters = maximize_quotient(c @ c.T, b, _starts(c, config.popls_restarts),
                                        max_iter=max(config.max_outer_iterations, 1000),
                                        tol=tol)
        if u is None or np.linalg.norm(c.T @ u) <= 1e-12 * cnorm:
            report.warnings.append(f"deflation exhausted C_XY at filter {j}")
            break
        report.inner_iterations.append(iters)
        report.extras.setdefault("quotients", []).append(f)
        cols.append(u)
        c = schur_deflate(c, u)
        report.deflation_residuals.append(float(np.linalg.norm(u @ c) / cnorm))
        report.loss_trajectory.append(bank_loss(cov, np.column_stack(cols)))
        report.outer_iterations = j + 1

    u = np.column_stack(cols) if cols else np.zeros((n, 1))
    if not cols:
        report.loss_trajectory.append(float(np.trace(cov.cyy)))
    zero = [j for j in range(u.shape[1]) if not np.any(u[:, j])]
    report.n_filters = u.shape[1] - len(zero)
    report.degenerate_columns = zero
    report.wall_time = time.perf_counter() - t0
    bank = FilterBank(u, "popls", True, {}, getattr(data, "mu_x", None),
                      {"degenerate_columns": zero})
    return SolverResult(bank, refit_w(cov, u), report)


def opls_baseline(data, config=None) -> SolverResult:
    """Unconstrained OPLS: top generalized eigenvectors of
    ``(C_XY C_XY^T, C_XX + tau I)``, eigenvalue-ordered."""
    t0 = time.perf_counter()
    config = config or SolverConfig()
    cov = as_covariances(data)
    n = cov.n_features
    check_n_f(config.n_f, n)
    tau = default_ridge(cov.cxx, config.ridge_tau)
    b = cov.cxx + tau * np.eye(n)
    a = cov.cxy @ cov.cxy.T
    lam, vec = linalg.eigh(a, b, subset_by_index=[n - config.n_f, n - 1])
    order = np.argsort(-lam, kind="stable")
    u = sign_by_largest(vec[:, order])
    report = SolverReport("opls")
    report.extras["ridge_tau"] = tau
    report.extras["eigenvalues"] = lam[order].tolist()
    report.outer_iterations = 1
    report.loss_trajectory.append(bank_loss(cov, u))
    report.n_filters = config.n_f
    report.wall_time = time.perf_counter() - t0
    bank = FilterBank(u, "opls", True, {}, getattr(data, "mu_x", None), {})
    return SolverResult(bank, refit_w(cov, u), report)
