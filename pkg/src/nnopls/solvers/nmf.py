"""NMF-OPLS: both factors non-negative, fitted on the uncentered data by
floored multiplicative updates."""

from __future__ import annotations

import time

import numpy as np

from ..dataset import CovarianceSet, RawDataset
from ..exceptions import DegenerateProjectionError, InputError, PreconditionError
from ..filterbank import FilterBank
from ._common import SolverConfig, SolverReport, SolverResult, check_n_f

__all__ = ["nndsvd_init", "mu_update", "scaled_loss", "nmf_opls"]


def nndsvd_init(cxy_bar, n_f):
    """NNDSVDa initialization of ``cxy_bar ~ u0 w0^T``.

    For every singular triplet the dominant sign-consistent part (positive or
    negative halves of both singular vectors) is kept and scaled by the
    square root of its weight. Zeros, including the columns beyond
    ``min(n, m)``, are replaced by the mean of ``cxy_bar``.
    """
    c = np.asarray(cxy_bar, dtype=np.float64)
    if c.ndim != 2:
        raise InputError("cxy_bar must be a matrix")
    if np.any(c < 0):
        raise PreconditionError("NNDSVD needs a non-negative matrix")
    if not np.any(c):
        raise DegenerateProjectionError("NNDSVD of a zero matrix is undefined")
    n, m = c.shape
    left, sv, right_t = np.linalg.svd(c, full_matrices=False)
    u0 = np.zeros((n, n_f))
    w0 = np.zeros((m, n_f))
    u0[:, 0] = np.sqrt(sv[0]) * np.abs(left[:, 0])
    w0[:, 0] = np.sqrt(sv[0]) * np.abs(right_t[0])
    for j in range(1, min(n_f, sv.size)):
        x, y = left[:, j], right_t[j]
        xp, xn = np.maximum(x, 0), np.maximum(-x, 0)
        yp, yn = np.maximum(y, 0), np.maximum(-y, 0)
        nxp, nyp = np.linalg.norm(xp), np.linalg.norm(yp)
        nxn, nyn = np.linalg.norm(xn), np.linalg.norm(yn)
        mp, mn = nxp * nyp, nxn * nyn
        if mp == 0.0 and mn == 0.0:
            continue
        if mp > mn:
            a, b, sigma = xp / nxp, yp / nyp, mp
        else:
            a, b, sigma = xn / nxn, yn / nyn, mn
        lbd = np.sqrt(sv[j] * sigma)
        u0[:, j] = lbd * a
        w0[:, j] = lbd * b
    avg = c.mean()
    u0[u0 == 0] = avg
    w0[w0 == 0] = avg
    return u0, w0


def _ratio(num, den):
    out = np.ones_like(num)
    nz = den != 0
    out[nz] = num[nz] / den[nz]
    return out


def mu_update(cov: CovarianceSet, u, w, epsilon=1e-16):
    """One floored multiplicative sweep: W first, then U, then Frobenius
    normalization of each factor. Zero denominators leave the entry as is."""
    c, cxx = cov.cxy, cov.cxx
    w = np.maximum(epsilon, w * _ratio(c.T @ u, w @ (u.T @ cxx @ u)))
    u = np.maximum(epsilon, u * _ratio(c @ w, cxx @ u @ (w.T @ w)))
    return u / np.linalg.norm(u), w / np.linalg.norm(w)


def scaled_loss(cov: CovarianceSet, u, w):
    """Loss of ``alpha * W U^T`` at the best global scale ``alpha >= 0``.

    Both factors are renormalized every sweep, so the product only carries a
    direction; the scale is recovered in closed form.
    """
    num = float(np.sum((cov.cxy @ w) * u))
    den = float(np.sum((u.T @ cov.cxx @ u) * (w.T @ w)))
    cyy = float(np.trace(cov.cyy))
    if den <= 0.0:
        return cyy, 0.0
    alpha = max(num, 0.0) / den
    return cyy - alpha * max(num, 0.0), alpha


def nmf_opls(raw, config=None) -> SolverResult:
    """Non-negative U and W for ``||Ybar - W U^T Xbar||_F^2`` on uncentered data.

    Stops when ``||U_k - U_{k-1}||_F <= delta * ||U_k||_F`` (``delta`` defaults
    to ``1e-9``). Filters are not relevance-ordered. The reported loss uses
    the optimal global scale, stored in ``report.extras["scale"]``.
    """
    t0 = time.perf_counter()
    config = config or SolverConfig()
    if not isinstance(raw, RawDataset):
        raise InputError("nmf_opls works on the uncentered RawDataset")
    if np.any(raw.targets < 0):
        i, j = np.argwhere(raw.targets < 0)[0]
        raise PreconditionError(
            f"nmf_opls needs non-negative targets; found {raw.targets[i, j]!r} at ({i}, {j})"
        )
    x, y = raw.inputs, raw.targets
    cov = CovarianceSet(x @ x.T, x @ y.T, y @ y.T)
    n = cov.n_features
    check_n_f(config.n_f, n)
    eps = config.epsilon_floor
    tol = config.tolerance(1e-9)
    report = SolverReport("nmf_opls", unordered=True)

    u, w = nndsvd_init(cov.cxy, config.n_f)
    u = np.maximum(eps, u / np.linalg.norm(u))
    w = np.maximum(eps, w / np.linalg.norm(w))
    loss0, _ = scaled_loss(cov, u, w)
    report.extras["initial_loss"] = loss0
    best = None
    report.stop_reason = "max_iterations"
    for it in range(1, config.max_outer_iterations + 1):
        u_new, w = mu_update(cov, u, w, eps)
        step = float(np.linalg.norm(u_new - u))
        u = u_new
        loss, alpha = scaled_loss(cov, u, w)
        report.loss_trajectory.append(loss)
        report.outer_iterations = it
        if best is None or loss < best[0]:
            best = (loss, u, w, alpha)
        if step <= tol * np.linalg.norm(u):
            report.stop_reason = "tolerance"
            break
    if report.stop_reason == "max_iterations":
        _, u, w, alpha = best
    report.extras["scale"] = alpha
    report.n_filters = config.n_f
    report.unordered = True
    report.wall_time = time.perf_counter() - t0
    bank = FilterBank(u, "nmf_opls", False, {}, raw.inputs.mean(axis=1),
                      {"degenerate_columns": []})
    return SolverResult(bank, w, report)
