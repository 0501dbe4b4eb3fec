"""Non-negative least squares by block principal pivoting.

Solves ``min ||a x - b||^2`` subject to ``x >= 0`` for one or many right-hand
sides. The solver works on the normal equations (``a^T a``, ``a^T b``) so that
callers holding precomputed Gram matrices, such as the U-step of the filter
bank solvers, can use :func:`nnls_gram` directly and share ``a^T a`` across
columns.

The pivoting rule exchanges the whole infeasible set while the number of
infeasible variables keeps decreasing, allows three non-improving full
exchanges, and otherwise falls back to exchanging only the infeasible variable
with the largest index, which guarantees finite termination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import InputError, NnlsConvergenceError

__all__ = ["NnlsSolution", "nnls_solve", "nnls_gram", "default_kkt_tolerance"]


@dataclass(frozen=True)
class NnlsSolution:
    x: np.ndarray
    kkt_residual: float
    iterations: int
    dropped_columns: tuple = ()

    @property
    def objective_gap_bound(self):
        return self.kkt_residual


def default_kkt_tolerance(atb) -> float:
    atb = np.asarray(atb)
    scale = float(np.max(np.abs(atb))) if atb.size else 0.0
    return 1e-10 * max(1.0, scale)


def _passive_solve(ata, atb, passive, ridge):
    x = np.zeros_like(atb)
    if passive.any():
        c = ata[np.ix_(passive, passive)]
        rhs = atb[passive]
        try:
            fac = linalg.cho_factor(c, check_finite=False)
            sol = linalg.cho_solve(fac, rhs, check_finite=False)
        except linalg.LinAlgError:
            c = c + ridge * np.eye(c.shape[0])
            sol = linalg.solve(c, rhs, assume_a="sym", check_finite=False)
        if not np.all(np.isfinite(sol)):
            c = c + ridge * np.eye(c.shape[0])
            sol = linalg.solve(c, rhs, assume_a="sym", check_finite=False)
        x[passive] = sol
    y = ata @ x - atb
    y[passive] = 0.0
    return x, y


def _kkt_violation(ata, atb, x):
    # gradient of 0.5||ax-b||^2; must be >= 0 where x == 0 and == 0 where x > 0
    y = ata @ x - atb
    pos = x > 0
    v = 0.0
    if pos.any():
        v = max(v, float(np.max(np.abs(y[pos]))))
    if (~pos).any():
        v = max(v, float(np.max(-y[~pos])))
    return max(v, 0.0)


def _bpp_column(ata, atb, tol, max_iter, ridge):
    q = atb.size
    passive = np.zeros(q, dtype=bool)
    x = np.zeros(q)
    y = -atb.copy()
    alpha, beta = 3, q + 1
    best_x, best_count = x.copy(), q + 1
    for it in range(max_iter + 1):
        xtol = 1e-12 * max(1.0, float(np.max(np.abs(x))))
        infeasible = (passive & (x < -xtol)) | (~passive & (y < -tol))
        count = int(infeasible.sum())
        if count == 0:
            return np.where(passive, np.maximum(x, 0.0), 0.0), it
        if count < best_count:
            best_count, best_x = count, np.maximum(x, 0.0)
        if it == max_iter:
            break
        if count < beta:
            beta, alpha = count, 3
            flip = infeasible
        elif alpha >= 1:
            alpha -= 1
            flip = infeasible
        else:
            flip = np.zeros(q, dtype=bool)
            flip[np.flatnonzero(infeasible)[-1]] = True
        passive = passive ^ flip
        x, y = _passive_solve(ata, atb, passive, ridge)
    raise NnlsConvergenceError(
        f"block principal pivoting did not terminate after {max_iter} iterations",
        best_x=best_x,
        iterations=max_iter,
    )


def nnls_gram(ata, atb, kkt_tolerance=None, max_pivot_iterations=None) -> NnlsSolution:
    """Solve NNLS given ``ata = a^T a`` (q x q) and ``atb = a^T b`` (q or q x r).

    Parameters
    ----------
    ata : ndarray, shape (q, q)
        Symmetric positive semidefinite Gram matrix.
    atb : ndarray, shape (q,) or (q, r)
        Correlations of the design with each right-hand side.
    kkt_tolerance : float, optional
        Tolerance of the dual feasibility certificate. Defaults to
        ``1e-10 * max(1, max|atb|)``.
    max_pivot_iterations : int, optional
        Per-column pivoting budget, ``5 * q`` by default.

    Returns
    -------
    NnlsSolution
        ``x`` has the same trailing shape as ``atb``. Columns of the design
        that are identically zero (zero diagonal in ``ata``) are fixed at
        zero and listed in ``dropped_columns``.
    """
    ata = np.asarray(ata, dtype=np.float64)
    atb = np.asarray(atb, dtype=np.float64)
    vector = atb.ndim == 1
    if vector:
        atb = atb[:, None]
    q = ata.shape[0]
    if ata.shape != (q, q) or atb.shape[0] != q or q < 1 or atb.shape[1] < 1:
        raise InputError(f"incompatible NNLS shapes {ata.shape} and {atb.shape}")
    tol = default_kkt_tolerance(atb) if kkt_tolerance is None else float(kkt_tolerance)
    if max_pivot_iterations is None:
        max_pivot_iterations = 5 * q

    keep = np.diag(ata) > 0
    dropped = tuple(int(i) for i in np.flatnonzero(~keep))
    x = np.zeros_like(atb)
    iterations = 0
    if keep.any():
        sub = ata[np.ix_(keep, keep)]
        ridge = 1e-12 * np.trace(sub) / sub.shape[0]
        for j in range(atb.shape[1]):
            try:
                xj, it = _bpp_column(sub, atb[keep, j], tol, max_pivot_iterations, ridge)
            except NnlsConvergenceError as exc:
                best = x.copy()
                best[keep, j] = exc.best_x
                raise NnlsConvergenceError(str(exc), best_x=best, iterations=exc.iterations) from None
            x[keep, j] = xj
            iterations = max(iterations, it)
    resid = max(_kkt_violation(ata, atb[:, j], x[:, j]) for j in range(atb.shape[1]))
    return NnlsSolution(x[:, 0] if vector else x, resid, iterations, dropped)


def nnls_solve(a, b, kkt_tolerance=None, max_pivot_iterations=None) -> NnlsSolution:
    """Solve ``min ||a x - b||^2`` subject to ``x >= 0``.

    >>> nnls_solve([[2.0, 1.0], [1.0, 2.0]], [1.0, -1.0]).x
    array([0.2, 0. ])
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[0] != b.shape[0]:
        raise InputError(f"incompatible NNLS shapes {a.shape} and {b.shape}")
    return nnls_gram(a.T @ a, a.T @ b, kkt_tolerance, max_pivot_iterations)
