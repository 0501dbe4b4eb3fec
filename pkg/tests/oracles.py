"""Independent reference computations used by the tests.

Each oracle reaches its answer by a different route than the package code:
exhaustive enumeration, dense brute-force grids or explicit summations.
"""

import itertools

import numpy as np

from nnopls.dataset import RawDataset, center, covariances


def nnls_enumerate(ata, atb):
    """Exact NNLS by trying every passive set and keeping the best feasible one."""
    q = ata.shape[0]
    best_x, best_f = np.zeros(q), 0.0
    for r in range(1, q + 1):
        for s in itertools.combinations(range(q), r):
            s = list(s)
            sol = np.linalg.lstsq(ata[np.ix_(s, s)], atb[s], rcond=None)[0]
            if np.any(sol < 0):
                continue
            x = np.zeros(q)
            x[s] = sol
            f = float(x @ ata @ x - 2 * atb @ x)
            if f < best_f:
                best_x, best_f = x, f
    return best_x, best_f


def nnls_objective(ata, atb, x):
    return float(x @ ata @ x - 2 * atb @ x)


def octant_grid(step_deg=0.5):
    """Unit vectors of the non-negative octant of the 2-sphere."""
    ang = np.deg2rad(np.arange(0.0, 90.0 + 1e-9, step_deg))
    th, ph = np.meshgrid(ang, ang, indexing="ij")
    return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1).reshape(-1, 3)


def grid_oracle_loss(cov, step_deg=0.5):
    """Smallest single-filter loss over the octant grid (W and scale optimal).

    For a fixed direction u the best loss is ``tr(Cyy) - |Cxy^T u|^2 / u^T Cxx u``.
    """
    g = octant_grid(step_deg)
    num = np.sum((g @ cov.cxy) ** 2, axis=1)
    den = np.einsum("ij,jk,ik->i", g, cov.cxx, g)
    ok = den > 0
    return float(np.trace(cov.cyy) - np.max(num[ok] / den[ok]))


def direct_dft2(img):
    """Two-dimensional DFT by explicit summation over all pixel pairs."""
    h, w = img.shape
    out = np.zeros((h, w), dtype=complex)
    a = np.arange(h)
    b = np.arange(w)
    for k in range(h):
        for l in range(w):
            phase = np.exp(-2j * np.pi * (k * a[:, None] / h + l * b[None, :] / w))
            out[k, l] = np.sum(img * phase)
    return out


def direct_periodogram(s):
    L = len(s)
    t = np.arange(L)
    return np.array([abs(np.sum(s * np.exp(-2j * np.pi * k * t / L))) ** 2 / L
                     for k in range(L // 2 + 1)])


def random_problem(rng, n, m, N):
    x = rng.random((n, N))
    y = rng.standard_normal((m, N))
    raw = RawDataset(x, y)
    c = center(raw)
    return raw, c, covariances(c)
