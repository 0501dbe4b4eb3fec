"""Synthetic spectral datasets with known ground truth."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .dataset import RawDataset, read_labels, read_matrix, write_labels, write_matrix

__all__ = ["PlantedProblem", "planted_problem", "BandDataset", "band_dataset", "bundled_dataset",
           "write_bundled_dataset"]


@dataclass(frozen=True)
class PlantedProblem:
    raw: RawDataset
    u_true: np.ndarray
    w_true: np.ndarray
    noise: np.ndarray

    @property
    def noise_floor(self):
        """Squared norm of the centered noise: the loss of the true model."""
        e = self.noise - self.noise.mean(axis=1, keepdims=True)
        return float(np.sum(e * e))

    def support(self):
        return [set(np.flatnonzero(self.u_true[:, j])) for j in range(self.u_true.shape[1])]


def planted_problem(n=50, n_f=3, m=5, n_samples=500, support_fraction=0.1, snr_db=20.0,
                    decay=0.7, seed=0) -> PlantedProblem:
    """``Y = W* U*^T X + E`` with a sparse non-negative ``U*``.

    Filters have disjoint random supports (so they are mutually orthogonal)
    and column ``j`` is scaled by ``decay**j`` so their relevance order is
    well defined. ``W*`` has random orthonormal columns, ``X`` is uniform on
    ``[0, 1)`` and the gaussian noise is sized for the requested SNR of the
    centered signal.
    """
    rng = np.random.default_rng(seed)
    k = max(1, int(round(support_fraction * n)))
    if k * n_f > n:
        raise ValueError("supports do not fit disjointly")
    perm = rng.permutation(n)
    u = np.zeros((n, n_f))
    for j in range(n_f):
        u[perm[j * k:(j + 1) * k], j] = rng.uniform(0.5, 1.5, k) * decay ** j
    w = np.linalg.qr(rng.standard_normal((m, n_f)))[0]
    x = rng.random((n, n_samples))
    s = w @ u.T @ x
    sc = s - s.mean(axis=1, keepdims=True)
    sigma = np.sqrt(np.mean(sc * sc) / 10 ** (snr_db / 10))
    e = sigma * rng.standard_normal(s.shape)
    return PlantedProblem(RawDataset(x, s + e), u, w, e)


@dataclass(frozen=True)
class BandDataset:
    raw: RawDataset
    bands: tuple

    def band_mask(self):
        mask = np.zeros(self.raw.n_features, dtype=bool)
        for lo, hi in self.bands:
            mask[lo:hi] = True
        return mask


def band_dataset(n_bins=64, bands=((10, 16), (40, 48)), groups_per_class=20,
                 samples_per_group=5, boost=0.5, gain_spread=0.05, seed=0) -> BandDataset:
    """Three-class spectra that differ only inside two frequency bands.

    Every sample is a shared ``1/f``-like profile times a random gain (drawn
    per group, then jittered per sample) with mild per-bin multiplicative
    noise; ``gain_spread`` is the log-scale spread of the group gain. Class 1
    adds energy in the first band, class 2 in the second and class 0 is the
    plain background. Groups stand for the recording a sample
    came from; all samples of a group share a class.
    """
    rng = np.random.default_rng(seed)
    k = np.arange(n_bins)
    profile = 1.0 / (1.0 + k / 8.0)
    cols, labels, groups = [], [], []
    g_id = 0
    for cls in range(3):
        for _ in range(groups_per_class):
            gain = np.exp(gain_spread * rng.standard_normal())
            for _ in range(samples_per_group):
                g = gain * np.exp(0.05 * rng.standard_normal())
                x = g * profile * np.exp(0.05 * rng.standard_normal(n_bins))
                if cls > 0:
                    lo, hi = bands[cls - 1]
                    x[lo:hi] += boost * rng.uniform(0.7, 1.3) * g * profile[lo:hi]
                cols.append(x)
                labels.append(cls)
                groups.append(g_id)
            g_id += 1
    order = rng.permutation(len(cols))
    x = np.column_stack(cols)[:, order]
    labels = np.array(labels)[order]
    groups = np.array(groups)[order]
    return BandDataset(RawDataset.from_labels(x, labels, 3, groups), tuple(bands))


BUNDLED_FILES = ("synthetic_inputs.csv", "synthetic_labels.csv", "synthetic_groups.csv")


def write_bundled_dataset(directory):
    """Write ``band_dataset(seed=0)`` as the three CSV files shipped with the package."""
    d = Path(directory)
    raw = band_dataset(seed=0).raw
    write_matrix(d / BUNDLED_FILES[0], raw.inputs)
    write_labels(d / BUNDLED_FILES[1], raw.class_labels)
    write_labels(d / BUNDLED_FILES[2], raw.groups)


def bundled_dataset() -> RawDataset:
    """The packaged three-class band dataset (64 bins, 300 samples, 60 groups)."""
    root = resources.files("nnopls") / "data"
    with resources.as_file(root) as d:
        x = read_matrix(d / BUNDLED_FILES[0])
        labels = read_labels(d / BUNDLED_FILES[1])
        groups = read_labels(d / BUNDLED_FILES[2])
    return RawDataset.from_labels(x, labels, 3, groups)
