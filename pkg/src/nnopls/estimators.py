"""scikit-learn transformer wrapping the solvers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dataset import RawDataset, center, encode_targets
from .filterbank import extract
from .solvers import SolverConfig, design


class NonNegativeOPLS(TransformerMixin, BaseEstimator):
    """Learn a non-negative filter bank and project samples onto it.

    Follows the scikit-learn row convention: ``X`` is ``(n_samples, n_features)``.
    ``y`` may be class labels (1-D, one-hot encoded internally) or a target
    matrix ``(n_samples, n_targets)``. ``transform`` returns the filter
    outputs of the uncentered spectra, ``(n_samples, n_f)``.
    """

    def __init__(self, n_components=2, method="nopls", delta=None, max_iter=1000,
                 ridge_tau=None, restarts=5):
        self.n_components = n_components
        self.method = method
        self.delta = delta
        self.max_iter = max_iter
        self.ridge_tau = ridge_tau
        self.restarts = restarts

    def fit(self, X, y):
        x = np.asarray(X, dtype=np.float64).T
        y = np.asarray(y)
        if y.ndim == 1:
            self.classes_, idx = np.unique(y, return_inverse=True)
            t = encode_targets(idx, self.classes_.size)
        else:
            t = np.asarray(y, dtype=np.float64).T
        raw = RawDataset(x, t)
        cfg = SolverConfig(n_f=self.n_components, delta=self.delta,
                           max_outer_iterations=self.max_iter, ridge_tau=self.ridge_tau,
                           popls_restarts=self.restarts)
        data = raw if self.method == "nmf_opls" else center(raw)
        res = design(self.method, data, cfg)
        self.bank_ = res.bank
        self.components_ = res.bank.u.T.copy()
        self.w_ = res.w
        self.report_ = res.report
        self.n_features_in_ = x.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "bank_")
        x = np.asarray(X, dtype=np.float64).T
        return extract(self.bank_, x).x_prime.T
