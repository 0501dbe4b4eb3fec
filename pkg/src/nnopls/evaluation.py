"""Grouped cross-validation of filter banks with a ridge classifier."""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import linalg

from .dataset import RawDataset, atomic_write_text, center, read_labels, read_matrix
from .exceptions import ConfigurationError, DimensionMismatchError, InputError, NnoplsError
from .filterbank import FeatureMatrix, FilterBank, extract, interpretability, nz_rate
from .solvers import METHODS, RELEVANCE_ORDERED, SolverConfig, design

__all__ = [
    "GroupedSplit",
    "LinearModel",
    "EvalReport",
    "ExperimentConfig",
    "DEFAULT_LAMBDA_GRID",
    "grouped_kfold",
    "ridge_fit",
    "predict",
    "run_experiment",
    "load_experiment_config",
    "thread_cap",
]

DEFAULT_LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)


def thread_cap(default=None):
    """Worker count from ``NNOPLS_THREADS`` (unset or invalid means ``default``)."""
    raw = os.environ.get("NNOPLS_THREADS")
    if raw:
        try:
            v = int(raw)
            if v >= 1:
                return v
        except ValueError:
            pass
    return default if default is not None else min(4, os.cpu_count() or 1)


@dataclass(frozen=True)
class GroupedSplit:
    fold_assignments: np.ndarray
    groups: np.ndarray
    k: int

    def folds(self):
        """``(train_idx, test_idx)`` pairs in fold order."""
        for f in range(self.k):
            test = np.flatnonzero(self.fold_assignments == f)
            train = np.flatnonzero(self.fold_assignments != f)
            yield train, test


def grouped_kfold(groups, k, seed=0) -> GroupedSplit:
    """Shuffle the distinct groups with ``seed`` and deal them round-robin to
    ``k`` folds, so every group lands in exactly one fold."""
    groups = np.asarray(groups)
    if k < 2:
        raise ConfigurationError("grouped k-fold needs k >= 2 (no held-out data otherwise)")
    uniq = np.unique(groups)
    if uniq.size < k:
        raise ConfigurationError(f"{uniq.size} distinct groups cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(uniq.size)
    fold_of = {uniq[g]: i % k for i, g in enumerate(order)}
    folds = np.array([fold_of[g] for g in groups], dtype=int)
    return GroupedSplit(folds, groups.copy(), int(k))


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: np.ndarray
    lam: float


def _feature_array(features):
    if isinstance(features, FeatureMatrix):
        return features.uncentered
    f = np.asarray(features, dtype=np.float64)
    return f[None, :] if f.ndim == 1 else f


def ridge_fit(features, targets, lam, solver="cholesky") -> LinearModel:
    """Ridge regression of one-hot ``targets`` (m x N) on ``features`` (n_f x N).

    Features and targets are centered, the weights solve
    ``W (F F^T + lam I) = Y F^T`` and the bias absorbs the means.
    ``solver`` selects a Cholesky solve or an eigendecomposition of the Gram
    matrix; both routes give the same weights.
    """
    f = _feature_array(features)
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[None, :]
    if f.shape[1] != y.shape[1]:
        raise DimensionMismatchError("features and targets must have the same number of samples")
    if not lam > 0:
        raise ConfigurationError("ridge lambda must be > 0")
    mf, my = f.mean(axis=1), y.mean(axis=1)
    fc, yc = f - mf[:, None], y - my[:, None]
    gram = fc @ fc.T
    rhs = fc @ yc.T
    if solver == "cholesky":
        coef = linalg.cho_solve(linalg.cho_factor(gram + lam * np.eye(gram.shape[0])), rhs)
    elif solver == "eigh":
        lam_g, vec = linalg.eigh(gram)
        coef = vec @ ((vec.T @ rhs) / (np.clip(lam_g, 0.0, None) + lam)[:, None])
    else:
        raise ConfigurationError(f"unknown ridge solver {solver!r}")
    w = coef.T
    return LinearModel(w, my - w @ mf, float(lam))


def predict(model: LinearModel, features) -> np.ndarray:
    """Arg-max class per sample; exact ties go to the lowest class index."""
    f = _feature_array(features)
    if f.shape[0] != model.weights.shape[1]:
        raise DimensionMismatchError(
            f"model expects {model.weights.shape[1]} features, got {f.shape[0]}"
        )
    scores = model.weights @ f + model.bias[:, None]
    return np.argmax(scores, axis=0)


def _accuracy(pred, labels):
    return 100.0 * float(np.mean(pred == labels))


@dataclass
class EvalReport:
    """Cross-validated accuracy of one method.

    ``oa_percent`` pools all test predictions (``100 * trace(confusion) / N``);
    ``mean_fold_oa`` is the plain average of ``per_fold_oa``.
    """

    method: str
    n_f: int
    oa_percent: float
    mean_fold_oa: float
    per_fold_oa: list
    nz: Optional[float]
    im: Optional[float]
    n_ref: int
    confusion: list
    per_k_oa: Optional[list] = None
    truncation_meaningful: bool = True
    lambdas: list = field(default_factory=list)
    fold_failures: list = field(default_factory=list)
    solver_reports: list = field(default_factory=list)
    per_k_fold_oa: dict = field(default_factory=dict)
    n_f_requested: Optional[int] = None
    wall_time: float = 0.0

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    def csv_rows(self):
        """One row per (method, k, fold), the layout used for OA-vs-n_f curves."""
        rows = []
        for k in sorted(self.per_k_fold_oa):
            for fold, oa in enumerate(self.per_k_fold_oa[k]):
                lam = self.lambdas[fold] if k == self.n_f and fold < len(self.lambdas) else None
                rows.append({"method": self.method, "k": k, "fold": fold, "oa_percent": oa,
                             "lambda": lam, "nz": self.nz, "im": self.im})
        return rows


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _standardize(f_train, f_test):
    mu = f_train.mean(axis=1, keepdims=True)
    sd = f_train.std(axis=1, keepdims=True)
    sd[sd <= 1e-12 * max(1.0, float(np.abs(mu).max()))] = 1.0
    return (f_train - mu) / sd, (f_test - mu) / sd


def _pick_lambda(f, y, labels, groups, grid, seed):
    """Grid search on one 80/20 grouped split; ties keep the earliest value."""
    if np.unique(groups).size < 5:
        return grid[len(grid) // 2]
    split = grouped_kfold(groups, 5, seed)
    train, val = next(split.folds())
    best, best_acc = grid[0], -1.0
    for lam in grid:
        model = ridge_fit(f[:, train], y[:, train], lam)
        acc = _accuracy(predict(model, f[:, val]), labels[val])
        if acc > best_acc:
            best, best_acc = lam, acc
    return best


def _live(bank: FilterBank) -> FilterBank:
    dead = set(bank.flags.get("degenerate_columns", []))
    keep = [j for j in range(bank.n_f) if j not in dead and np.any(bank.u[:, j])]
    if len(keep) == bank.n_f:
        return bank
    if not keep:
        return bank
    return FilterBank(bank.u[:, keep], bank.method, bank.ordered_by_relevance, bank.preproc,
                      bank.mu_x, {**bank.flags, "degenerate_columns": []})


def _run_fold(raw, method, config, train, test, grid, seed, n_classes):
    tr, te = raw.subset(train), raw.subset(test)
    if isinstance(method, FilterBank):
        bank, rep = method, None
    else:
        data = tr if method == "nmf_opls" else center(tr)
        res = design(method, data, config)
        bank, rep = _live(res.bank), res.report.to_dict()
    f_tr = extract(bank, tr.inputs).x_prime
    f_te = extract(bank, te.inputs).x_prime
    f_tr, f_te = _standardize(f_tr, f_te)
    y_tr = tr.targets
    ordered = bank.ordered_by_relevance
    ks = range(1, bank.n_f + 1) if ordered else [bank.n_f]
    oa_by_k, lam_used, conf = {}, None, None
    for k in ks:
        lam = _pick_lambda(f_tr[:k], y_tr, tr.class_labels, tr.groups, grid, seed)
        model = ridge_fit(f_tr[:k], y_tr, lam)
        pred = predict(model, f_te[:k])
        oa_by_k[k] = _accuracy(pred, te.class_labels)
        if k == bank.n_f:
            lam_used = lam
            conf = np.zeros((n_classes, n_classes), dtype=int)
            np.add.at(conf, (te.class_labels.astype(int), pred), 1)
    return bank, rep, oa_by_k, lam_used, conf


def run_experiment(dataset: RawDataset, method, config: Optional[SolverConfig] = None,
                   split: Optional[GroupedSplit] = None, lambda_grid=DEFAULT_LAMBDA_GRID,
                   n_ref=None, seed=0, threads=None) -> EvalReport:
    """Cross-validate ``method`` (a solver name or a fixed FilterBank).

    Per fold the bank is designed on the training partition only, features
    are standardized with training statistics, lambda is chosen on an inner
    grouped split of the training data and the test predictions are pooled
    into the confusion matrix. Relevance-ordered banks are also scored for
    every prefix of ``k`` filters. A solver failure marks the fold as failed
    and the remaining folds still count.
    """
    t0 = time.perf_counter()
    config = config or SolverConfig()
    if dataset.class_labels is None:
        raise InputError("run_experiment needs class labels")
    if split is None:
        if dataset.groups is None:
            raise InputError("no split given and the dataset has no groups")
        split = grouped_kfold(dataset.groups, 5, seed)
    if dataset.groups is None:
        dataset = RawDataset(dataset.inputs, dataset.targets, dataset.class_labels,
                             np.arange(dataset.n_samples))
    if isinstance(method, str) and method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}")
    n_classes = dataset.n_targets
    n_ref = n_classes if n_ref is None else n_ref
    grid = tuple(sorted(float(v) for v in lambda_grid))

    folds = list(split.folds())

    def job(i):
        train, test = folds[i]
        try:
            return i, _run_fold(dataset, method, config, train, test, grid, seed + 1 + i,
                                n_classes), None
        except NnoplsError as exc:
            return i, None, f"{type(exc).__name__}: {exc}"

    workers = thread_cap() if threads is None else threads
    if workers > 1 and len(folds) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(folds))) as ex:
            results = list(ex.map(job, range(len(folds))))
    else:
        results = [job(i) for i in range(len(folds))]
    results.sort(key=lambda r: r[0])

    confusion = np.zeros((n_classes, n_classes), dtype=int)
    per_fold, lambdas, failures, reports = [], [], [], []
    oa_k: dict = {}
    first_bank = None
    n_f = None
    for i, out, err in results:
        if err is not None:
            failures.append({"fold": i, "error": err})
            continue
        bank, rep, oa_by_k, lam, conf = out
        if first_bank is None:
            first_bank = bank
            n_f = bank.n_f
        confusion += conf
        per_fold.append(oa_by_k[bank.n_f])
        lambdas.append(lam)
        if rep is not None:
            reports.append(rep)
        for k, v in oa_by_k.items():
            oa_k.setdefault(k, []).append(v)
    if first_bank is None:
        raise NnoplsError(f"every fold failed: {failures[0]['error']}")

    label = method.method if isinstance(method, FilterBank) else method
    ordered = first_bank.ordered_by_relevance and RELEVANCE_ORDERED.get(label, True)
    nz = nz_rate(first_bank)
    im = interpretability(nz, first_bank.n_f, n_ref) if nz > 0 else None
    total = int(confusion.sum())
    per_k = None
    if ordered:
        per_k = [float(np.mean(oa_k[k])) if k in oa_k else None for k in range(1, n_f + 1)]
    report = EvalReport(
        method=label,
        n_f=int(n_f),
        oa_percent=100.0 * float(np.trace(confusion)) / total if total else float("nan"),
        mean_fold_oa=float(np.mean(per_fold)),
        per_fold_oa=per_fold,
        nz=nz,
        im=im,
        n_ref=int(n_ref),
        confusion=confusion.tolist(),
        per_k_oa=per_k,
        truncation_meaningful=bool(ordered),
        lambdas=lambdas,
        fold_failures=failures,
        per_k_fold_oa={k: oa_k[k] for k in sorted(oa_k)},
        solver_reports=reports,
        n_f_requested=None if isinstance(method, FilterBank) else config.n_f,
        wall_time=time.perf_counter() - t0,
    )
    return report


# ---------------------------------------------------------------------------
# experiment configuration files


@dataclass(frozen=True)
class ExperimentConfig:
    inputs: Optional[str]
    labels: Optional[str]
    groups: Optional[str]
    dataset: Optional[str]
    methods: tuple
    n_f_grid: tuple
    seed: int
    folds: int
    lambda_grid: tuple
    solver: dict
    n_ref: Optional[int]

    def load_dataset(self) -> RawDataset:
        if self.dataset == "synthetic":
            from .synthetic import bundled_dataset

            return bundled_dataset()
        if not self.inputs or not self.labels:
            raise InputError("config needs 'inputs' and 'labels' paths (or dataset: synthetic)")
        x = read_matrix(self.inputs)
        labels = read_labels(self.labels)
        groups = read_labels(self.groups) if self.groups else None
        if labels.size != x.shape[1]:
            raise DimensionMismatchError(
                f"{labels.size} labels for {x.shape[1]} samples"
            )
        return RawDataset.from_labels(x, labels, None, groups)


_CONFIG_KEYS = {"inputs", "labels", "groups", "dataset", "methods", "method", "n_f", "n_f_grid",
                "seed", "folds", "lambda_grid", "solver", "n_ref"}


def load_experiment_config(path) -> ExperimentConfig:
    """Read a JSON experiment description; relative paths resolve against
    the file's directory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise InputError(f"{path}: top level must be a JSON object")
    unknown = sorted(set(raw) - _CONFIG_KEYS)
    if unknown:
        raise ConfigurationError(f"{path}: unknown keys {unknown}")

    def resolve(key):
        v = raw.get(key)
        if v is None:
            return None
        p = Path(v)
        p = p if p.is_absolute() else path.parent / p
        if not p.exists():
            raise InputError(f"{path}: {key} file not found: {p}")
        return str(p)

    methods = raw.get("methods", [raw["method"]] if "method" in raw else list(METHODS))
    if isinstance(methods, str):
        methods = [methods]
    for m in methods:
        if m not in METHODS:
            raise ConfigurationError(f"{path}: unknown method {m!r}")
    grid = raw.get("n_f_grid", [raw.get("n_f", 3)])
    if isinstance(grid, int):
        grid = [grid]
    solver = dict(raw.get("solver", {}))
    fields = set(SolverConfig.__dataclass_fields__) - {"n_f"}
    bad = sorted(set(solver) - fields)
    if bad:
        raise ConfigurationError(f"{path}: unknown solver settings {bad}")
    dataset = raw.get("dataset")
    if dataset not in (None, "synthetic"):
        raise ConfigurationError(f"{path}: dataset must be 'synthetic' or omitted")
    return ExperimentConfig(
        inputs=resolve("inputs"),
        labels=resolve("labels"),
        groups=resolve("groups"),
        dataset=dataset,
        methods=tuple(methods),
        n_f_grid=tuple(int(v) for v in grid),
        seed=int(raw.get("seed", 0)),
        folds=int(raw.get("folds", 5)),
        lambda_grid=tuple(float(v) for v in raw.get("lambda_grid", DEFAULT_LAMBDA_GRID)),
        solver=solver,
        n_ref=raw.get("n_ref"),
    )


def summary_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "n_f", "oa_percent", "mean_fold_oa", "nz", "im", "failed_folds"])
    for r in reports:
        w.writerow([r.method, r.n_f, repr(r.oa_percent), repr(r.mean_fold_oa),
                    "" if r.nz is None else repr(r.nz), "" if r.im is None else repr(r.im),
                    len(r.fold_failures)])
    return buf.getvalue()


def folds_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, ["method", "k", "fold", "oa_percent", "lambda", "nz", "im"], lineterminator="\n")
    w.writeheader()
    for r in reports:
        for row in r.csv_rows():
            w.writerow(row)
    return buf.getvalue()


def write_reports(reports, out_dir):
    """``report.json``, ``summary.csv`` and ``folds.csv`` under ``out_dir``."""
    out_dir = Path(out_dir)
    payload = [r.to_dict() for r in reports]
    atomic_write_text(out_dir / "report.json",
                      json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    atomic_write_text(out_dir / "summary.csv", summary_csv(reports))
    atomic_write_text(out_dir / "folds.csv", folds_csv(reports))
