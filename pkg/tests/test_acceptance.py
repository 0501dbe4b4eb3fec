"""Acceptance criteria, each at its stated tolerance.

Every test records one ``PASS``/``FAIL`` line, printed in the
"acceptance criteria" section of the pytest summary. Criteria the solvers
cannot meet are strict xfails; the analysis lives in the decisions ledger.
"""

import itertools
import time

import numpy as np
import pytest
from oracles import direct_dft2, grid_oracle_loss, nnls_enumerate, nnls_objective, random_problem

from nnopls.dataset import center
from nnopls.evaluation import grouped_kfold, run_experiment
from nnopls.filterbank import interpretability, nz_rate
from nnopls.nnls import nnls_gram
from nnopls.preprocess import FrameSeries, GrayImage, image_to_spectrum, integrate_frames, periodogram
from nnopls.solvers import SolverConfig, design, opls_baseline, schur_deflate
from nnopls.solvers._common import bank_loss
from nnopls.synthetic import band_dataset, bundled_dataset, planted_problem


@pytest.fixture
def verdict(record_property):
    def emit(tag, ok, detail, elapsed):
        line = f"{'PASS' if ok else 'FAIL'}  {tag}: {detail} ({elapsed:.1f} s)"
        print(line)
        record_property("acceptance", line)
        return ok
    return emit


def test_a01_im_reproduction(verdict):
    t0 = time.perf_counter()
    rows = [((0.046, 9, 10), 1.4), ((0.5202, 23, 111), 1.0), ((0.029, 4, 11), 2.0)]
    got = [interpretability(*args) for args, _ in rows]
    ok = all(abs(g - ref) <= 0.05 for g, (_, ref) in zip(got, rows))
    verdict("A01 IM reproduction", ok, "IM = " + ", ".join(f"{g:.3f}" for g in got),
            time.perf_counter() - t0)
    assert ok


def test_a02_nnls_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240)
    worst = 0.0
    for _ in range(200):
        q = int(rng.integers(1, 13))
        a = rng.standard_normal((q + int(rng.integers(0, 6)), q))
        b = rng.standard_normal(a.shape[0])
        ata, atb = a.T @ a, a.T @ b
        f = nnls_objective(ata, atb, nnls_gram(ata, atb).x)
        _, f_ref = nnls_enumerate(ata, atb)
        worst = max(worst, (f - f_ref) / max(abs(f_ref), 1e-300))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 30
    verdict("A02 NNLS oracle equivalence", ok, f"worst relative excess {worst:.2e} over 200 problems",
            elapsed)
    assert ok


def test_a03_deflation_orthogonality(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(100):
        n, m = int(rng.integers(2, 12)), int(rng.integers(1, 6))
        c = rng.standard_normal((n, m))
        u = rng.random(n)
        d = schur_deflate(c, u)
        worst = max(worst, np.abs(u / np.linalg.norm(u) @ d).max() / np.linalg.norm(c))
    runs = 0
    for seed in range(10):
        _, cen, cov = random_problem(np.random.default_rng(seed), 8, 4, 60)
        for method in ("defnopls", "popls"):
            res = design(method, cen, SolverConfig(n_f=3))
            cx = cov.cxy.copy()
            for j in range(res.u.shape[1]):
                if not np.any(res.u[:, j]):
                    continue
                cx = schur_deflate(cx, res.u[:, j])
                uj = res.u[:, j] / np.linalg.norm(res.u[:, j])
                worst = max(worst, np.abs(uj @ cx).max() / np.linalg.norm(cov.cxy))
            runs += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 5
    verdict("A03 deflation orthogonality", ok,
            f"worst |u^T C_defl| / ||C|| = {worst:.2e} (100 pairs, {runs} solver runs)", elapsed)
    assert ok


@pytest.mark.xfail(strict=True, reason="the eigen W-step is not a block minimizer once n_f >= 2; "
                   "the objective can rise between outer iterations")
def test_a04_nopls_monotone_descent(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    bad = []
    for i in range(50):
        n = int(rng.integers(2, 21))
        m = int(rng.integers(1, 6))
        big_n = int(rng.integers(n + 2, 201))
        n_f = int(rng.integers(1, min(n, 5) + 1))
        _, cen, _ = random_problem(rng, n, m, big_n)
        traj = design("nopls", cen, SolverConfig(n_f=n_f)).report.loss_trajectory
        if any(b > a + 1e-9 * abs(a) for a, b in zip(traj, traj[1:])):
            bad.append((i, n_f))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 60
    single = sum(1 for _, nf in bad if nf == 1)
    verdict("A04 NOPLS monotone descent", ok,
            f"{len(bad)}/50 instances rise at least once ({single} of them with n_f = 1)", elapsed)
    assert ok


@pytest.mark.xfail(strict=True, reason="nopls and defnopls are local alternations from a fixed "
                   "start and stop at non-global stationary points for some targets")
def test_a05_global_optimality_tiny_scale(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    miss = {"nopls": 0, "defnopls": 0, "popls": 0}
    for _ in range(20):
        m = int(rng.integers(1, 6))
        _, cen, cov = random_problem(rng, 3, m, 40)
        ref = grid_oracle_loss(cov)
        for method in miss:
            loss = design(method, cen, SolverConfig(n_f=1)).report.final_loss
            if loss > ref + 1e-3 * abs(ref):
                miss[method] += 1
    elapsed = time.perf_counter() - t0
    ok = not any(miss.values()) and elapsed < 60
    verdict("A05 global optimality (n = 3, n_f = 1)", ok,
            "misses out of 20: " + ", ".join(f"{k} {v}" for k, v in miss.items()), elapsed)
    assert ok


def test_a06_unconstrained_consistency(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 11))
        m = int(rng.integers(1, 6))
        n_f = int(rng.integers(1, min(n, m) + 1))
        _, cen, cov = random_problem(rng, n, m, 60)
        free = design("nopls", cen, SolverConfig(n_f=n_f, nonnegative=False))
        ref = opls_baseline(cen, SolverConfig(n_f=n_f, ridge_tau=0.0))
        a, b = bank_loss(cov, free.u), bank_loss(cov, ref.u)
        worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 10
    verdict("A06 unconstrained consistency", ok, f"worst relative gap {worst:.2e} on 20 instances",
            elapsed)
    assert ok


def _support_recovery(u_true, u):
    thr = 1e-10 * np.abs(u).max()
    true = [set(np.flatnonzero(u_true[:, j])) for j in range(u_true.shape[1])]
    found = [set(np.flatnonzero(u[:, j] > thr)) for j in range(u.shape[1])]
    total = sum(map(len, true))
    best = 0
    for perm in itertools.permutations(range(len(found)), len(true)):
        best = max(best, sum(len(t & found[p]) for t, p in zip(true, perm)))
    return best / total


@pytest.mark.xfail(strict=True, reason="both alternations settle above 1.1x the noise floor on "
                   "the planted instance; see the decisions ledger")
def test_a07_planted_bank_recovery(verdict):
    t0 = time.perf_counter()
    p = planted_problem(n=50, n_f=3, m=5, n_samples=500, support_fraction=0.1, snr_db=20.0, seed=0)
    cen = center(p.raw)
    parts, ok = [], True
    for method in ("nopls", "defnopls"):
        res = design(method, cen, SolverConfig(n_f=3))
        ratio = res.report.final_loss / p.noise_floor
        rec = _support_recovery(p.u_true, res.u)
        ok &= ratio <= 1.1 and rec >= 0.9
        parts.append(f"{method} loss/floor {ratio:.3f}, support {100 * rec:.0f}%")
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 60
    verdict("A07 planted-bank recovery", ok, "; ".join(parts), elapsed)
    assert ok


def test_a08_spectral_pipeline(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(808)
    dft_err = 0.0
    for _ in range(3):
        img = GrayImage(rng.random((16, 16)))
        p = img.pixels - img.pixels.mean()
        ref = np.roll(np.abs(direct_dft2(p)) ** 2, (8, 8), axis=(0, 1)).ravel()
        got = image_to_spectrum(img, 16).values
        dft_err = max(dft_err, np.abs(got - ref).max() / ref.max())
    img = GrayImage(rng.random((120, 120)))
    p = img.pixels - img.pixels.mean()
    full = np.abs(np.fft.fft2(p)) ** 2
    parseval = abs(full.sum() - 120 * 120 * np.sum(p ** 2)) / full.sum()
    L, k = 256, 17
    per = periodogram(np.cos(2 * np.pi * k * np.arange(L) / L))
    leak = np.delete(per, k).max()
    len_img = image_to_spectrum(img, 12).values.size
    len_per = periodogram(rng.standard_normal(L)).size
    len_int = integrate_frames(FrameSeries(rng.standard_normal((6, L))), L).size
    ok = (dft_err <= 1e-8 and parseval <= 1e-6 and abs(per[k] - L / 4) <= 1e-8 and leak < 1e-10
          and len_img == 144 and len_per == 129 and len_int == 774)
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 10
    verdict("A08 spectral pipeline", ok,
            f"DFT rel err {dft_err:.1e}, Parseval {parseval:.1e}, P[k] = {per[k]:.6f}, "
            f"leak {leak:.1e}, lengths {len_img}/{len_per}/{len_int}", elapsed)
    assert ok


def test_a09_end_to_end_separability(verdict):
    t0 = time.perf_counter()
    data = band_dataset(seed=0)
    raw, mask = data.raw, data.band_mask()
    split = grouped_kfold(raw.groups, 5, seed=0)
    parts, ok = [], True
    for method in ("nopls", "defnopls", "popls"):
        rep = run_experiment(raw, method, SolverConfig(n_f=3), split, seed=0)
        u = design(method, center(raw), SolverConfig(n_f=3)).u
        mass = u[mask].sum() / u.sum()
        ok &= rep.oa_percent >= 90.0 and mass >= 0.8
        parts.append(f"{method} OA {rep.oa_percent:.1f}% band mass {mass:.2f}")
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 120
    verdict("A09 end-to-end separability", ok, "; ".join(parts), elapsed)
    assert ok


@pytest.mark.xfail(strict=True, reason="multiplicative updates shrink off-support entries slowly; "
                   "within the default 1000 iterations nmf_opls is still above NZ 0.2")
def test_a10_sparsity_ordering(verdict):
    t0 = time.perf_counter()
    raw = bundled_dataset()
    cen = center(raw)
    nz = {}
    for method in ("nopls", "pnopls", "defnopls", "nmf_opls", "popls", "opls"):
        res = design(method, raw if method == "nmf_opls" else cen, SolverConfig(n_f=3))
        nz[method] = nz_rate(res.bank)
    constrained = {k: v for k, v in nz.items() if k != "opls"}
    ok = all(v < 0.2 for v in constrained.values()) and nz["opls"] >= 0.99
    verdict("A10 sparsity ordering", ok, ", ".join(f"{k} NZ {v:.3f}" for k, v in nz.items()),
            time.perf_counter() - t0)
    assert ok
