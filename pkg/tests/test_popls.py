import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import grid_oracle_loss, random_problem
from scipy import linalg

from nnopls.dataset import CovarianceSet
from nnopls.exceptions import InputError
from nnopls.solvers import SolverConfig, design, maximize_quotient, opls_baseline, popls, popls_quotient
from nnopls.solvers._common import bank_loss


def _cov(cxx, cxy):
    cxy = np.asarray(cxy, dtype=float).reshape(len(cxx), -1)
    return CovarianceSet(np.asarray(cxx, dtype=float), cxy, cxy.T @ cxy + np.eye(cxy.shape[1]))


def test_quotient_aligned_vector():
    assert popls_quotient(np.eye(2), [[3.0], [4.0]], [0.6, 0.8]) == pytest.approx(25.0, abs=1e-12)


def test_quotient_orthogonal_vector_is_zero():
    assert popls_quotient(np.eye(3), [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]], [0, 0, 2.0]) == 0.0


def test_quotient_rejects_zero_vector():
    with pytest.raises(InputError):
        popls_quotient(np.eye(2), np.ones((2, 1)), [0.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3), st.booleans())
def test_quotient_scale_invariance(seed, c, flip):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((4, 6))
    cxx = a @ a.T + 0.1 * np.eye(4)
    cxy = rng.standard_normal((4, 2))
    u = rng.random(4) + 0.01
    c = -c if flip else c
    assert popls_quotient(cxx, cxy, c * u, 1e-3) == pytest.approx(popls_quotient(cxx, cxy, u, 1e-3),
                                                                rel=1e-12)


def test_popls_interior_optimum():
    res = popls(_cov(np.eye(2), [3.0, 4.0]), SolverConfig(n_f=1, ridge_tau=0.0))
    assert np.allclose(res.bank.u[:, 0], [0.6, 0.8], atol=1e-10)


def test_popls_boundary_optimum():
    res = popls(_cov(np.eye(2), [3.0, -4.0]), SolverConfig(n_f=1, ridge_tau=0.0))
    assert np.allclose(res.bank.u[:, 0], [0.0, 1.0], atol=1e-10)
    assert res.report.extras["quotients"][0] == pytest.approx(16.0, rel=1e-12)
    # the same answer from a 1-D sweep over the quarter circle
    th = np.linspace(0, np.pi / 2, 20001)
    vals = (3 * np.cos(th) - 4 * np.sin(th)) ** 2
    assert th[np.argmax(vals)] == pytest.approx(np.pi / 2)


@pytest.mark.parametrize("seed", range(6))
def test_popls_matches_grid_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    _, c, cov = random_problem(rng, 3, 2, 40)
    res = popls(c, SolverConfig(n_f=1, ridge_tau=0.0))
    ref = grid_oracle_loss(cov)
    assert bank_loss(cov, res.bank.u) <= ref + 1e-3 * abs(ref)


def test_maximize_quotient_reaches_face_optimum():
    a = np.diag([1.0, 5.0, 2.0])
    u, f, _ = maximize_quotient(a, np.eye(3), [np.ones(3)])
    assert f == pytest.approx(5.0)
    assert np.allclose(u, [0, 1, 0], atol=1e-8)


def test_opls_identity_cxx_gives_plain_eigenvectors():
    rng = np.random.default_rng(3)
    cxy = rng.standard_normal((5, 3))
    res = opls_baseline(_cov(np.eye(5), cxy), SolverConfig(n_f=2, ridge_tau=0.0))
    lam, vec = np.linalg.eigh(cxy @ cxy.T)
    for j, k in enumerate([4, 3]):
        assert abs(res.bank.u[:, j] @ vec[:, k]) == pytest.approx(1.0, abs=1e-10)
    assert res.report.extras["eigenvalues"] == pytest.approx([lam[4], lam[3]])


def test_opls_columns_sign_convention():
    rng = np.random.default_rng(4)
    _, c, _ = random_problem(rng, 6, 3, 50)
    u = opls_baseline(c, SolverConfig(n_f=3)).bank.u
    for j in range(3):
        assert u[np.argmax(np.abs(u[:, j])), j] > 0


@pytest.mark.parametrize("seed", range(5))
def test_opls_loss_bounds_constrained_solvers(seed):
    rng = np.random.default_rng(seed)
    _, c, cov = random_problem(rng, 7, 3, 60)
    cfg = SolverConfig(n_f=2)
    base = bank_loss(cov, opls_baseline(c, cfg).bank.u)
    for method in ("nopls", "pnopls", "defnopls", "popls"):
        other = bank_loss(cov, design(method, c, cfg).bank.u)
        assert base <= other + 1e-8 * abs(other)


@pytest.mark.parametrize("seed", range(8))
def test_single_target_unconstrained_quotient_dominates(seed):
    rng = np.random.default_rng(seed)
    _, c, cov = random_problem(rng, 6, 1, 50)
    tau = 1e-8 * np.trace(cov.cxx) / 6
    cfg = SolverConfig(n_f=1, ridge_tau=tau)
    u_opls = opls_baseline(c, cfg).bank.u[:, 0]
    u_pos = popls(c, cfg).bank.u[:, 0]
    q_opls = popls_quotient(cov.cxx, cov.cxy, u_opls, tau)
    q_pos = popls_quotient(cov.cxx, cov.cxy, u_pos, tau)
    assert q_opls >= q_pos * (1 - 1e-12)
    # the unconstrained maximum is the top generalized eigenvalue
    top = linalg.eigh(cov.cxy @ cov.cxy.T, cov.cxx + tau * np.eye(6), eigvals_only=True)[-1]
    assert q_opls == pytest.approx(top, rel=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_popls_deflation_residuals_and_order(seed):
    rng = np.random.default_rng(seed)
    _, c, _ = random_problem(rng, 8, 3, 60)
    res = popls(c, SolverConfig(n_f=3))
    assert res.bank.u.min() >= 0
    assert np.allclose(np.linalg.norm(res.bank.u, axis=0), 1.0)
    assert max(res.report.deflation_residuals) <= 1e-10
    q = res.report.extras["quotients"]
    assert all(q[j] >= q[j + 1] * (1 - 1e-9) for j in range(len(q) - 1))


def test_popls_stops_when_deflation_exhausts_single_target():
    rng = np.random.default_rng(9)
    _, c, _ = random_problem(rng, 5, 1, 40)
    res = popls(c, SolverConfig(n_f=3))
    assert res.report.n_filters == 1
    assert any("exhausted" in w for w in res.report.warnings)
