import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shiftlab.optim import (
    ConvergenceWarning,
    InfeasibleError,
    QpProblem,
    project_box_band,
    solve_mean_band_lp,
    solve_qp,
)

from oracles import lp_vertex_oracle


def test_qp_1d_stationary():
    res = solve_qp(QpProblem(np.eye(1), [-1.0], 0.0, 10.0))
    assert res.x[0] == pytest.approx(1.0, abs=1e-6)
    assert res.converged


def test_qp_grid_oracle(rng):
    M = rng.normal(size=(3, 3))
    P = M @ M.T + 0.1 * np.eye(3)
    q = rng.normal(size=3)
    prob = QpProblem(P, q, 0.0, 2.0, eps=0.3)
    res = solve_qp(prob, tol=1e-9)
    g = np.arange(0, 2.0001, 0.01)
    W = np.array(np.meshgrid(g, g, g, indexing="ij")).reshape(3, -1).T
    W = W[np.abs(W.mean(1) - 1) <= 0.3]
    vals = 0.5 * np.einsum("ij,jk,ik->i", W, P, W) + W @ q
    assert res.objective <= vals.min() + 1e-3
    assert prob.is_feasible(res.x)


@given(st.integers(0, 10_000))
def test_qp_feasible_and_monotone(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 12))
    M = rng.normal(size=(n, n))
    prob = QpProblem(M @ M.T, rng.normal(size=n), 0.0, float(rng.uniform(1.5, 5)), float(rng.uniform(0, 0.5)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        res = solve_qp(prob, budget=3000)
    assert prob.is_feasible(res.x, tol=1e-9)
    assert np.all(np.diff(res.history) <= 1e-12)


def test_qp_infeasible():
    with pytest.raises(InfeasibleError):
        QpProblem(np.eye(2), np.zeros(2), 0.0, 0.1, eps=0.5)


def test_qp_budget_warns():
    P = np.diag([1.0, 1e-6])
    with pytest.warns(ConvergenceWarning):
        res = solve_qp(QpProblem(P, [-1.0, -1.0], 0.0, 1e9), tol=1e-14, budget=20)
    assert not res.converged


@given(st.integers(0, 10_000))
def test_projection_is_nearest(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    v = rng.normal(scale=3, size=n)
    x = project_box_band(v, 0.0, 2.0, n * 0.8, n * 1.2)
    assert np.all(x >= 0) and np.all(x <= 2.0)
    assert n * 0.8 - 1e-9 <= x.sum() <= n * 1.2 + 1e-9
    # any feasible point is at least as far from v
    for _ in range(20):
        y = project_box_band(rng.uniform(0, 2, n), 0.0, 2.0, n * 0.8, n * 1.2)
        assert np.linalg.norm(v - x) <= np.linalg.norm(v - y) + 1e-9


def test_lp_examples():
    w, opt = solve_mean_band_lp([0.2, 0.5, 0.3], 0.1)
    assert opt == pytest.approx(0.55, abs=1e-12)
    assert np.allclose(w, [0, 3.3, 0])
    _, opt = solve_mean_band_lp([0.4] * 5, 0.2)
    assert opt == pytest.approx(1.2 * 0.4)
    L = np.array([0.1, 0.7, 0.4])
    w, opt = solve_mean_band_lp(L, 0.0, cap=1.0)
    assert np.allclose(w, 1.0) and opt == pytest.approx(L.mean())


def test_lp_cap_too_small_reports():
    with pytest.warns(ConvergenceWarning):
        w, _ = solve_mean_band_lp([1.0, 2.0], 0.0, cap=0.5)
    assert np.allclose(w, 0.5)


def test_lp_matches_vertex_enumeration_1000():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        losses = rng.normal(size=n) if rng.random() < 0.3 else rng.uniform(0, 2, n)
        eps = float(rng.choice([0.0, rng.uniform(0, 1.5)]))
        cap = None if rng.random() < 0.4 else float(rng.uniform(1.0, 4.0))
        w, opt = solve_mean_band_lp(losses, eps, cap)
        assert opt == pytest.approx(lp_vertex_oracle(losses, eps, cap), abs=1e-9)
        assert np.all(w >= 0)
        assert abs(w.mean() - 1) <= eps + 1e-9
        if cap is not None:
            assert np.all(w <= cap + 1e-12)
