import numpy as np
import pytest

from shiftlab.classifiers import train_weighted
from shiftlab.core import Dataset
from shiftlab.optim import ConvergenceWarning, solve_mean_band_lp
from shiftlab.robust import SaddleReport, minimax_weight_train, rba_train, worst_case_risk


def overlapping_with_far_target(seed, n=400):
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, 1, -1)
    X = (y + rng.normal(size=n))[:, None]
    Z = np.vstack([(rng.choice([-1, 1], n // 2) + rng.normal(size=n // 2))[:, None],
                   rng.normal(10, 0.5, size=(n // 2, 1))])
    return Dataset(X, y), Z


def test_rba_separable_same_domain():
    rng = np.random.default_rng(0)
    y = np.where(rng.random(300) < 0.5, 1, -1)
    X = (4.0 * y + rng.normal(size=300))[:, None]
    model, rep = rba_train(Dataset(X, y), X)
    p = model.predict_proba([[-4.0], [4.0]])
    assert np.all(np.abs(p - np.round(p)) < 0.2)
    assert p[0] < 0.5 < p[1]


def test_rba_far_points_uniform_and_moment():
    src, Z = overlapping_with_far_target(1)
    model, rep = rba_train(src, Z)
    far = Z[:, 0] > 6
    assert np.all(np.abs(model.target_posterior[far] - 0.5) < 0.1)
    assert model.constraint_residual <= 1e-3
    assert rep.gap <= 1e-3 and rep.converged


@pytest.mark.parametrize("seed", range(3))
def test_rba_second_order(seed):
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(400) < 0.5, 1, -1)
    X = (y + rng.normal(size=400))[:, None]
    Z = (rng.choice([-1, 1], 400) + rng.normal(0.5, 1, size=400))[:, None]
    model, rep = rba_train(Dataset(X, y), Z, order=2)
    assert model.constraint_residual <= 1e-3 and rep.gap <= 1e-3
    with pytest.raises(ValueError):
        rba_train(Dataset(X, y), Z, order=3)


def test_rba_infeasible_moments_warn():
    # quadratic moments cannot be matched when half the target lies outside the source support
    src, Z = overlapping_with_far_target(2)
    with pytest.warns(ConvergenceWarning):
        _, rep = rba_train(src, Z, order=2, max_iter=50)
    assert not rep.converged


def test_rba_first_moment_equals_label_mean_when_domains_coincide():
    rng = np.random.default_rng(5)
    y = np.where(rng.random(200) < 0.7, 1, -1)
    X = (y + rng.normal(size=200))[:, None]
    model, _ = rba_train(Dataset(X, y), X)
    mu = 2 * model.target_posterior - 1
    assert abs(mu.mean() - y.mean()) <= 1e-3


def test_inner_lp_examples():
    _, opt = solve_mean_band_lp([0.7] * 4, 0.0)
    assert opt == pytest.approx(0.7)
    w, opt = solve_mean_band_lp([0.2, 0.5, 0.3], 0.1)
    assert opt == pytest.approx(0.55) and np.argmax(w) == 1


def test_minimax_beats_erm_and_is_monotone():
    for seed in range(3):
        rng = np.random.default_rng(seed)
        y = np.where(rng.random(200) < 0.5, 1, -1)
        X = np.column_stack([y + rng.normal(size=200), rng.normal(size=200)])
        src = Dataset(X, y)
        model, w, rep = minimax_weight_train(src, 0.2, 10.0, "logistic", 0.0)
        erm = train_weighted(src, None, "logistic", 0.0)
        assert worst_case_risk(model, src, 0.2, 10.0) <= worst_case_risk(erm, src, 0.2, 10.0) + 1e-12
        h = np.asarray(rep.history)
        assert np.all(np.diff(h[1:]) <= 1e-12)
        assert w.satisfies_constraints(1e-6)


def test_saddle_report_abs_gap():
    assert SaddleReport(1.0, 2.0, -0.5, 3).gap == 0.5
