"""Minimax estimators: robust bias-aware classification and worst-case-weight ERM."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .classifiers import LinearModel, loss_value, train_weighted
from .core import Dataset, DatasetError, LossKind, as_matrix, validate
from .optim import ConvergenceWarning, solve_mean_band_lp
from .weights import WeightVector, _log_kde, scott_bandwidth

log = logging.getLogger(__name__)

GAP_TOL = 1e-3
RBA_RIDGE = 1e-6


@dataclass(frozen=True)
class SaddleReport:
    primal: float
    adversary: float
    gap: float
    iterations: int
    converged: bool = True
    history: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "gap", abs(float(self.gap)))

    def to_dict(self) -> dict:
        return {
            "primal": self.primal,
            "adversary": self.adversary,
            "gap": self.gap,
            "iterations": self.iterations,
            "converged": self.converged,
        }


# ---------------------------------------------------------------------------
# robust bias-aware classification


@dataclass(frozen=True)
class RbaModel:
    """Posterior p(+1|z) = (1 + tanh(r(z) theta.phi(z))) / 2 with r = p_S / p_T.

    ``theta`` acts on features standardized by source statistics; ``order``
    selects first or second order moments.
    """

    theta: np.ndarray
    order: int
    center: np.ndarray
    scale: np.ndarray
    source: np.ndarray = field(repr=False)
    target: np.ndarray = field(repr=False)
    bandwidths: tuple[float, float] = (1.0, 1.0)
    ratio_scale: float = 1.0
    target_posterior: np.ndarray = field(default=None, repr=False)
    constraint_residual: float = 0.0

    def features(self, X) -> np.ndarray:
        return _moment_features((as_matrix(X) - self.center) / self.scale, self.order)

    def density_ratio(self, X) -> np.ndarray:
        A = as_matrix(X)
        hs, ht = self.bandwidths
        lr = _log_kde(A, self.source, hs) - _log_kde(A, self.target, ht)
        return np.exp(np.minimum(lr, 700.0)) * self.ratio_scale

    def predict_proba(self, X) -> np.ndarray:
        a = self.density_ratio(X) * (self.features(X) @ self.theta)
        return 0.5 * (1.0 + np.tanh(a))

    def predict(self, X) -> np.ndarray:
        return np.where(self.predict_proba(X) >= 0.5, 1, -1)


def _moment_features(Xs: np.ndarray, order: int) -> np.ndarray:
    cols = [np.ones((Xs.shape[0], 1)), Xs]
    if order == 2:
        d = Xs.shape[1]
        iu = np.triu_indices(d)
        cols.append((Xs[:, :, None] * Xs[:, None, :])[:, iu[0], iu[1]])
    return np.hstack(cols)


def _log2cosh(a):
    return np.logaddexp(a, -a)


def rba_train(
    source: Dataset,
    target,
    order: int = 1,
    stream=None,
    tol: float = GAP_TOL,
    max_iter: int = 200,
    ridge: float = RBA_RIDGE,
):
    """Robust bias-aware classifier for the target domain.

    The adversary picks target posteriors whose feature-label moments,
    taken under the source marginal (reached from target samples through
    the ratio r = p_S/p_T), match the source sample moments. The predictor
    minimizes worst-case target log loss. The saddle point is found through
    the convex dual

        D(theta) = mean_j log 2cosh(r_j theta.phi(z_j)) - theta.c + ridge/2 |theta|^2,

    minimized by damped Newton. At the optimum predictor and adversary
    coincide; the gap is theta.(adversary moment - c).

    Returns ``(RbaModel, SaddleReport)``; ``stream`` is unused (deterministic).
    """
    if order not in (1, 2):
        raise ValueError("moment order must be 1 or 2")
    validate(source)
    if source.labels is None:
        raise DatasetError("rba_train needs a labeled source")
    X = source.features
    Z = as_matrix(target, "target")
    if X.shape[0] == 0 or Z.shape[0] == 0:
        raise ValueError("both domains must be nonempty")
    if X.shape[1] != Z.shape[1]:
        raise ValueError("dimension mismatch")
    y = source.labels.astype(float)

    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale <= 0] = 1.0
    phi_s = _moment_features((X - center) / scale, order)
    phi_t = _moment_features((Z - center) / scale, order)
    c = phi_s.T @ y / X.shape[0]

    hs, ht = scott_bandwidth(X), scott_bandwidth(Z)
    lr = _log_kde(Z, X, hs) - _log_kde(Z, Z, ht)
    r_raw = np.exp(np.minimum(lr, 700.0))
    rscale = 1.0 / max(float(r_raw.mean()), 1e-300)
    r = r_raw * rscale
    rphi = r[:, None] * phi_t
    m = Z.shape[0]

    def dual(th):
        return float(np.mean(_log2cosh(rphi @ th)) - th @ c + 0.5 * ridge * th @ th)

    theta = np.zeros(phi_t.shape[1])
    f = dual(theta)
    history = [f]
    gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        t = np.tanh(rphi @ theta)
        moment = rphi.T @ t / m
        grad = moment - c + ridge * theta
        gap = float(theta @ (moment - c))
        if np.max(np.abs(grad)) <= 1e-10 and abs(gap) <= tol:
            break
        H = (rphi * (1.0 - t * t)[:, None]).T @ rphi / m + ridge * np.eye(theta.size)
        step = np.linalg.solve(H, grad)
        s = 1.0
        while s > 1e-12:
            cand = theta - s * step
            fc = dual(cand)
            if fc <= f - 1e-4 * s * (grad @ step):
                break
            s *= 0.5
        if s <= 1e-12:
            break
        theta, f = cand, fc
        history.append(f)
    t = np.tanh(rphi @ theta)
    moment = rphi.T @ t / m
    gap = float(theta @ (moment - c))
    residual = float(np.max(np.abs(moment - c)))
    p = 0.5 * (1.0 + t)
    eps = 1e-300
    entropy = float(-np.mean(p * np.log(np.maximum(p, eps)) + (1 - p) * np.log(np.maximum(1 - p, eps))))
    converged = abs(gap) <= tol and residual <= tol
    if not converged:
        warnings.warn(
            f"RBA stopped after {it} iterations: gap {gap:.3g}, moment residual {residual:.3g}",
            ConvergenceWarning,
            stacklevel=2,
        )
    model = RbaModel(
        theta, order, center, scale, X.copy(), Z.copy(), (hs, ht), rscale, p, residual
    )
    # worst-case target log loss of the predictor equals the dual value (ridge excluded)
    primal = float(np.mean(_log2cosh(rphi @ theta)) - theta @ c)
    report = SaddleReport(primal, entropy, primal - entropy, it, converged, history)
    return model, report


# ---------------------------------------------------------------------------
# worst-case-weight ERM


def _losses(model: LinearModel, X, y, kind) -> np.ndarray:
    return loss_value(kind, X @ model.coef + model.intercept, y)


def _blend(a: LinearModel, b: LinearModel, t: float, kind, lam) -> LinearModel:
    return LinearModel(
        (1 - t) * a.coef + t * b.coef, (1 - t) * a.intercept + t * b.intercept, kind, lam
    )


def minimax_weight_train(
    source: Dataset,
    eps: float = 0.1,
    cap: Optional[float] = None,
    loss="logistic",
    lam: float = 1e-3,
    stream=None,
    tol: float = 1e-6,
    max_outer: int = 50,
):
    """ERM against the worst-case weights in {w >= 0, |mean(w) - 1| <= eps, w <= cap}.

    F(model) = max_w (1/n) sum_i w_i loss_i + lam |coef|^2 is convex. Each
    outer step solves the inner LP exactly, refits the model under the
    worst-case weights, and then searches the segment between the old and
    new models for the best F, so the outer objective never increases. The
    best iterate is returned.

    Returns ``(LinearModel, WeightVector, SaddleReport)``. The gap is
    F(model) - min_h L(h, w*) for the final worst-case weights w*.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    kind = LossKind.parse(loss)
    validate(source)
    if source.labels is None:
        raise DatasetError("minimax training needs a labeled source")
    X, y = source.features, source.labels.astype(float)

    def F(model):
        w, val = solve_mean_band_lp(_losses(model, X, y, kind), eps, cap)
        return val + lam * float(model.coef @ model.coef), w

    def fit(w):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            return train_weighted(source, w, kind, lam, max_iter=2000)

    model = fit(None)
    fval, w = F(model)
    history = [fval]
    it = 0
    for it in range(1, max_outer + 1):
        cand = fit(w)
        # golden-section search of the convex F along the segment
        lo, hi = 0.0, 1.0
        g = (math.sqrt(5) - 1) / 2
        a, b = hi - g * (hi - lo), lo + g * (hi - lo)
        fa, fb = F(_blend(model, cand, a, kind, lam))[0], F(_blend(model, cand, b, kind, lam))[0]
        for _ in range(40):
            if fa <= fb:
                hi, b, fb = b, a, fa
                a = hi - g * (hi - lo)
                fa = F(_blend(model, cand, a, kind, lam))[0]
            else:
                lo, a, fa = a, b, fb
                b = lo + g * (hi - lo)
                fb = F(_blend(model, cand, b, kind, lam))[0]
        best_t, best_f = (a, fa) if fa <= fb else (b, fb)
        f_end = F(cand)[0]
        if f_end < best_f:
            best_t, best_f = 1.0, f_end
        if best_f >= fval:
            history.append(fval)
            break
        change = fval - best_f
        model = _blend(model, cand, best_t, kind, lam)
        fval, w = F(model)
        history.append(fval)
        if change < tol:
            break
    inner = fit(w)
    lagr = float(np.mean(w * _losses(inner, X, y, kind)) + lam * inner.coef @ inner.coef)
    gap = fval - lagr
    model = LinearModel(model.coef, model.intercept, kind, lam, {"objective_history": history})
    weights = WeightVector(w, "minimax", eps=eps, cap=cap, info={"worst_case_risk": fval})
    report = SaddleReport(fval, lagr, gap, it, True, history)
    return model, weights, report


def worst_case_risk(model: LinearModel, source: Dataset, eps: float, cap=None, loss=None) -> float:
    """max over feasible weights of the weighted empirical loss of ``model``."""
    kind = model.loss if loss is None else LossKind.parse(loss)
    losses = _losses(model, source.features, source.labels.astype(float), kind)
    return solve_mean_band_lp(losses, eps, cap)[1]


__all__ = [
    "SaddleReport",
    "RbaModel",
    "rba_train",
    "minimax_weight_train",
    "worst_case_risk",
]
