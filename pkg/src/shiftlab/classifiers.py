"""Losses, (importance-)weighted linear ERM, prediction and risk estimation."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, DatasetError, LossKind, as_matrix, validate
from .optim import ConvergenceWarning
from .weights import WeightVector, class_weight_vector  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)

ARMIJO_FACTOR = 0.5
ARMIJO_SLOPE = 1e-4


@dataclass(frozen=True)
class LinearModel:
    coef: np.ndarray
    intercept: float
    loss: LossKind
    lam: float = 0.0
    info: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.coef, dtype=float))
        if not np.all(np.isfinite(w)) or not np.isfinite(self.intercept):
            raise ValueError("model parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "coef", w)
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "loss", LossKind.parse(self.loss))

    @property
    def dim(self) -> int:
        return self.coef.shape[0]

    def to_dict(self) -> dict:
        return {
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "loss": self.loss.value,
            "lambda": self.lam,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(d["coef"], d["intercept"], d["loss"], d.get("lambda", 0.0))

    @classmethod
    def from_json(cls, text: str) -> "LinearModel":
        return cls.from_dict(json.loads(text))


def loss_value(kind, score, label):
    """Pointwise loss; works elementwise on arrays."""
    kind = LossKind.parse(kind)
    s = np.asarray(score, dtype=float)
    y = np.asarray(label, dtype=float)
    if kind is LossKind.ZERO_ONE:
        pred = np.where(s >= 0, 1.0, -1.0)
        out = (pred != y).astype(float)
    elif kind is LossKind.QUADRATIC:
        out = (s - y) ** 2
    elif kind is LossKind.HINGE:
        out = np.maximum(0.0, 1.0 - y * s)
    else:
        out = np.logaddexp(0.0, -y * s)
    return float(out) if out.ndim == 0 else out


def _loss_grad(kind: LossKind, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d loss / d score (a subgradient for hinge)."""
    if kind is LossKind.QUADRATIC:
        return 2.0 * (s - y)
    if kind is LossKind.HINGE:
        return np.where(y * s < 1.0, -y, 0.0)
    # logistic: -y * sigmoid(-y s), written stably
    z = -y * s
    return -y * np.exp(z - np.logaddexp(0.0, z))


def _weights_array(weights, n: int) -> np.ndarray:
    if weights is None:
        return np.ones(n)
    w = weights.values if isinstance(weights, WeightVector) else np.asarray(weights, dtype=float)
    w = w.reshape(-1)
    if w.shape[0] != n:
        raise ValueError(f"got {w.shape[0]} weights for {n} samples")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    return w


def _objective(kind, X, y, w, lam, beta, b):
    s = X @ beta + b
    return float(np.mean(w * loss_value(kind, s, y)) + lam * beta @ beta)


def _gradient(kind, X, y, w, lam, beta, b):
    s = X @ beta + b
    g = w * _loss_grad(kind, s, y) / X.shape[0]
    return X.T @ g + 2.0 * lam * beta, float(g.sum())


def train_weighted(
    source: Dataset,
    weights=None,
    loss="logistic",
    lam: float = 0.0,
    stream=None,
    method: str = "auto",
    tol: float = 1e-6,
    max_iter: int = 10_000,
) -> LinearModel:
    """Minimize (1/n) sum_i w_i loss(x_i . coef + b, y_i) + lam |coef|^2.

    Quadratic loss is solved in closed form unless ``method="gd"``. Logistic
    loss uses diagonally preconditioned gradient descent from zero with
    Armijo backtracking; hinge loss uses a subgradient method with the ridge
    applied proximally. The intercept is never penalized. The run is
    deterministic, ``stream`` is accepted for interface symmetry only.

    ``info["objective_history"]`` holds the objective after every accepted step.
    """
    kind = LossKind.parse(loss)
    if kind is LossKind.ZERO_ONE:
        raise ValueError("zero-one loss is not trainable; use a convex surrogate")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    validate(source)
    if source.labels is None:
        raise DatasetError("training needs a labeled source dataset")
    X = source.features
    y = source.labels.astype(float)
    n, d = X.shape
    w = _weights_array(weights, n)

    if kind is LossKind.QUADRATIC and method == "auto":
        Xa = np.hstack([X, np.ones((n, 1))])
        A = Xa.T @ (w[:, None] * Xa) / n
        A[:d, :d] += lam * np.eye(d)
        rhs = Xa.T @ (w * y) / n
        if np.linalg.matrix_rank(A) < d + 1:
            raise np.linalg.LinAlgError("normal equations are singular; add regularization")
        sol = np.linalg.solve(A, rhs)
        beta, b = sol[:d], float(sol[d])
        obj = _objective(kind, X, y, w, lam, beta, b)
        return LinearModel(beta, b, kind, lam, {"method": "closed-form", "objective": obj})

    beta = np.zeros(d)
    b = 0.0
    obj = _objective(kind, X, y, w, lam, beta, b)
    history = [obj]
    step = 1.0
    gnorm = np.inf
    it = 0
    if kind is LossKind.HINGE:
        best = (obj, beta.copy(), b)
        scale = 1.0 / max(1.0, float(np.mean(np.sum(X**2, axis=1))))
        for it in range(1, max_iter + 1):
            gb, g0 = _gradient(kind, X, y, w, lam, beta, b)
            gnorm = float(np.sqrt(gb @ gb + g0 * g0))
            if gnorm <= tol:
                break
            eta = scale / np.sqrt(it)
            # loss subgradient step, ridge applied as an exact proximal shrink (stable for any lam)
            gl = gb - 2.0 * lam * beta
            beta, b = (beta - eta * gl) / (1.0 + 2.0 * eta * lam), b - eta * g0
            obj = _objective(kind, X, y, w, lam, beta, b)
            if obj < best[0]:
                best = (obj, beta.copy(), b)
            history.append(best[0])
        obj, beta, b = best
        converged = gnorm <= tol
    else:
        # diagonal preconditioner from per-coordinate curvature bounds, so a
        # large ridge on coef does not stall the unpenalized intercept
        curv = 0.25 if kind is LossKind.LOGISTIC else 2.0
        pb = 1.0 / np.maximum(curv * (w @ X**2) / n + 2.0 * lam, 1e-12)
        p0 = 1.0 / max(curv * float(w.mean()), 1e-12)
        for it in range(1, max_iter + 1):
            gb, g0 = _gradient(kind, X, y, w, lam, beta, b)
            gnorm = float(np.sqrt(gb @ gb + g0 * g0))
            if gnorm <= tol:
                break
            db, d0 = pb * gb, p0 * g0
            sq = float(gb @ db + g0 * d0)
            t = step
            while True:
                nb, n0 = beta - t * db, b - t * d0
                nobj = _objective(kind, X, y, w, lam, nb, n0)
                if nobj <= obj - ARMIJO_SLOPE * t * sq:
                    break
                t *= ARMIJO_FACTOR
                if t < 1e-20:
                    break
            if t < 1e-20:
                break
            beta, b, obj = nb, n0, nobj
            history.append(obj)
            step = min(1.0, t / ARMIJO_FACTOR)
        converged = gnorm <= tol
        if not converged:
            warnings.warn(
                f"{kind.value} training stopped after {it} iterations, gradient norm {gnorm:.3g}",
                ConvergenceWarning,
                stacklevel=2,
            )
    info = {
        "method": "subgradient" if kind is LossKind.HINGE else "gradient-descent",
        "iterations": it,
        "grad_norm": gnorm,
        "converged": converged,
        "objective": obj,
        "objective_history": history,
    }
    return LinearModel(beta, b, kind, lam, info)


def predict(model: LinearModel, X):
    """Return ``(labels, scores)``; a score of exactly 0 maps to +1."""
    A = as_matrix(X)
    if A.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: model has {model.dim}, data has {A.shape[1]}")
    scores = A @ model.coef + model.intercept
    return np.where(scores >= 0, 1, -1), scores


def empirical_risk(model: LinearModel, dataset: Dataset, loss="zero-one", weights=None) -> float:
    """(1/n) sum_i w_i loss(score_i, y_i); weights default to one."""
    if dataset.labels is None:
        raise DatasetError("risk needs a labeled dataset")
    _, scores = predict(model, dataset.features)
    w = _weights_array(weights, dataset.n)
    return float(np.mean(w * loss_value(loss, scores, dataset.labels)))


def threshold_model(t: float, direction: int = 1) -> LinearModel:
    """1-d classifier sign(direction * (x - t))."""
    d = 1.0 if direction >= 0 else -1.0
    return LinearModel([d], -d * t, LossKind.ZERO_ONE)
