"""Importance-weight estimators for covariate-shift correction.

All estimators return a :class:`WeightVector` holding one nonnegative weight
per source sample plus the constraint record they were produced under.
"""

from __future__ import annotations

import io
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import special
from scipy.spatial.distance import cdist

from .core import RandomStream, as_matrix, as_stream
from .kernels import KernelSpec, gram
from .optim import ConvergenceWarning, QpProblem, solve_qp

log = logging.getLogger(__name__)

KMM_DEFAULT_CAP = 1000.0
KMM_DEFAULT_RIDGE = 3e-4
KDE_DEFAULT_CAP = 1e6
LSIF_DEFAULT_RIDGE = 1e-3
MAX_CENTERS = 100


@dataclass(frozen=True)
class WeightVector:
    """Per-source-sample importance weights.

    ``eps`` and ``cap`` record the constraint the values were produced under
    (``None`` when the estimator does not impose one).
    """

    values: np.ndarray
    estimator: str
    eps: Optional[float] = None
    cap: Optional[float] = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("weights must be finite and nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    def normalized(self) -> "WeightVector":
        """Rescale to mean 1 (constraint record is dropped)."""
        mu = self.mean
        if mu <= 0:
            raise ValueError("cannot normalize all-zero weights")
        return WeightVector(self.values / mu, self.estimator + "+normalized", info=dict(self.info))

    def satisfies_constraints(self, tol: float = 1e-6) -> bool:
        if np.any(self.values < 0):
            return False
        if self.eps is not None and abs(self.mean - 1.0) > self.eps + tol:
            return False
        if self.cap is not None and np.any(self.values > self.cap + tol):
            return False
        return True

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("weight\n")
        for v in self.values:
            buf.write(f"{float(v)!r}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text

    @classmethod
    def from_csv(cls, path, estimator: str = "file") -> "WeightVector":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0].strip() != "weight":
            raise ValueError("weight CSV must have the single header 'weight'")
        return cls([float(x) for x in lines[1:] if x.strip()], estimator)


def ones(n: int) -> WeightVector:
    return WeightVector(np.ones(n), "unweighted")


def _pair(source, target):
    X = as_matrix(source, "source")
    Z = as_matrix(target, "target")
    if X.shape[1] != Z.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    return X, Z


def _gaussian_logpdf(X, mu, cov):
    d = X.shape[1]
    chol = np.linalg.cholesky(cov)
    diff = np.linalg.solve(chol, (X - mu).T)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (np.sum(diff**2, axis=0) + logdet + d * math.log(2 * math.pi))


def gaussian_ratio_weights(source, target) -> WeightVector:
    """Fit one maximum-likelihood Gaussian per domain and take the density ratio."""
    X, Z = _pair(source, target)
    d = X.shape[1]
    for name, A in (("source", X), ("target", Z)):
        if A.shape[0] < d + 1:
            raise ValueError(f"{name} needs at least D+1={d + 1} samples, got {A.shape[0]}")
    fits = []
    for name, A in (("source", X), ("target", Z)):
        mu = A.mean(axis=0)
        cov = np.atleast_2d(np.cov(A, rowvar=False, bias=True))
        if np.linalg.eigvalsh(cov)[0] <= 1e-12 * max(1.0, np.trace(cov)):
            raise np.linalg.LinAlgError(f"fitted {name} covariance is singular")
        fits.append((mu, cov))
    (ms, cs), (mt, ct) = fits
    w = np.exp(_gaussian_logpdf(X, mt, ct) - _gaussian_logpdf(X, ms, cs))
    return WeightVector(w, "gaussian", info={"source_mean": ms.tolist(), "target_mean": mt.tolist()})


def scott_bandwidth(A: np.ndarray) -> float:
    """Scott's rule for an isotropic Gaussian KDE: mean feature std * n^(-1/(D+4))."""
    n, d = A.shape
    sd = float(np.mean(A.std(axis=0))) if n > 1 else 1.0
    return (sd if sd > 0 else 1.0) * n ** (-1.0 / (d + 4))


def _log_kde(points, data, h):
    d = data.shape[1]
    d2 = cdist(points, data, "sqeuclidean")
    lse = special.logsumexp(-d2 / (2 * h * h), axis=1)
    return lse - math.log(data.shape[0]) - 0.5 * d * math.log(2 * math.pi * h * h)


def kde_ratio_weights(
    source, target, bandwidth_S: Optional[float] = None, bandwidth_T: Optional[float] = None,
    cap: float = KDE_DEFAULT_CAP,
) -> WeightVector:
    """Ratio of isotropic Gaussian KDEs; the source KDE at x_i includes x_i itself.

    Bandwidths default to Scott's rule per domain. Where the source density
    underflows below 1e-300 the weight is set to ``cap`` and the index is
    reported in ``info["underflow"]``.
    """
    X, Z = _pair(source, target)
    hS = scott_bandwidth(X) if bandwidth_S is None else bandwidth_S
    hT = scott_bandwidth(Z) if bandwidth_T is None else bandwidth_T
    if not (hS > 0 and hT > 0):
        raise ValueError(f"bandwidths must be positive, got {hS}, {hT}")
    log_s = _log_kde(X, X, hS)
    log_t = _log_kde(X, Z, hT)
    w = np.exp(np.minimum(log_t - log_s, math.log(cap)))
    under = np.flatnonzero(log_s < math.log(1e-300))
    if under.size:
        warnings.warn(f"source KDE underflows at {under.size} points; weights capped", RuntimeWarning)
        w[under] = cap
    return WeightVector(
        w, "kde", info={"bandwidth_S": hS, "bandwidth_T": hT, "underflow": under.tolist()}
    )


def kmm_weights(
    source,
    target,
    spec: KernelSpec = KernelSpec(),
    B: float = KMM_DEFAULT_CAP,
    eps: Optional[float] = None,
    ridge: float = KMM_DEFAULT_RIDGE,
    tol: float = 1e-6,
    budget: int = 50_000,
) -> WeightVector:
    """Kernel mean matching.

    Minimizes (1/n^2) w'Kw - (2/(mn)) kappa'w + (ridge/n)|w - 1|^2 over
    {0 <= w <= B, |mean(w) - 1| <= eps}, with kappa_i = sum_j k(x_i, z_j).
    ``eps`` defaults to (sqrt(n) - 1)/sqrt(n). The ridge term makes the
    minimizer unique when source points nearly coincide and leaves w = 1
    optimal when the domains coincide; ``ridge=0`` gives the plain
    objective. The solver starts at w = 1. The reported objective omits the
    constant ridge*n/n of the expanded penalty.
    """
    X, Z = _pair(source, target)
    n, m = X.shape[0], Z.shape[0]
    if not B > 0:
        raise ValueError("B must be positive")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    if eps is None:
        eps = (math.sqrt(n) - 1.0) / math.sqrt(n)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    spec = spec.resolved(X, Z)
    K = gram(X, X, spec)
    kappa = gram(X, Z, spec).sum(axis=1)
    P = 2.0 * (K + ridge * n * np.eye(n)) / n**2
    q = -2.0 * kappa / (m * n) - 2.0 * ridge / n
    problem = QpProblem(P, q, 0.0, B, eps)
    res = solve_qp(problem, tol=tol, budget=budget)
    w = np.clip(res.x, 0.0, B)
    return WeightVector(
        w,
        "kmm",
        eps=eps,
        cap=B,
        info={
            "objective": res.objective,
            "kkt_residual": res.kkt_residual,
            "iterations": res.iterations,
            "converged": res.converged,
            "kernel": spec.to_dict(),
            "ridge": ridge,
        },
    )


def default_centers(target, k: int = MAX_CENTERS, stream: Optional[RandomStream] = None):
    """Up to ``k`` target points, chosen by seeded subsample without replacement."""
    Z = as_matrix(target, "target")
    if Z.shape[0] <= k:
        return Z.copy()
    rng = as_stream(stream).generator()
    return Z[np.sort(rng.choice(Z.shape[0], k, replace=False))]


def _basis(source, target, centers, spec, stream):
    X, Z = _pair(source, target)
    C = default_centers(Z, stream=stream) if centers is None else as_matrix(centers, "centers")
    if C.shape[0] == 0:
        raise ValueError("need at least one basis center")
    if C.shape[1] != X.shape[1]:
        raise ValueError("centers have the wrong dimensionality")
    spec = spec.resolved(X, Z)
    return X, Z, C, spec, gram(X, C, spec), gram(Z, C, spec)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based, exact)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


def kliep_weights(
    source,
    target,
    centers=None,
    spec: KernelSpec = KernelSpec(),
    stream: Optional[RandomStream] = None,
    tol: float = 1e-6,
    budget: int = 20_000,
) -> WeightVector:
    """KL importance estimation with w(x) = alpha . phi(x), alpha >= 0.

    Maximizes mean_j log w(z_j) subject to mean_i w(x_i) = 1. Writing
    beta_k = b_k alpha_k with b the source mean of phi turns the feasible set
    into the probability simplex; the ascent is projected gradient with
    exact simplex projection after each step, spectral (Barzilai-Borwein)
    step lengths and an Armijo safeguard, so the objective never decreases.
    """
    X, Z, C, spec, phi_s, phi_t = _basis(source, target, centers, spec, stream)
    b = phi_s.mean(axis=0)
    if not np.all(b > 0):
        raise ValueError("some basis function vanishes on every source point")
    psi = phi_t / b
    m = psi.shape[0]

    def objective(beta):
        wt = psi @ beta
        if np.any(wt <= 0):
            return -np.inf
        return float(np.mean(np.log(wt)))

    def gradient(beta):
        return psi.T @ (1.0 / (psi @ beta)) / m

    beta = np.full(C.shape[0], 1.0 / C.shape[0])
    obj, grad = objective(beta), gradient(beta)
    step = 1.0 / max(float(np.max(np.abs(grad))), 1e-12)
    residual = np.inf
    it = 0
    for it in range(1, budget + 1):
        direction = project_simplex(beta + step * grad) - beta
        residual = float(np.max(np.abs(project_simplex(beta + grad) - beta)))
        if residual <= tol:
            break
        slope = float(grad @ direction)
        t = 1.0
        while True:
            cand = beta + t * direction
            cobj = objective(cand)
            if cobj >= obj + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-16:
                cand, cobj = beta, obj
                break
        if cand is beta:
            break
        cgrad = gradient(cand)
        s_vec, y_vec = cand - beta, cgrad - grad
        sy = float(s_vec @ y_vec)
        # concave objective: curvature along s is -sy >= 0
        step = float(s_vec @ s_vec) / -sy if sy < 0 else step * 2.0
        step = min(max(step, 1e-10), 1e10)
        beta, obj, grad = cand, cobj, cgrad
    converged = residual <= tol
    if not converged and it >= budget:
        warnings.warn(f"KLIEP did not converge in {budget} iterations", ConvergenceWarning)
    alpha = beta / b
    w = np.maximum(phi_s @ alpha, 0.0)
    return WeightVector(
        w,
        "kliep",
        eps=0.0,
        info={
            "objective": obj,
            "iterations": it,
            "residual": residual,
            "converged": converged,
            "kernel": spec.to_dict(),
            "n_centers": int(C.shape[0]),
            "alpha": alpha.tolist(),
        },
    )


def lsif_weights(
    source,
    target,
    centers=None,
    spec: KernelSpec = KernelSpec(),
    ridge: float = LSIF_DEFAULT_RIDGE,
    stream: Optional[RandomStream] = None,
    tol: float = 1e-8,
    budget: int = 50_000,
) -> WeightVector:
    """Least-squares importance fitting.

    Minimizes 0.5 a'Ha - h'a + ridge * sum(a) over a >= 0 (the L1 penalty is
    linear on the nonnegative orthant), with H the source mean of phi phi'
    and h the target mean of phi. Weights are phi(x_i) . a clipped at zero.
    """
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    X, Z, C, spec, phi_s, phi_t = _basis(source, target, centers, spec, stream)
    H = phi_s.T @ phi_s / phi_s.shape[0]
    h = phi_t.mean(axis=0)
    problem = QpProblem(H, ridge - h, 0.0, np.inf)
    res = solve_qp(problem, tol=tol, budget=budget, x0=np.zeros(C.shape[0]))
    alpha = res.x
    w = np.maximum(phi_s @ alpha, 0.0)
    return WeightVector(
        w,
        "lsif",
        info={
            "objective": res.objective,
            "kkt_residual": res.kkt_residual,
            "iterations": res.iterations,
            "converged": res.converged,
            "kernel": spec.to_dict(),
            "ridge": ridge,
            "alpha": alpha.tolist(),
        },
    )


def nearest_source(source, target, chunk: int = 2048) -> np.ndarray:
    """Index of the nearest source point for every target point (ties -> lowest index)."""
    X, Z = _pair(source, target)
    out = np.empty(Z.shape[0], dtype=int)
    for start in range(0, Z.shape[0], chunk):
        d2 = cdist(Z[start : start + chunk], X, "sqeuclidean")
        out[start : start + chunk] = np.argmin(d2, axis=1)
    return out


def voronoi_weights(source, target, laplace: bool = False, normalize: bool = False) -> WeightVector:
    """Count target samples falling in each source point's Voronoi cell (+1 if ``laplace``)."""
    X, Z = _pair(source, target)
    if X.shape[0] == 0 or Z.shape[0] == 0:
        raise ValueError("both domains must be nonempty")
    counts = np.bincount(nearest_source(X, Z), minlength=X.shape[0]).astype(float)
    if laplace:
        counts += 1.0
    wv = WeightVector(counts, "voronoi+laplace" if laplace else "voronoi")
    return wv.normalized() if normalize else wv


def class_weight_vector(labels, priors_S, priors_T) -> WeightVector:
    """Per-sample p_T(y_i) / p_S(y_i) for priors ordered (p(-1), p(+1))."""
    pS = np.asarray(priors_S, dtype=float)
    pT = np.asarray(priors_T, dtype=float)
    if np.any(pS <= 0):
        raise ValueError("source priors must be positive")
    y = np.asarray(labels).reshape(-1)
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("labels must be -1 or +1")
    ratio = pT / pS
    return WeightVector(np.where(y == 1, ratio[1], ratio[0]), "class-prior")
