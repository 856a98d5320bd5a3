"""Domain discrepancy measures: MMD, order-2 Renyi divergence, proxy A-distance, Hellinger."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, as_matrix, as_stream
from .kernels import KernelSpec, gram

NEGATIVE_CLAMP = -1e-10


@dataclass(frozen=True)
class DiscrepancyReport:
    measure: str
    value: float
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"measure": self.measure, "value": _num(self.value), "meta": _jsonable(self.meta)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _num(v):
    if isinstance(v, (float, np.floating)):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return float(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    return obj


def _pair(X, Z):
    A, B = as_matrix(X, "X"), as_matrix(Z, "Z")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return A, B


def mmd2(X, Z, spec: KernelSpec = KernelSpec(), weights=None, unbiased: bool = False):
    """Squared MMD between (optionally reweighted) X and Z.

    Biased V-statistic by default:
    (1/n^2) w'Kxx w - (2/(nm)) w'Kxz 1 + (1/m^2) 1'Kzz 1.
    The U-statistic drops the diagonal terms of the within-domain sums.
    """
    A, B = _pair(X, Z)
    n, m = A.shape[0], B.shape[0]
    w = np.ones(n) if weights is None else np.asarray(getattr(weights, "values", weights), float)
    if w.shape != (n,):
        raise ValueError(f"expected {n} weights, got {w.shape}")
    spec = spec.resolved(A, B)
    Kxx, Kxz, Kzz = gram(A, A, spec), gram(A, B, spec), gram(B, B, spec)
    if unbiased:
        if n < 2 or m < 2:
            raise ValueError("unbiased MMD needs at least two samples per domain")
        wK = w @ Kxx @ w - np.sum(w * w * np.diag(Kxx))
        xx = wK / (n * (n - 1))
        zz = (Kzz.sum() - np.trace(Kzz)) / (m * (m - 1))
    else:
        xx = w @ Kxx @ w / n**2
        zz = Kzz.sum() / m**2
    xz = w @ Kxz.sum(axis=1) / (n * m)
    value = float(xx - 2.0 * xz + zz)
    clamped = value < 0.0
    if value < NEGATIVE_CLAMP and not unbiased:
        raise FloatingPointError(f"biased MMD^2 is {value:.3g}; kernel is not positive definite")
    meta = {
        "kernel": spec.to_dict(),
        "estimator": "unbiased" if unbiased else "biased",
        "weighted": weights is not None,
        "clamped": clamped,
    }
    return DiscrepancyReport("mmd2", max(value, 0.0), meta)


def _gauss_params(params):
    mu, cov = params
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (mu.size, mu.size):
        raise ValueError("covariance shape does not match mean")
    return mu, cov


def renyi2_gaussian(params_T, params_S) -> DiscrepancyReport:
    """Order-2 Renyi divergence D_2(N_T || N_S) in closed form.

    ``params_*`` are ``(mean, covariance)`` pairs. The divergence is finite
    only when 2*cov_S - cov_T is positive definite; otherwise it is reported
    as infinite. ``value`` is the log form in nats; ``meta["exponentiated"]``
    is exp(D_2) = E_S[(p_T/p_S)^2], the factor used by the importance-weighting
    bound.
    """
    mt, ct = _gauss_params(params_T)
    ms, cs = _gauss_params(params_S)
    if mt.size != ms.size:
        raise ValueError("dimension mismatch")
    for name, c in (("target", ct), ("source", cs)):
        if np.linalg.eigvalsh(c)[0] <= 0:
            raise ValueError(f"{name} covariance is not positive definite")
    mix = 2.0 * cs - ct
    if np.linalg.eigvalsh(0.5 * (mix + mix.T))[0] <= 0:
        return DiscrepancyReport(
            "renyi2", math.inf, {"exponentiated": math.inf, "exists": False, "units": "nats"}
        )
    diff = mt - ms
    quad = float(diff @ np.linalg.solve(mix, diff))
    _, ld_mix = np.linalg.slogdet(mix)
    _, ld_t = np.linalg.slogdet(ct)
    _, ld_s = np.linalg.slogdet(cs)
    # D_a = a/2 d'M^-1 d - 1/(2(a-1)) log(|M| / (|C_T|^(1-a) |C_S|^a)),  M = a C_S + (1-a) C_T
    value = quad - 0.5 * (ld_mix + ld_t - 2.0 * ld_s)
    value = max(value, 0.0)
    return DiscrepancyReport(
        "renyi2", value, {"exponentiated": math.exp(value), "exists": True, "units": "nats"}
    )


def pad_from_error(err: float) -> float:
    """Proxy A-distance 2(1 - 2 err), clamped to [0, 2]."""
    return float(min(2.0, max(0.0, 2.0 * (1.0 - 2.0 * err))))


def proxy_a_distance(X, Z, stream=None, lam: float = 1e-3) -> DiscrepancyReport:
    """Domain-classifier proxy for the H-Delta-H divergence.

    A logistic linear discriminator is trained on a random half of the pooled
    samples (domain as label) and tested on the other half.
    """
    from .classifiers import predict, train_weighted

    A, B = _pair(X, Z)
    if A.shape[0] < 20 or B.shape[0] < 20:
        raise ValueError("proxy A-distance needs at least 20 samples per domain")
    rng = as_stream(stream).generator()
    P = np.vstack([A, B])
    y = np.concatenate([-np.ones(A.shape[0], int), np.ones(B.shape[0], int)])
    # split each domain 50/50 so both halves stay balanced
    train = np.zeros(P.shape[0], bool)
    for idx in (np.arange(A.shape[0]), A.shape[0] + np.arange(B.shape[0])):
        perm = rng.permutation(idx)
        train[perm[: len(idx) // 2]] = True
    mu, sd = P[train].mean(axis=0), P[train].std(axis=0)
    sd[sd == 0] = 1.0
    Ps = (P - mu) / sd
    import warnings

    from .optim import ConvergenceWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = train_weighted(Dataset(Ps[train], y[train]), None, "logistic", lam, max_iter=2000)
    pred, _ = predict(model, Ps[~train])
    err = float(np.mean(pred != y[~train]))
    return DiscrepancyReport(
        "proxy_a_distance",
        pad_from_error(err),
        {"heldout_error": err, "proxy_for": "H-Delta-H divergence", "classifier": "logistic"},
    )


def hellinger_hist(X, Z, bins: int = 64) -> DiscrepancyReport:
    """Hellinger distance between histograms on a shared grid over the pooled range."""
    A, B = _pair(X, Z)
    d = A.shape[1]
    if d > 3:
        raise ValueError(f"histogram Hellinger is limited to D <= 3, got D={d}")
    P = np.vstack([A, B])
    lo, hi = P.min(axis=0), P.max(axis=0)
    if np.any(hi <= lo):
        raise ValueError("pooled range is empty in some dimension")
    edges = [np.linspace(lo[k], hi[k], bins + 1) for k in range(d)]
    p, _ = np.histogramdd(A, bins=edges)
    q, _ = np.histogramdd(B, bins=edges)
    p = p.ravel() / A.shape[0]
    q = q.ravel() / B.shape[0]
    h2 = 0.5 * np.sum((np.sqrt(p) - np.sqrt(q)) ** 2)
    return DiscrepancyReport(
        "hellinger", float(np.sqrt(min(max(h2, 0.0), 1.0))), {"bins": bins, "dims": d}
    )
