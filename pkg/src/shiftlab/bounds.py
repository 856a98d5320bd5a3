"""Generalization-bound calculators and estimators for their data-dependent terms.

All logarithms are natural.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Dataset, DatasetError, as_stream
from .discrepancy import _jsonable, proxy_a_distance, renyi2_gaussian
from .optim import ConvergenceWarning

CORTES_EXPONENT = 3.0 / 8.0
MIX_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class BoundInputs:
    n: int
    m: int
    hypotheses: float = 1.0
    c: float = 1.0
    delta: float = 0.05
    d2: float = 1.0
    e_star: float = 0.0
    d_hdh: float = 0.0
    complexity: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        checks = [
            (self.n >= 1 and self.m >= 0, "sample counts must be positive"),
            (self.hypotheses >= 1, "|H| must be >= 1"),
            (self.c > 0, "pseudo-dimension must be positive"),
            (0 < self.delta < 1, "delta must lie in (0, 1)"),
            (self.d2 >= 1, "exponentiated Renyi term must be >= 1"),
            (0 <= self.e_star <= 1, "e* must lie in [0, 1]"),
            (0 <= self.d_hdh <= 2, "d_HdH must lie in [0, 2]"),
            (self.complexity >= 0, "C(H) must be nonnegative"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def pac_bound(hypotheses: float, n: int, delta: float) -> float:
    """sqrt((log|H| + log(2/delta)) / (2n)) for a finite hypothesis class."""
    if hypotheses < 1 or n < 1 or not (0 < delta < 1):
        raise ValueError("need |H| >= 1, n >= 1 and 0 < delta < 1")
    return math.sqrt((math.log(hypotheses) + math.log(2.0 / delta)) / (2.0 * n))


def cortes_iw_bound(d2: float, c: float, n: int, delta: float) -> float:
    """Importance-weighting deviation bound.

    2^(5/4) sqrt(d2) ((c/n) log(2ne/c) + (1/n) log(4/delta))^(3/8), with d2 the
    exponentiated order-2 Renyi divergence. An infinite d2 gives an infinite
    (void) bound.
    """
    if not (c > 0 and n > c and 0 < delta < 1):
        raise ValueError("need c > 0, n > c and 0 < delta < 1")
    if math.isinf(d2):
        return math.inf
    if not d2 >= 1:
        raise ValueError("d2 must be >= 1 (exponentiated form)")
    inner = (c / n) * math.log(2.0 * n * math.e / c) + math.log(4.0 / delta) / n
    return 2.0**1.25 * math.sqrt(d2) * inner**CORTES_EXPONENT


def ben_david_bound(e_star: float, d_hdh: float, complexity: float) -> float:
    """e*_{S,T} + d_HdH / 2 + C(H); an upper bound on target error minus source error."""
    if not (0 <= e_star <= 1 and 0 <= d_hdh <= 2 and complexity >= 0):
        raise ValueError("need e* in [0,1], d_HdH in [0,2], C(H) >= 0")
    return e_star + 0.5 * d_hdh + complexity


def marginal_gaussian(domain) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of a domain's marginal (moment match if it is a mixture)."""
    pri = domain.priors
    mus = domain.conditionals.means
    covs = domain.conditionals.covs
    mu = pri @ mus
    second = sum(pri[c] * (covs[c] + np.outer(mus[c], mus[c])) for c in range(2))
    return mu, second - np.outer(mu, mu)


def joint_ideal_error(source: Dataset, target: Dataset, lam: float = 1e-3):
    """min over models trained on source/target mixes of e_S(h) + e_T(h).

    Returns ``(e_star, details)``; risks are empirical zero-one errors.
    """
    from .classifiers import predict, train_weighted

    X = np.vstack([source.features, target.features])
    y = np.concatenate([source.labels, target.labels])
    n, m = source.n, target.n
    best, details = math.inf, []
    for a in MIX_GRID:
        w = np.concatenate([np.full(n, (1 - a) * (n + m) / n), np.full(m, a * (n + m) / m)])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            model = train_weighted(Dataset(X, y), w, "logistic", lam, max_iter=2000)
        es = float(np.mean(predict(model, source.features)[0] != source.labels))
        et = float(np.mean(predict(model, target.features)[0] != target.labels))
        details.append({"mix": a, "e_S": es, "e_T": et})
        best = min(best, es + et)
    return min(best, 1.0), details


def estimate_bound_terms(
    source: Dataset,
    target: Dataset,
    scenario=None,
    stream=None,
    hypotheses: float = 1.0,
    c: float = 1.0,
    delta: float = 0.05,
    complexity: float = 0.0,
) -> BoundInputs:
    """Populate BoundInputs from a synthetic run with target labels.

    e* comes from pooled training over a grid of source/target mixes, d_HdH
    from the proxy A-distance and d2 from the closed-form Renyi divergence
    between (moment-matched) Gaussian marginals of ``scenario``. Without a
    scenario d2 is left at 1 and flagged. C(H) is taken as given.
    """
    if target.labels is None or source.labels is None:
        raise DatasetError("bound-term estimation needs labeled source and target")
    s = as_stream(stream)
    e_star, mixes = joint_ideal_error(source, target)
    pad = proxy_a_distance(source.features, target.features, s.child(0))
    meta = {"e_star_mixes": mixes, "d_hdh_estimator": "proxy A-distance", "log": "natural"}
    d2 = 1.0
    if scenario is not None:
        rep = renyi2_gaussian(marginal_gaussian(scenario.target), marginal_gaussian(scenario.source))
        d2 = rep.meta["exponentiated"]
        meta["renyi2_log"] = rep.value
        meta["d2_source"] = "scenario parameters"
    else:
        meta["d2_source"] = "not available"
    return BoundInputs(
        source.n, target.n, hypotheses, c, delta, d2, e_star, pad.value, complexity, meta
    )
