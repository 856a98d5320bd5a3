"""Synthetic shift scenarios built from Gaussian class-conditionals.

Every scenario carries the exact generative model of both domains, so density
ratios, class-weight ratios, posteriors and Bayes errors are available in
closed form or by quadrature. Class index 0 is y = -1, index 1 is y = +1, and
prior pairs are always ordered ``(p(y=-1), p(y=+1))``.

A domain can optionally carry an explicit logistic posterior. In that case
features are drawn from the Gaussian mixture first and labels from the
posterior, which is how covariate and concept shift are expressed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import integrate, linalg, special, stats

from .core import Dataset, as_matrix, as_stream, prior_pair

KINDS = ("prior", "covariate", "concept", "general")


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class GaussianClassConditional:
    """Per-class Gaussian: ``means`` is (2, D), ``covs`` is (2, D, D)."""

    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.means, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        if mu.shape[0] != 2:
            raise ValueError(f"need one mean per class, got shape {mu.shape}")
        d = mu.shape[1]
        S = np.asarray(self.covs, dtype=float)
        if S.ndim == 1 and d == 1:
            S = S.reshape(2, 1, 1)
        if S.shape != (2, d, d):
            raise ValueError(f"covariances must have shape {(2, d, d)}, got {S.shape}")
        for c in range(2):
            if np.max(np.abs(S[c] - S[c].T)) > 1e-12:
                raise ValueError(f"covariance of class {c} is not symmetric")
            if np.linalg.eigvalsh(S[c])[0] <= 0:
                raise ValueError(f"covariance of class {c} is not positive definite")
        mu.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", S)

    @classmethod
    def shared(cls, mean, cov) -> "GaussianClassConditional":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls(np.stack([mean, mean]), np.stack([cov, cov]))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @cached_property
    def _factors(self):
        out = []
        for c in range(2):
            chol = np.linalg.cholesky(self.covs[c])
            logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
            out.append((chol, logdet + self.dim * math.log(2.0 * math.pi)))
        return out

    def logpdf(self, X: np.ndarray, c: int) -> np.ndarray:
        chol, const = self._factors[c]
        diff = linalg.solve_triangular(chol, (np.asarray(X, dtype=float) - self.means[c]).T, lower=True)
        return -0.5 * (np.sum(diff * diff, axis=0) + const)

    def same_as(self, other: "GaussianClassConditional") -> bool:
        return np.array_equal(self.means, other.means) and np.array_equal(self.covs, other.covs)

    def __eq__(self, other):
        return isinstance(other, GaussianClassConditional) and self.same_as(other)

    def __hash__(self):
        return hash((self.means.tobytes(), self.covs.tobytes()))


@dataclass(frozen=True)
class LogisticPosterior:
    """p(y=+1 | x) = sigmoid(x . coef + offset)."""

    coef: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.coef, dtype=float))
        w.setflags(write=False)
        object.__setattr__(self, "coef", w)
        object.__setattr__(self, "offset", float(self.offset))

    def prob_pos(self, X) -> np.ndarray:
        return special.expit(as_matrix(X) @ self.coef + self.offset)

    def __eq__(self, other):
        return (
            isinstance(other, LogisticPosterior)
            and np.array_equal(self.coef, other.coef)
            and self.offset == other.offset
        )

    def __hash__(self):
        return hash((self.coef.tobytes(), self.offset))


@dataclass(frozen=True, eq=False)
class DomainModel:
    priors: np.ndarray
    conditionals: GaussianClassConditional
    posterior: Optional[LogisticPosterior] = None

    def __post_init__(self):
        p = prior_pair(self.priors)
        p.setflags(write=False)
        object.__setattr__(self, "priors", p)
        if self.posterior is not None and self.posterior.coef.shape[0] != self.dim:
            raise ValueError("posterior coefficient length does not match dimension")

    @property
    def dim(self) -> int:
        return self.conditionals.dim

    def marginal_logpdf(self, X) -> np.ndarray:
        X = as_matrix(X)
        parts = []
        for c in range(2):
            if self.priors[c] > 0:
                parts.append(math.log(self.priors[c]) + self.conditionals.logpdf(X, c))
        return special.logsumexp(np.stack(parts), axis=0)

    def posterior_pos(self, X) -> np.ndarray:
        """p(y=+1 | x) under this domain."""
        X = as_matrix(X)
        if self.posterior is not None:
            return self.posterior.prob_pos(X)
        with np.errstate(divide="ignore"):
            lp = [np.log(self.priors[c]) + self.conditionals.logpdf(X, c) for c in range(2)]
        return special.expit(lp[1] - lp[0])

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        if n < 1:
            raise ValueError("sample size must be >= 1")
        comp = (rng.random(n) < self.priors[1]).astype(int)
        z = rng.standard_normal((n, self.dim))
        X = np.empty((n, self.dim))
        for c in range(2):
            chol = np.linalg.cholesky(self.conditionals.covs[c])
            sel = comp == c
            X[sel] = self.conditionals.means[c] + z[sel] @ chol.T
        if self.posterior is None:
            y = 2 * comp - 1
        else:
            u = rng.random(n)
            y = np.where(u < self.posterior.prob_pos(X), 1, -1)
        return Dataset(X, y)

    def __eq__(self, other):
        return isinstance(other, DomainModel) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))

    def to_dict(self) -> dict:
        d = {
            "priors": self.priors.tolist(),
            "means": self.conditionals.means.tolist(),
            "covs": [c.reshape(-1).tolist() for c in self.conditionals.covs],
        }
        if self.posterior is not None:
            d["posterior"] = {"coef": self.posterior.coef.tolist(), "offset": self.posterior.offset}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DomainModel":
        means = np.asarray(d["means"], dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        dim = means.shape[1]
        covs = np.asarray(d["covs"], dtype=float).reshape(2, dim, dim)
        post = d.get("posterior")
        posterior = None if post is None else LogisticPosterior(post["coef"], post.get("offset", 0.0))
        return cls(d["priors"], GaussianClassConditional(means, covs), posterior)


@dataclass(frozen=True)
class ShiftScenario:
    """Source and target generative models plus the shift type they realize."""

    source: DomainModel
    target: DomainModel
    kind: str = "general"
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        if self.source.dim != self.target.dim:
            raise ValueError("source and target dimensionality differ")
        S, T = self.source, self.target
        if self.kind == "prior":
            if not S.conditionals.same_as(T.conditionals):
                raise ValueError("prior shift requires identical class-conditionals")
            if S.posterior is not None or T.posterior is not None:
                raise ValueError("prior shift is defined through class-conditionals only")
        elif self.kind == "covariate":
            if S.posterior is None or S.posterior != T.posterior:
                raise ValueError("covariate shift requires one shared explicit posterior")
        elif self.kind == "concept":
            same_marginal = np.array_equal(S.priors, T.priors) and S.conditionals.same_as(
                T.conditionals
            )
            if not same_marginal:
                raise ValueError("concept shift requires identical marginals p(x)")
            if T.posterior is None and S.posterior is None:
                raise ValueError("concept shift needs an explicit posterior in some domain")

    @property
    def dim(self) -> int:
        return self.source.dim

    def domain(self, which: str) -> DomainModel:
        if which == "source":
            return self.source
        if which == "target":
            return self.target
        raise ValueError(f"unknown domain {which!r}")

    def sample(self, n: int, m: int, stream=None) -> tuple[Dataset, Dataset]:
        s = as_stream(stream)
        src = self.source.sample(n, s.child(0).generator())
        tgt = self.target.sample(m, s.child(1).generator())
        return src, tgt

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "name": self.name,
            "source": self.source.to_dict(),
            "target": self.target.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShiftScenario":
        return cls(
            DomainModel.from_dict(d["source"]),
            DomainModel.from_dict(d["target"]),
            d.get("kind", "general"),
            d.get("name", "custom"),
        )


# ---------------------------------------------------------------------------
# scenario builders


FIG3_CONDITIONALS = GaussianClassConditional(means=[[-1.0], [1.0]], covs=[[[1.0]], [[1.0]]])
# balanced source; the positive class takes 3/4 of the target
FIG3_SOURCE_PRIORS = (0.5, 0.5)
FIG3_TARGET_PRIORS = (0.25, 0.75)


def prior_shift_scenario(priors_S, priors_T, conditionals=None) -> ShiftScenario:
    cond = FIG3_CONDITIONALS if conditionals is None else conditionals
    return ShiftScenario(
        DomainModel(priors_S, cond), DomainModel(priors_T, cond), "prior", "prior_shift"
    )


def covariate_shift_1d_scenario(sigma_T: float, slope: float = 2.0, offset: float = 0.0):
    """Source N(0, 1), target N(0, sigma_T^2), shared posterior sigmoid(slope*x + offset)."""
    if not sigma_T > 0:
        raise ValueError(f"sigma_T must be positive, got {sigma_T}")
    post = LogisticPosterior([slope], offset)
    src = DomainModel([0.5, 0.5], GaussianClassConditional.shared([0.0], [[1.0]]), post)
    tgt = DomainModel(
        [0.5, 0.5], GaussianClassConditional.shared([0.0], [[sigma_T**2]]), post
    )
    return ShiftScenario(src, tgt, "covariate", "covariate_1d")


def concept_shift_scenario(offset_S: float = 0.0, offset_T: float = 1.0, slope: float = 2.0):
    """Shared N(0, 1) marginal; the logistic posterior's offset moves between domains."""
    marg = GaussianClassConditional.shared([0.0], [[1.0]])
    src = DomainModel([0.5, 0.5], marg, LogisticPosterior([slope], offset_S))
    tgt = DomainModel([0.5, 0.5], marg, LogisticPosterior([slope], offset_T))
    return ShiftScenario(src, tgt, "concept", "concept_shift")


def rotation(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def rotated_2d_scenario(
    angle_deg: float = 30.0,
    center=(0.0, 4.0),
    separation: float = 3.0,
    cov=((1.0, 0.0), (0.0, 0.3)),
) -> ShiftScenario:
    """Two Gaussian classes in 2-d; the target is the source rotated about the origin.

    Classes sit at ``center -/+ (separation/2, 0)``.
    """
    c = np.asarray(center, dtype=float)
    off = np.array([separation / 2.0, 0.0])
    means = np.stack([c - off, c + off])
    S = np.asarray(cov, dtype=float)
    covs = np.stack([S, S])
    R = rotation(angle_deg)
    src = GaussianClassConditional(means, covs)
    tgt = GaussianClassConditional(means @ R.T, np.stack([R @ S @ R.T] * 2))
    return ShiftScenario(
        DomainModel([0.5, 0.5], src), DomainModel([0.5, 0.5], tgt), "general", "rotated_2d"
    )


def orthogonal_scenario(separation: float = 2.0, spread: float = 5.0, thin: float = 0.5):
    """Source classes split along x, target classes split along y.

    Each class is elongated along the other axis, so no single linear
    boundary serves both domains.
    """
    h = separation / 2.0
    src = GaussianClassConditional(
        [[-h, 0.0], [h, 0.0]], np.stack([np.diag([thin**2, spread**2])] * 2)
    )
    tgt = GaussianClassConditional(
        [[0.0, -h], [0.0, h]], np.stack([np.diag([spread**2, thin**2])] * 2)
    )
    return ShiftScenario(
        DomainModel([0.5, 0.5], src), DomainModel([0.5, 0.5], tgt), "general", "orthogonal"
    )


def identical_scenario(dim: int = 1, separation: float = 2.0) -> ShiftScenario:
    mu = np.zeros((2, dim))
    mu[0, 0], mu[1, 0] = -separation / 2, separation / 2
    cond = GaussianClassConditional(mu, np.stack([np.eye(dim)] * 2))
    dom = DomainModel([0.5, 0.5], cond)
    return ShiftScenario(dom, dom, "prior", "identical")


# ---------------------------------------------------------------------------
# generators


def gen_prior_shift(priors_S, priors_T, conditionals=None, n=500, m=500, stream=None):
    """Labels from each domain's priors, features from the shared class-conditionals."""
    return prior_shift_scenario(priors_S, priors_T, conditionals).sample(n, m, stream)


def gen_covariate_shift_1d(sigma_T: float, n: int = 500, m: int = 500, stream=None, **kw):
    return covariate_shift_1d_scenario(sigma_T, **kw).sample(n, m, stream)


def gen_concept_shift(offset_S=0.0, offset_T=1.0, n=500, m=500, stream=None):
    return concept_shift_scenario(offset_S, offset_T).sample(n, m, stream)


def gen_rotated_2d(angle_deg=30.0, n=500, m=500, stream=None, **kw):
    return rotated_2d_scenario(angle_deg, **kw).sample(n, m, stream)


# ---------------------------------------------------------------------------
# oracles


def true_importance_weights(scenario: ShiftScenario, points) -> np.ndarray:
    """Exact p_T(x) / p_S(x) from the mixture densities."""
    X = as_matrix(points)
    if X.shape[1] != scenario.dim:
        raise ValueError("points have the wrong dimensionality")
    return np.exp(scenario.target.marginal_logpdf(X) - scenario.source.marginal_logpdf(X))


def true_class_weights(scenario: ShiftScenario) -> np.ndarray:
    """p_T(y) / p_S(y) for y = -1, +1."""
    if scenario.kind != "prior":
        raise ValueError("class weights are only defined for prior-shift scenarios")
    pS, pT = scenario.source.priors, scenario.target.priors
    if np.any(pS <= 0):
        raise ValueError("source prior of a class is zero; class weight undefined")
    return pT / pS


def _box(dom: DomainModel, k: int, width: float = 12.0):
    sd = np.sqrt(np.array([np.diag(c) for c in dom.conditionals.covs]))  # (2, D)
    lo = np.min(dom.conditionals.means - width * sd, axis=0)
    hi = np.max(dom.conditionals.means + width * sd, axis=0)
    return lo[k], hi[k]


def _quad(f, lo, hi, points=None, tol=1e-7):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            pts = None
            if points is not None:
                pts = sorted({float(p) for p in points if lo < p < hi})
            val, err = integrate.quad(f, lo, hi, points=pts or None, epsabs=tol, limit=500)
        except integrate.IntegrationWarning as exc:
            raise IntegrationError(f"quadrature did not converge: {exc}") from None
    return val, err


def bayes_error(
    scenario: ShiftScenario,
    domain: str = "target",
    tol: float = 1e-5,
    mc_samples: int = 400_000,
    stream=None,
    return_stderr: bool = False,
):
    """Minimal 0/1 risk under one domain's joint distribution.

    Quadrature in 1-d and 2-d; Monte Carlo above that (standard error is
    returned alongside the value when ``return_stderr`` is set).
    """
    dom = scenario.domain(domain)

    def density_min(X):
        p = dom.posterior_pos(X)
        return np.minimum(p, 1.0 - p) * np.exp(dom.marginal_logpdf(X))

    D = dom.dim
    if D == 1:
        lo, hi = _box(dom, 0)
        pts = list(dom.conditionals.means[:, 0])
        val, err = _quad(lambda x: float(density_min(np.array([[x]]))[0]), lo, hi, pts, tol / 10)
        stderr = err
    elif D == 2:
        (lo0, hi0), (lo1, hi1) = _box(dom, 0), _box(dom, 1)
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.dblquad(
                    lambda x1, x0: float(density_min(np.array([[x0, x1]]))[0]),
                    lo0,
                    hi0,
                    lo1,
                    hi1,
                    epsabs=tol / 10,
                )
            except integrate.IntegrationWarning as exc:
                raise IntegrationError(f"quadrature did not converge: {exc}") from None
        stderr = err
    else:
        rng = as_stream(stream).generator()
        X = dom.sample(mc_samples, rng).features
        p = dom.posterior_pos(X)
        vals = np.minimum(p, 1.0 - p)
        val = float(vals.mean())
        stderr = float(vals.std(ddof=1) / math.sqrt(mc_samples))
    if stderr > tol and D <= 2:
        raise IntegrationError(f"error estimate {stderr:.3g} exceeds tolerance {tol:g}")
    val = float(min(max(val, 0.0), 0.5))
    return (val, stderr) if return_stderr else val


def linear_risk(scenario: ShiftScenario, coef, intercept: float, domain: str = "target") -> float:
    """Exact zero-one risk of sign(x . coef + intercept) (score 0 counts as +1).

    Closed form for class-generated domains in any dimension; quadrature for
    1-d domains with an explicit posterior.
    """
    dom = scenario.domain(domain)
    w = np.atleast_1d(np.asarray(coef, dtype=float))
    if dom.posterior is None:
        risk = 0.0
        for c, sign in ((0, -1.0), (1, 1.0)):
            if dom.priors[c] == 0:
                continue
            mu = float(dom.conditionals.means[c] @ w + intercept)
            sd = float(np.sqrt(w @ dom.conditionals.covs[c] @ w))
            if sd == 0:
                wrong = float((mu >= 0) != (sign > 0))
            else:
                # P(score < 0) for the positive class, P(score >= 0) for the negative
                wrong = stats.norm.cdf(-mu / sd) if sign > 0 else stats.norm.sf(-mu / sd)
            risk += dom.priors[c] * wrong
        return float(risk)
    if dom.dim != 1:
        raise NotImplementedError("analytic risk with explicit posteriors is 1-d only")

    def integrand(x):
        X = np.array([[x]])
        p = float(dom.posterior_pos(X)[0])
        dens = float(np.exp(dom.marginal_logpdf(X))[0])
        pred_pos = x * w[0] + intercept >= 0
        return dens * ((1.0 - p) if pred_pos else p)

    lo, hi = _box(dom, 0)
    pts = [] if w[0] == 0 else [-intercept / w[0]]
    val, _ = _quad(integrand, lo, hi, pts, 1e-9)
    return float(val)
