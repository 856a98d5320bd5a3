"""Deterministic solvers for the two feasible-set shapes the weight estimators need.

Box-and-mean-band QPs (KMM, LSIF) are solved by monotone accelerated projected
gradient. The mean-band LP (worst-case weights) is solved exactly by a greedy
fill.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_BUDGET = 50_000


class InfeasibleError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class QpProblem:
    """minimize 0.5 x'Px + q'x  s.t.  lower <= x <= upper,  |mean(x) - 1| <= eps.

    ``eps=None`` drops the mean constraint. ``P`` is symmetrized on construction.
    """

    P: np.ndarray
    q: np.ndarray
    lower: np.ndarray | float = 0.0
    upper: np.ndarray | float = np.inf
    eps: Optional[float] = None

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        q = np.asarray(self.q, dtype=float).reshape(-1)
        n = q.shape[0]
        if P.shape != (n, n):
            raise ValueError(f"P has shape {P.shape}, expected {(n, n)}")
        self.P = 0.5 * (P + P.T)
        self.q = q
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if np.any(self.lower > self.upper):
            raise InfeasibleError("lower bound exceeds upper bound")
        if self.eps is not None and self.eps < 0:
            raise ValueError("eps must be nonnegative")
        lo, hi = self.sum_range()
        if self.lower.sum() > hi + 1e-12 or self.upper.sum() < lo - 1e-12:
            raise InfeasibleError("box and mean-band constraints do not intersect")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def sum_range(self) -> tuple[float, float]:
        if self.eps is None:
            return -np.inf, np.inf
        return self.n * (1.0 - self.eps), self.n * (1.0 + self.eps)

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x)

    def project(self, v: np.ndarray) -> np.ndarray:
        lo, hi = self.sum_range()
        return project_box_band(v, self.lower, self.upper, lo, hi)

    def is_feasible(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            return False
        if self.eps is not None and abs(x.mean() - 1.0) > self.eps + tol:
            return False
        return True


@dataclass
class QpResult:
    x: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    history: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


def project_box_band(v, lower, upper, sum_min=-np.inf, sum_max=np.inf) -> np.ndarray:
    """Euclidean projection onto {lower <= x <= upper, sum_min <= sum(x) <= sum_max}.

    The projection is clip(v - tau) for a scalar shift tau found by bisection
    on the monotone map tau -> sum(clip(v - tau)); the final active set is then
    solved exactly.
    """
    v = np.asarray(v, dtype=float)
    x = np.clip(v, lower, upper)
    s = x.sum()
    if sum_min <= s <= sum_max:
        return x
    target = sum_max if s > sum_max else sum_min
    lower = np.broadcast_to(lower, v.shape)
    upper = np.broadcast_to(upper, v.shape)

    def g(tau):
        return np.clip(v - tau, lower, upper).sum()

    # bracket: g(t_hi) <= target <= g(t_lo)
    t_hi = float(np.max(v - lower))
    fin = np.isfinite(upper)
    if fin.all():
        t_lo = float(np.min(v - upper))
    else:
        t_lo = float(np.min(v - lower)) - max(target - lower.sum(), 0.0) - 1.0
    for _ in range(200):
        mid = 0.5 * (t_lo + t_hi)
        if mid <= t_lo or mid >= t_hi:
            break
        if g(mid) > target:
            t_lo = mid
        else:
            t_hi = mid
    tau = 0.5 * (t_lo + t_hi)
    shifted = v - tau
    free = (shifted > lower) & (shifted < upper)
    if free.any():
        fixed = np.where(shifted <= lower, lower, upper)[~free].sum()
        exact = (v[free].sum() - (target - fixed)) / free.sum()
        cand = np.clip(v - exact, lower, upper)
        if abs(cand.sum() - target) <= abs(g(tau) - target):
            return cand
    return np.clip(shifted, lower, upper)


def _lipschitz(P: np.ndarray) -> float:
    if P.shape[0] <= 3000:
        L = float(np.linalg.eigvalsh(P)[-1])
    else:
        rng = np.random.default_rng(0)
        x = rng.standard_normal(P.shape[0])
        for _ in range(100):
            x = P @ x
            x /= np.linalg.norm(x)
        L = float(x @ (P @ x)) * 1.01
    return max(L, 1e-300)


def solve_qp(
    problem: QpProblem,
    tol: float = DEFAULT_TOL,
    budget: int = DEFAULT_BUDGET,
    x0: Optional[np.ndarray] = None,
    check_every: int = 10,
) -> QpResult:
    """Monotone accelerated projected gradient (FISTA with function-value restart).

    The KKT residual is the fixed-point residual of the projected-gradient map
    at step 1/L, ``max|x - proj(x - grad/L)|``; it vanishes exactly at a KKT
    point. Every accepted iterate is feasible and the objective sequence in
    ``history`` never increases. If the budget runs out the best iterate is
    returned with ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    P, q = problem.P, problem.q
    L = _lipschitz(P)
    x = problem.project(np.ones(problem.n) if x0 is None else np.asarray(x0, dtype=float))
    fx = problem.objective(x)
    y = x.copy()
    t = 1.0
    history = [fx]
    residual = np.inf
    it = 0
    for it in range(1, budget + 1):
        z = problem.project(y - (P @ y + q) / L)
        fz = problem.objective(z)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if fz <= fx:
            x_prev, x, fx = x, z, fz
            y = x + ((t - 1.0) / t_next) * (x - x_prev)
            t = t_next
        else:
            # restart momentum from the incumbent
            y = x.copy()
            t = 1.0
        history.append(fx)
        if it % check_every == 0:
            step = problem.project(x - (P @ x + q) / L)
            residual = float(np.max(np.abs(x - step))) if x.size else 0.0
            if residual <= tol:
                break
    else:
        step = problem.project(x - (P @ x + q) / L)
        residual = float(np.max(np.abs(x - step))) if x.size else 0.0
    converged = residual <= tol
    if not converged:
        warnings.warn(
            f"QP solver stopped after {it} iterations with KKT residual {residual:.3g} > {tol:g}",
            ConvergenceWarning,
            stacklevel=2,
        )
    log.debug("solve_qp: n=%d it=%d residual=%.3g obj=%.6g", problem.n, it, residual, fx)
    return QpResult(x, fx, residual, it, converged, np.asarray(history))


def solve_mean_band_lp(losses, eps: float, cap: Optional[float] = None):
    """Exact maximizer of mean(losses * w) over {w >= 0, |mean(w) - 1| <= eps, w <= cap}.

    Mass is poured greedily onto the largest losses (ties broken by lower
    index). Positive losses receive mass up to n(1 + eps); nonpositive ones
    only as much as the lower band edge n(1 - eps) forces.

    Returns ``(weights, optimum)``. If the caps cannot hold the required mass,
    all capped mass is placed and a warning is issued.
    """
    losses = np.asarray(losses, dtype=float).reshape(-1)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if cap is not None and cap <= 0:
        raise ValueError("cap must be positive")
    n = losses.size
    hi_mass = n * (1.0 + eps)
    lo_mass = max(0.0, n * (1.0 - eps))
    room = np.inf if cap is None else float(cap)
    if cap is not None and n * room < lo_mass:
        warnings.warn(
            f"cap {cap} cannot hold the required mass {lo_mass:g}; placing all capped mass",
            ConvergenceWarning,
            stacklevel=2,
        )
    w = np.zeros(n)
    placed = 0.0
    for i in np.argsort(-losses, kind="stable"):
        limit = hi_mass if losses[i] > 0 else lo_mass
        if placed >= limit:
            break
        amount = min(room, limit - placed)
        w[i] = amount
        placed += amount
    return w, float(losses @ w / n)
