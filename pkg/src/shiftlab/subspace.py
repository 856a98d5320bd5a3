"""PCA, subspace alignment and transfer component analysis."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .core import as_matrix
from .kernels import KernelSpec, gram

SA_VARIANCE_KEEP = 0.95
TCA_DEFAULT_MU = 1.0
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class Projection:
    """Linear map into a low-dimensional space.

    For PCA ``basis`` is D x d with orthonormal columns. For subspace
    alignment it is the source basis and ``target_basis`` / ``alignment`` hold
    C_T and W. For TCA ``basis`` is the (n+m) x d coefficient matrix C applied
    to the joint kernel.
    """

    basis: np.ndarray
    method: str = "pca"
    center: Optional[np.ndarray] = None
    eigenvalues: Optional[np.ndarray] = None
    alignment: Optional[np.ndarray] = None
    target_basis: Optional[np.ndarray] = None
    target_center: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def transform(self, X) -> np.ndarray:
        A = as_matrix(X)
        c = 0.0 if self.center is None else self.center
        return (A - c) @ self.basis

    def to_dict(self) -> dict:
        out = {"method": self.method, "basis": self.basis.tolist()}
        for key in ("center", "eigenvalues", "alignment", "target_basis", "target_center"):
            val = getattr(self, key)
            if val is not None:
                out[key] = np.asarray(val).tolist()
        out["info"] = self.info
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _orient(v: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude entry is positive (first such entry on ties)."""
    k = int(np.argmax(np.abs(v)))
    return v if v[k] >= 0 else -v


def _canonical_basis(vecs: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(vecs).

    The projector onto the span is applied to e_1, e_2, ... in ascending
    coordinate order and the images are Gram-Schmidt orthonormalized, so the
    result does not depend on how the eigensolver rotated a tied eigenspace.
    """
    k = vecs.shape[1]
    P = vecs @ vecs.T
    out = []
    for j in range(P.shape[0]):
        u = P[:, j].copy()
        for b in out:
            u -= (b @ u) * b
        nrm = np.linalg.norm(u)
        if nrm > 1e-8:
            out.append(u / nrm)
            if len(out) == k:
                break
    return np.column_stack(out)


def _sorted_eigh(S: np.ndarray):
    vals, vecs = np.linalg.eigh(S)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    # canonicalize tied eigenspaces
    scale = max(abs(vals[0]), 1.0)
    i = 0
    while i < len(vals):
        j = i + 1
        while j < len(vals) and abs(vals[j] - vals[i]) <= TIE_RTOL * scale:
            j += 1
        if j - i > 1:
            vecs[:, i:j] = _canonical_basis(vecs[:, i:j])
        i = j
    vecs = np.column_stack([_orient(vecs[:, k]) for k in range(vecs.shape[1])])
    return vals, vecs


def pca(X, d: int) -> Projection:
    """Top-``d`` principal directions of the centered (biased) covariance.

    Components are sorted by decreasing eigenvalue, each flipped so its
    largest-magnitude entry is positive; tied eigenspaces are resolved in
    ascending coordinate order.
    """
    A = as_matrix(X)
    n, D = A.shape
    if not (1 <= d <= min(n - 1, D)):
        raise ValueError(f"d must lie in [1, {min(n - 1, D)}], got {d}")
    mu = A.mean(axis=0)
    S = (A - mu).T @ (A - mu) / n
    vals, vecs = _sorted_eigh(S)
    return Projection(vecs[:, :d].copy(), "pca", mu, vals[:d].copy(), info={"all_eigenvalues": vals.tolist()})


def variance_dimension(X, keep: float = SA_VARIANCE_KEEP) -> int:
    """Smallest d whose leading components retain at least ``keep`` of the variance."""
    A = as_matrix(X)
    vals = np.clip(np.linalg.eigvalsh(np.atleast_2d(np.cov(A, rowvar=False, bias=True)))[::-1], 0, None)
    total = vals.sum()
    if total <= 0:
        return 1
    frac = np.cumsum(vals) / total
    d = int(np.searchsorted(frac, keep - 1e-12) + 1)
    return max(1, min(d, A.shape[1], A.shape[0] - 1))


def subspace_align(source, target, d: Optional[int] = None):
    """Align the source principal subspace with the target one.

    ``W = C_S' C_T``; source maps to (X - mean_S) C_S W and target to
    (Z - mean_T) C_T, each domain centered on its own mean. When ``d`` is
    omitted it is the smallest dimension keeping 95% of source variance.

    Returns ``(Projection, mapped_source, mapped_target)``.
    """
    X, Z = as_matrix(source, "source"), as_matrix(target, "target")
    if X.shape[1] != Z.shape[1]:
        raise ValueError("dimension mismatch")
    if d is None:
        d = variance_dimension(X)
    ps, pt = pca(X, d), pca(Z, d)
    W = ps.basis.T @ pt.basis
    xs = (X - ps.center) @ ps.basis @ W
    zt = (Z - pt.center) @ pt.basis
    proj = Projection(
        ps.basis, "subspace_alignment", ps.center, ps.eigenvalues, W, pt.basis, pt.center,
        info={"d": d},
    )
    return proj, xs, zt


def tca_matrices(X, Z, spec: KernelSpec):
    A, B = as_matrix(X, "X"), as_matrix(Z, "Z")
    n, m = A.shape[0], B.shape[0]
    P = np.vstack([A, B])
    spec = spec.resolved(A, B)
    K = gram(P, P, spec)
    e = np.concatenate([np.full(n, 1.0 / n), np.full(m, -1.0 / m)])
    L = np.outer(e, e)
    N = n + m
    H = np.eye(N) - np.full((N, N), 1.0 / N)
    return K, L, H, spec


def tca(X, Z, spec: KernelSpec = KernelSpec(), d: int = 2, mu: float = TCA_DEFAULT_MU):
    """Transfer component analysis.

    Minimizes trace(C'(K L K + mu I) C) subject to C' K H K C = I through
    the generalized symmetric eigenproblem K H K c = g (K L K + mu I) c;
    the ``d`` largest g give the smallest objective sum(1/g). Embeddings
    are K C.

    Returns ``(Projection, embedded_source, embedded_target)``.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    K, L, H, spec = tca_matrices(X, Z, spec)
    N = K.shape[0]
    n = as_matrix(X).shape[0]
    if not (1 <= d <= N - 1):
        raise ValueError(f"d must lie in [1, {N - 1}], got {d}")
    KHK = K @ H @ K
    KHK = 0.5 * (KHK + KHK.T)
    M = K @ L @ K + mu * np.eye(N)
    M = 0.5 * (M + M.T)
    try:
        vals, vecs = linalg.eigh(KHK, M)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"generalized eigensolver failed: {exc}") from exc
    order = np.argsort(-vals, kind="stable")[:d]
    g = vals[order]
    if np.any(g <= 1e-12 * max(1.0, abs(vals).max())):
        raise np.linalg.LinAlgError(
            f"only {int(np.sum(vals > 1e-12))} positive generalized eigenvalues; reduce d"
        )
    C = vecs[:, order] / np.sqrt(g)
    C = np.column_stack([_orient(C[:, k]) for k in range(d)])
    emb = K @ C
    residual = float(np.max(np.abs(C.T @ KHK @ C - np.eye(d))))
    obj = float(np.trace(C.T @ M @ C))
    proj = Projection(
        C, "tca", None, g,
        info={"objective": obj, "constraint_residual": residual, "mu": mu, "kernel": spec.to_dict()},
    )
    return proj, emb[:n], emb[n:]


def tca_objective(C, K, L, mu: float) -> float:
    return float(np.trace(C.T @ (K @ L @ K + mu * np.eye(K.shape[0])) @ C))


def random_feasible(K, H, d: int, rng: np.random.Generator) -> np.ndarray:
    """Random C with C' K H K C = I (whitening of a Gaussian draw)."""
    R = rng.standard_normal((K.shape[0], d))
    G = R.T @ K @ H @ K @ R
    vals, vecs = np.linalg.eigh(0.5 * (G + G.T))
    return R @ vecs @ np.diag(vals**-0.5) @ vecs.T
