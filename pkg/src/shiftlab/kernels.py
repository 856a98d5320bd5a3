"""Kernel evaluation, Gram matrices and the median bandwidth heuristic."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .core import RandomStream, as_matrix

MEDIAN_EXACT_LIMIT = 5000


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and its parameters.

    ``bandwidth=None`` on a gaussian kernel means "resolve with the median
    heuristic on the data it is applied to".
    """

    family: str = "gaussian"
    bandwidth: Optional[float] = None
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if self.family not in ("gaussian", "polynomial"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")

    def resolved(self, *arrays) -> "KernelSpec":
        if self.family == "gaussian" and self.bandwidth is None:
            return replace(self, bandwidth=median_heuristic(*arrays))
        return self

    def to_dict(self) -> dict:
        if self.family == "gaussian":
            return {"family": "gaussian", "bandwidth": self.bandwidth}
        return {"family": "polynomial", "degree": self.degree, "offset": self.offset}


def gram(A, B, spec: KernelSpec = KernelSpec()) -> np.ndarray:
    """Kernel matrix with entry (i, j) = k(a_i, b_j)."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]} columns")
    if spec.family == "gaussian":
        sigma = spec.bandwidth if spec.bandwidth is not None else median_heuristic(A, B)
        d2 = cdist(A, B, "sqeuclidean")
        return np.exp(-d2 / (2.0 * sigma * sigma))
    return (A @ B.T + spec.offset) ** spec.degree


def median_heuristic(A, B=None, stream: Optional[RandomStream] = None) -> float:
    """Median of nonzero pairwise Euclidean distances over the pooled points.

    Pools above 5000 points are subsampled (seeded, default stream 0).
    """
    P = as_matrix(A, "A")
    if B is not None:
        P = np.vstack([P, as_matrix(B, "B")])
    if P.shape[0] < 2:
        raise ValueError("median heuristic needs at least 2 points")
    if P.shape[0] > MEDIAN_EXACT_LIMIT:
        rng = (stream or RandomStream(0)).generator()
        idx = np.sort(rng.choice(P.shape[0], MEDIAN_EXACT_LIMIT, replace=False))
        P = P[idx]
    d = pdist(P)
    d = d[d > 0]
    if d.size == 0:
        raise ValueError("all pairwise distances are zero; bandwidth undefined")
    return float(np.median(d))
