"""Data model shared by every other module: datasets, loss tags, random streams."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np

VARIANCE_GUARD = 1e-12


class DatasetError(ValueError):
    """Raised when a dataset violates one of its invariants."""

    def __init__(self, reason: str, row: Optional[int] = None, detail: str = ""):
        self.reason = reason
        self.row = row
        msg = reason if row is None else f"{reason} at row {row}"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class LossKind(str, enum.Enum):
    ZERO_ONE = "zero-one"
    QUADRATIC = "quadratic"
    LOGISTIC = "logistic"
    HINGE = "hinge"

    @classmethod
    def parse(cls, value: "LossKind | str") -> "LossKind":
        if isinstance(value, LossKind):
            return value
        try:
            return cls(str(value).replace("_", "-").lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown loss {value!r}; expected one of {names}") from None


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with optional {-1, +1} labels.

    Construction only coerces shapes; call :func:`validate` to check the
    finiteness and label invariants. Arrays are made read-only.
    """

    features: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DatasetError("features must be a 2-d matrix", detail=f"got ndim={X.ndim}")
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        if self.labels is not None:
            y = np.array(self.labels).reshape(-1)
            if y.size and np.all(np.isfinite(y.astype(float))) and np.all(y == np.round(y)):
                y = y.astype(int)
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def unlabeled(self) -> "Dataset":
        return Dataset(self.features)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        y = None if self.labels is None else self.labels[idx]
        return Dataset(self.features[idx], y)

    def to_csv(self, path=None) -> str:
        """Write as CSV with header ``f0,...,f{D-1}[,label]``; returns the text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = [f"f{k}" for k in range(self.dim)]
        if self.labeled:
            header.append("label")
        w.writerow(header)
        for i in range(self.n):
            row = [repr(float(v)) for v in self.features[i]]
            if self.labeled:
                row.append(str(int(self.labels[i])))
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text

    @classmethod
    def from_csv(cls, path_or_text, *, text: bool = False) -> "Dataset":
        raw = path_or_text if text else Path(path_or_text).read_text(encoding="utf-8")
        rows = list(csv.reader(io.StringIO(raw)))
        if not rows:
            raise DatasetError("empty CSV")
        header = [h.strip() for h in rows[0]]
        has_label = bool(header) and header[-1] == "label"
        n_feat = len(header) - int(has_label)
        expected = [f"f{k}" for k in range(n_feat)]
        if header[:n_feat] != expected:
            raise DatasetError("bad CSV header", detail=",".join(header))
        body = [r for r in rows[1:] if r]
        X = np.empty((len(body), n_feat))
        y = np.empty(len(body), dtype=int) if has_label else None
        for i, r in enumerate(body):
            if len(r) != len(header):
                raise DatasetError("wrong field count", row=i)
            try:
                X[i] = [float(v) for v in r[:n_feat]]
                if has_label:
                    y[i] = int(float(r[-1]))
            except ValueError as exc:
                raise DatasetError("unparseable value", row=i, detail=str(exc)) from None
        ds = cls(X, y)
        validate(ds)
        return ds


def validate(dataset: Dataset) -> None:
    """Check every Dataset invariant; raise :class:`DatasetError` on the first failure."""
    X = dataset.features
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise DatasetError("dataset must have at least one row and one column")
    bad = ~np.isfinite(X)
    if bad.any():
        row = int(np.argmax(bad.any(axis=1)))
        kind = "NaN" if np.isnan(X[row]).any() else "infinite value"
        raise DatasetError(kind, row=row)
    if dataset.labels is not None:
        y = dataset.labels
        if y.shape[0] != X.shape[0]:
            raise DatasetError(
                "label-length mismatch", detail=f"{y.shape[0]} labels for {X.shape[0]} rows"
            )
        illegal = ~np.isin(y, (-1, 1))
        if illegal.any():
            row = int(np.argmax(illegal))
            raise DatasetError("illegal label value", row=row, detail=repr(y[row]))


@dataclass(frozen=True)
class StandardizeRecord:
    """Fitted affine maps; ``apply`` and ``inverse`` work on raw matrices."""

    mode: str
    source_mean: np.ndarray
    source_scale: np.ndarray
    target_mean: np.ndarray
    target_scale: np.ndarray

    def apply(self, X: np.ndarray, domain: Literal["source", "target"]) -> np.ndarray:
        mu, sd = self._params(domain)
        return (np.asarray(X, float) - mu) / sd

    def inverse(self, X: np.ndarray, domain: Literal["source", "target"]) -> np.ndarray:
        mu, sd = self._params(domain)
        return np.asarray(X, float) * sd + mu

    def _params(self, domain):
        if domain == "source":
            return self.source_mean, self.source_scale
        if domain == "target":
            return self.target_mean, self.target_scale
        raise ValueError(f"unknown domain {domain!r}")


def _moments(X: np.ndarray, who: str):
    mu = X.mean(axis=0)
    var = X.var(axis=0)
    low = np.flatnonzero(var <= VARIANCE_GUARD)
    if low.size:
        raise DatasetError(f"zero-variance feature {int(low[0])} in {who}")
    return mu, np.sqrt(var)


def standardize(source: Dataset, target: Dataset, mode: str = "per-domain"):
    """Z-score both domains.

    ``per-domain`` fits moments on each domain separately; ``pooled`` fits one
    set of moments on the concatenation and applies it to both.
    """
    validate(source)
    validate(target)
    if source.dim != target.dim:
        raise DatasetError("source and target dimensionality differ")
    if mode == "per-domain":
        ms, ss = _moments(source.features, "source")
        mt, st = _moments(target.features, "target")
    elif mode == "pooled":
        ms, ss = _moments(np.vstack([source.features, target.features]), "pooled data")
        mt, st = ms, ss
    else:
        raise ValueError(f"unknown standardization mode {mode!r}")
    rec = StandardizeRecord(mode, ms, ss, mt, st)
    out_s = Dataset(rec.apply(source.features, "source"), source.labels)
    out_t = Dataset(rec.apply(target.features, "target"), target.labels)
    return out_s, out_t, rec


def class_priors(dataset: Dataset) -> tuple[float, float]:
    """Empirical frequencies ``(p(y=-1), p(y=+1))``."""
    if dataset.labels is None or dataset.labels.size == 0:
        raise DatasetError("class priors need a labeled dataset")
    validate(dataset)
    pos = float(np.mean(dataset.labels == 1))
    return 1.0 - pos, pos


@dataclass(frozen=True)
class RandomStream:
    """Counter-based random source.

    A stream is addressed by ``(seed, path)``; ``child(i)`` extends the path so
    independent trials never share state and never depend on scheduling.
    """

    seed: int
    index: int = 0
    path: tuple[int, ...] = field(default=())

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.index),) + self.path)
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, i: int) -> "RandomStream":
        return RandomStream(self.seed, self.index, self.path + (int(i),))

    def children(self, k: int) -> list["RandomStream"]:
        return [self.child(i) for i in range(k)]


def as_stream(stream: "RandomStream | int | None") -> RandomStream:
    if stream is None:
        return RandomStream(0)
    if isinstance(stream, RandomStream):
        return stream
    return RandomStream(int(stream))


def as_matrix(X, name: str = "X") -> np.ndarray:
    """Accept a Dataset or array-like and return a finite 2-d float array."""
    if isinstance(X, Dataset):
        return X.features
    A = np.asarray(X, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def prior_pair(priors: Sequence[float], name: str = "priors") -> np.ndarray:
    p = np.asarray(priors, dtype=float).reshape(-1)
    if p.shape != (2,) or np.any(p < 0) or not np.isfinite(p).all() or abs(p.sum() - 1) > 1e-9:
        raise ValueError(f"{name} must be a nonnegative pair summing to 1, got {list(p)}")
    return p
