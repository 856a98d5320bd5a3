import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shiftlab.kernels import KernelSpec
from shiftlab.scenarios import rotated_2d_scenario, rotation
from shiftlab.subspace import (
    pca,
    random_feasible,
    subspace_align,
    tca,
    tca_matrices,
    tca_objective,
    variance_dimension,
)
from shiftlab.weights import nearest_source


def test_pca_line():
    t = np.linspace(-1, 1, 11)
    p = pca(np.column_stack([t, t]), 1)
    assert np.allclose(p.basis[:, 0], [1 / np.sqrt(2), 1 / np.sqrt(2)])


def test_pca_isotropic_deterministic():
    X = np.array([[1.0, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]])
    p = pca(X, 3)
    assert np.allclose(p.basis, np.eye(3))
    assert np.allclose(pca(X[::-1], 3).basis, np.eye(3))


def test_pca_matches_dense_oracle():
    X = np.array([[0.0, 1.0], [2.0, 0.5], [1.0, -1.0]])
    p = pca(X, 1)
    C = np.cov(X, rowvar=False, bias=True)
    vals, vecs = np.linalg.eig(C)
    top = vecs[:, np.argmax(vals)]
    assert abs(abs(top @ p.basis[:, 0]) - 1) < 1e-10
    assert p.eigenvalues[0] == pytest.approx(vals.max(), abs=1e-10)


def test_pca_range():
    with pytest.raises(ValueError):
        pca(np.zeros((3, 2)) + np.arange(3)[:, None], 3)


@given(st.integers(0, 10_000))
def test_pca_order_invariant_and_orthonormal(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 4)) @ rng.normal(size=(4, 4))
    p = pca(X, 3)
    q = pca(X[rng.permutation(30)], 3)
    assert np.allclose(p.basis, q.basis, atol=1e-8)
    assert np.allclose(p.basis.T @ p.basis, np.eye(3), atol=1e-8)


def test_sa_identity_on_same_domain(rng):
    X = rng.normal(size=(100, 3)) * [3, 2, 1]
    proj, xs, zt = subspace_align(X, X, 2)
    assert np.allclose(proj.alignment, np.eye(2), atol=1e-8)
    assert np.allclose(xs, zt)


def test_sa_contraction(rng):
    proj, _, _ = subspace_align(rng.normal(size=(50, 4)), rng.normal(size=(60, 4)), 3)
    assert np.linalg.norm(proj.alignment, 2) <= 1 + 1e-8


def test_sa_rotated_improves_1nn():
    src, tgt = rotated_2d_scenario(30.0).sample(500, 500, 42)
    base = np.mean(src.labels[nearest_source(src.features, tgt.features)] == tgt.labels)
    _, xs, zt = subspace_align(src, tgt, 1)
    adapted = np.mean(src.labels[nearest_source(xs, zt)] == tgt.labels)
    assert adapted - base >= 0.10


@given(st.integers(0, 10_000), st.floats(0, 360))
def test_sa_equivariant(seed, angle):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 2)) * [3, 1]
    Z = rng.normal(size=(30, 2)) * [1, 2]
    R = rotation(angle)
    _, a, b = subspace_align(X, Z, 2)
    _, c, d = subspace_align(X @ R.T, Z @ R.T, 2)
    from scipy.spatial.distance import cdist

    assert np.allclose(cdist(a, b), cdist(c, d), atol=1e-8)


def test_variance_dimension():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(500, 3)) * [10, 1, 0.1]
    assert variance_dimension(X) == 1
    assert variance_dimension(X, 0.999) == 2


def test_tca_constraint_and_oracle():
    rng = np.random.default_rng(1)
    X, Z = rng.normal(size=(4, 2)), rng.normal(1, 1, size=(4, 2))
    spec = KernelSpec(bandwidth=1.0)
    proj, es, et = tca(X, Z, spec, d=2, mu=1.0)
    K, L, H, _ = tca_matrices(X, Z, spec)
    C = proj.basis
    assert np.max(np.abs(C.T @ K @ H @ K @ C - np.eye(2))) <= 1e-6
    # dense non-symmetric oracle
    M = K @ L @ K + np.eye(8)
    vals = np.linalg.eigvals(np.linalg.solve(M, K @ H @ K)).real
    top = np.sort(vals)[::-1][:2]
    assert proj.info["objective"] == pytest.approx(np.sum(1 / top), abs=1e-8)


def test_tca_same_domain_zero_mmd(rng):
    X = rng.normal(size=(20, 2))
    _, es, et = tca(X, X, KernelSpec(bandwidth=1.0), d=2)
    assert np.sum((es.mean(0) - et.mean(0)) ** 2) <= 1e-8


def test_tca_beats_random(rng):
    X, Z = rng.normal(size=(30, 2)), rng.normal(0.8, 1.3, size=(25, 2))
    spec = KernelSpec(bandwidth=1.0)
    proj, _, _ = tca(X, Z, spec, d=3)
    K, L, H, _ = tca_matrices(X, Z, spec)
    for _ in range(20):
        C = random_feasible(K, H, 3, rng)
        assert proj.info["objective"] <= tca_objective(C, K, L, 1.0) + 1e-9


def test_tca_errors(rng):
    X = rng.normal(size=(3, 1))
    with pytest.raises(ValueError):
        tca(X, X, d=6)
    with pytest.raises(ValueError):
        tca(X, X, mu=0.0)
