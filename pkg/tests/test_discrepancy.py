import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shiftlab.discrepancy import (
    DiscrepancyReport,
    hellinger_hist,
    mmd2,
    pad_from_error,
    proxy_a_distance,
    renyi2_gaussian,
)
from shiftlab.kernels import KernelSpec
from shiftlab.scenarios import covariate_shift_1d_scenario
from shiftlab.weights import kmm_weights


def test_mmd_identical_zero(rng):
    X = rng.normal(size=(60, 2))
    assert mmd2(X, X).value <= 1e-12


def test_mmd_hand_expansion():
    X = np.array([[0.0], [1.0]])
    Z = np.array([[0.5], [2.0]])
    w = np.array([0.5, 1.5])
    k = lambda a, b: math.exp(-((a - b) ** 2) / 2)
    xx = sum(w[i] * w[j] * k(X[i, 0], X[j, 0]) for i in range(2) for j in range(2)) / 4
    xz = sum(w[i] * k(X[i, 0], Z[j, 0]) for i in range(2) for j in range(2)) / 4
    zz = sum(k(Z[i, 0], Z[j, 0]) for i in range(2) for j in range(2)) / 4
    got = mmd2(X, Z, KernelSpec(bandwidth=1.0), weights=w).value
    assert got == pytest.approx(xx - 2 * xz + zz, abs=1e-12)


def test_mmd_kmm_weights_reduce(rng):
    sc = covariate_shift_1d_scenario(1.5)
    src, tgt = sc.sample(300, 300, 1)
    spec = KernelSpec().resolved(src.features, tgt.features)
    w = kmm_weights(src, tgt, spec)
    assert mmd2(src, tgt, spec, w).value <= mmd2(src, tgt, spec).value


def test_mmd_symmetric(rng):
    X, Z = rng.normal(size=(50, 2)), rng.normal(1, 1, size=(70, 2))
    spec = KernelSpec(bandwidth=1.1)
    assert mmd2(X, Z, spec).value == pytest.approx(mmd2(Z, X, spec).value, abs=1e-12)


def test_mmd_monotone_in_separation():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(2000, 1))
    base = rng.normal(size=(2000, 1))
    spec = KernelSpec(bandwidth=1.0)
    vals = [mmd2(X, base + s, spec).value for s in (0.0, 0.5, 1.0, 2.0)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_mmd_unbiased_flag_and_clamp(rng):
    X = rng.normal(size=(30, 1))
    Z = rng.normal(size=(30, 1))
    rep = mmd2(X, Z, KernelSpec(bandwidth=1.0), unbiased=True)
    assert rep.value >= 0
    assert rep.meta["estimator"] == "unbiased"
    assert isinstance(rep.meta["clamped"], bool)


def test_mmd_dimension_mismatch():
    with pytest.raises(ValueError):
        mmd2(np.zeros((3, 2)), np.zeros((3, 1)))


def renyi_integral_oracle(mt, st_, ms, ss):
    mpmath.mp.dps = 30
    pt = lambda x: mpmath.npdf(x, mt, st_)
    ps = lambda x: mpmath.npdf(x, ms, ss)
    val = mpmath.quad(lambda x: pt(x) ** 2 / ps(x), [-mpmath.inf, 0, mpmath.inf])
    return float(mpmath.log(val))


def test_renyi_examples():
    rep = renyi2_gaussian(([0.0], [[1.0]]), ([0.0], [[1.0]]))
    assert rep.value == 0.0 and rep.meta["exponentiated"] == 1.0
    rep = renyi2_gaussian(([1.0], [[1.0]]), ([0.0], [[1.0]]))
    assert rep.value == pytest.approx(1.0, abs=1e-12)
    assert rep.value == pytest.approx(renyi_integral_oracle(1, 1, 0, 1), abs=1e-10)
    rep = renyi2_gaussian(([0.0], [[3.0]]), ([0.0], [[1.0]]))
    assert math.isinf(rep.value)
    assert json.loads(rep.to_json())["value"] == "inf"


def test_renyi_matches_integral_nontrivial():
    rep = renyi2_gaussian(([0.4], [[1.5**2]]), ([-0.2], [[1.2**2]]))
    assert rep.value == pytest.approx(renyi_integral_oracle(0.4, 1.5, -0.2, 1.2), abs=1e-10)


@given(st.integers(0, 10_000))
def test_renyi_nonnegative(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    A = rng.normal(size=(d, d))
    cs = A @ A.T + d * np.eye(d)
    ct = 0.8 * cs + 0.1 * np.eye(d)
    mt, ms = rng.normal(size=d), rng.normal(size=d)
    assert renyi2_gaussian((mt, ct), (ms, cs)).value >= 0
    assert renyi2_gaussian((ms, cs), (ms, cs)).value == pytest.approx(0.0, abs=1e-12)
    if not np.allclose(mt, ms):
        assert renyi2_gaussian((mt, cs), (ms, cs)).value > 0


def test_pad_examples(rng):
    assert pad_from_error(0.25) == 1.0
    X = rng.normal(size=(1000, 2))
    Z = rng.normal(size=(1000, 2))
    assert proxy_a_distance(X, Z, stream=1).value <= 0.15
    assert proxy_a_distance(X, Z + 20, stream=1).value >= 1.8
    with pytest.raises(ValueError):
        proxy_a_distance(X[:10], Z)


def test_hellinger_examples(rng):
    X = rng.normal(size=(500, 1))
    assert hellinger_hist(X, X).value == 0.0
    assert hellinger_hist(X, X + 100).value == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        hellinger_hist(np.zeros((5, 4)), np.ones((5, 4)))
    with pytest.raises(ValueError):
        hellinger_hist(np.zeros((5, 1)), np.zeros((5, 1)))


def test_report_json_shape():
    rep = DiscrepancyReport("mmd2", 0.5, {"kernel": {"bandwidth": 1.0}})
    d = json.loads(rep.to_json())
    assert set(d) == {"measure", "value", "meta"}
