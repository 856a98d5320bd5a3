import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shiftlab.core import (
    Dataset,
    DatasetError,
    LossKind,
    RandomStream,
    class_priors,
    standardize,
    validate,
)


def test_validate_accepts_valid():
    validate(Dataset(np.arange(6.0).reshape(3, 2), [-1, 1, 1]))


def test_validate_nan_names_row():
    X = np.ones((3, 2))
    X[1, 0] = np.nan
    with pytest.raises(DatasetError) as exc:
        validate(Dataset(X))
    assert exc.value.row == 1
    assert "NaN" in str(exc.value)


def test_validate_label_length_mismatch():
    with pytest.raises(DatasetError, match="mismatch"):
        validate(Dataset(np.ones((3, 2)), [1, -1]))


def test_validate_illegal_label():
    with pytest.raises(DatasetError) as exc:
        validate(Dataset(np.ones((3, 1)), [1, 0, 1]))
    assert exc.value.row == 1


@given(
    st.integers(1, 6),
    st.integers(1, 3),
    st.sampled_from(["none", "nan", "inf", "label", "length"]),
    st.integers(0, 1000),
)
def test_validate_iff_invariants(n, d, corruption, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = rng.choice([-1, 1], size=n)
    row = int(rng.integers(n))
    if corruption == "nan":
        X[row, 0] = np.nan
    elif corruption == "inf":
        X[row, -1] = -np.inf
    elif corruption == "label":
        y[row] = 2
    elif corruption == "length":
        y = y[:-1] if n > 1 else np.array([1, 1])
    ds = Dataset(X, y)
    if corruption == "none":
        validate(ds)
    else:
        with pytest.raises(DatasetError):
            validate(ds)


def test_standardize_idempotent_on_standard_data(rng):
    X = rng.normal(size=(500, 2))
    X = (X - X.mean(0)) / X.std(0)
    Z = rng.normal(size=(400, 2))
    Z = (Z - Z.mean(0)) / Z.std(0)
    s, t, rec = standardize(Dataset(X), Dataset(Z))
    assert np.allclose(s.features, X, atol=1e-12)
    assert np.all(np.abs(t.features.mean(0)) < 1e-12)


def test_standardize_twice_equals_once(rng):
    X, Z = rng.normal(3, 2, size=(100, 3)), rng.normal(-1, 5, size=(80, 3))
    s1, t1, _ = standardize(Dataset(X), Dataset(Z))
    s2, t2, _ = standardize(s1, t1)
    assert np.allclose(s1.features, s2.features, atol=1e-10)
    assert np.allclose(t1.features, t2.features, atol=1e-10)


def test_standardize_constant_feature_errors(rng):
    X = np.column_stack([rng.normal(size=10), np.full(10, 3.0)])
    with pytest.raises(DatasetError, match="feature 1"):
        standardize(Dataset(X), Dataset(rng.normal(size=(10, 2))))


def test_standardize_pooled_signs(rng):
    X = rng.normal(5, 2, size=(1000, 1))
    Z = rng.normal(0, 1, size=(1000, 1))
    s, t, rec = standardize(Dataset(X), Dataset(Z), mode="pooled")
    assert s.features.mean() > 0 > t.features.mean()
    assert np.allclose(rec.inverse(rec.apply(X, "source"), "source"), X)


def test_class_priors():
    assert class_priors(Dataset(np.zeros((2, 1)), [-1, 1])) == (0.5, 0.5)
    assert class_priors(Dataset(np.zeros((4, 1)), [1, 1, 1, -1])) == (0.25, 0.75)
    with pytest.raises(Exception):
        class_priors(Dataset(np.zeros((2, 1))))


def test_csv_roundtrip(tmp_path, rng):
    ds = Dataset(rng.normal(size=(7, 3)), rng.choice([-1, 1], 7))
    p = tmp_path / "d.csv"
    text = ds.to_csv(p)
    assert text.splitlines()[0] == "f0,f1,f2,label"
    assert b"\r" not in p.read_bytes()
    back = Dataset.from_csv(p)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)


def test_random_stream_children_independent_and_stable():
    a = RandomStream(7, 3).child(1).generator().random(4)
    b = RandomStream(7, 3).child(1).generator().random(4)
    c = RandomStream(7, 3).child(2).generator().random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_loss_kind_parse():
    assert LossKind.parse("zero_one") is LossKind.ZERO_ONE
    with pytest.raises(ValueError):
        LossKind.parse("squared")
