import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mwparaproduct.dyadic import (
    DyadicInterval,
    StepFunction,
    haar_function,
    haar_synthesize,
    haar_transform,
    lp_norm,
    mean_on,
    read_csv,
    write_csv,
)
from mwparaproduct.errors import InvalidExponentError, ResolutionError

R2 = np.sqrt(2.0)


def chi(N, lo, hi):
    x = (np.arange(2**N) + 0.5) / 2**N
    return StepFunction(((x >= lo) & (x < hi)).astype(float))


def test_haar_function_root():
    assert np.array_equal(haar_function(DyadicInterval(0, 0), 2).values, [-1, -1, 1, 1])


def test_haar_function_left_half():
    np.testing.assert_allclose(haar_function(DyadicInterval(1, 0), 2).values, [-R2, R2, 0, 0])


def test_haar_function_too_coarse():
    with pytest.raises(ResolutionError):
        haar_function(DyadicInterval(1, 0), 1)


def test_transform_indicator():
    c = haar_transform(chi(1, 0, 0.5))
    assert c.mean == pytest.approx(0.5)
    assert c[DyadicInterval(0, 0)] == pytest.approx(-0.5)


def test_transform_constant():
    c = haar_transform(StepFunction(np.full(16, 3.0)))
    assert c.mean == pytest.approx(3.0)
    assert c.energy() == pytest.approx(0.0, abs=1e-28)


def test_transform_of_haar_function():
    c = haar_transform(haar_function(DyadicInterval(0, 0), 3))
    for I, v in c.items():
        assert v == pytest.approx(1.0 if I == DyadicInterval(0, 0) else 0.0, abs=1e-15)


def test_mean_on():
    f = chi(3, 0, 0.5)
    assert mean_on(f, DyadicInterval(0, 0)) == pytest.approx(0.5)
    assert mean_on(f, DyadicInterval(1, 1)) == pytest.approx(0.0)
    assert mean_on(StepFunction(np.array([1.0, 2, 3, 4])), DyadicInterval(1, 1)) == pytest.approx(3.5)
    with pytest.raises(ResolutionError):
        mean_on(f, DyadicInterval(4, 0))


def test_lp_norm_examples():
    assert lp_norm(StepFunction(np.full(8, -2.5)), 3.0) == pytest.approx(2.5)
    assert lp_norm(haar_function(DyadicInterval(0, 0), 4), 2) == pytest.approx(1.0)
    assert lp_norm(haar_function(DyadicInterval(1, 0), 4), 1) == pytest.approx(2**-0.5)
    with pytest.raises(InvalidExponentError):
        lp_norm(StepFunction(np.ones(4)), 0.5)


def test_haar_values_against_direct_inner_products(rng):
    # independent oracle: <f, h_I> by explicit quadrature on the cells
    N = 5
    f = StepFunction(rng.standard_normal(2**N))
    c = haar_transform(f)
    for I in DyadicInterval(0, 0).descendants(N - 1):
        h = haar_function(I, N).values
        assert c[I] == pytest.approx(np.mean(f.values * h), abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9).flatmap(lambda N: arrays(np.float64, 2**N, elements=st.floats(-1e3, 1e3))))
def test_roundtrip_and_parseval(vals):
    f = StepFunction(vals)
    c = haar_transform(f)
    back = haar_synthesize(c).values
    scale = max(1.0, np.abs(vals).max())
    assert np.abs(back - vals).max() <= 1e-12 * scale
    total = np.mean(vals**2)
    assert c.mean**2 + c.energy() == pytest.approx(total, rel=1e-10, abs=1e-12 * scale**2)


def test_vector_valued_transform(rng):
    f = StepFunction(rng.standard_normal((32, 3)))
    c = haar_transform(f)
    np.testing.assert_allclose(haar_synthesize(c).values, f.values, atol=1e-13)
    for k in range(3):
        ck = haar_transform(StepFunction(f.values[:, k]))
        np.testing.assert_allclose(c.levels[2][:, k], ck.levels[2], atol=1e-15)


def test_interval_tree_relations():
    I = DyadicInterval(2, 1)
    assert I.parent == DyadicInterval(1, 0)
    assert I.children == (DyadicInterval(3, 2), DyadicInterval(3, 3))
    assert I.contains(DyadicInterval(4, 5)) and not I.contains(DyadicInterval(4, 8))
    assert I.cell_slice(4) == slice(4, 8)
    assert len(list(DyadicInterval.root().descendants(3))) == 15


def test_csv_roundtrip(tmp_path, rng):
    f = StepFunction(rng.standard_normal((8, 2, 2)))
    write_csv(f, tmp_path / "f.csv")
    g = read_csv(tmp_path / "f.csv")
    assert np.array_equal(f.values, g.values)
