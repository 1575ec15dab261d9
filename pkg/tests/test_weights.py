import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mwparaproduct.dyadic import StepFunction
from mwparaproduct.errors import InvalidWeightError, NonIntegrableWeightError, UnknownFamilyError
from mwparaproduct.weights import (
    WeightFamily,
    make_weight,
    matrix_power,
    multiply_pointwise,
    weighted_lp_norm,
)

R2 = np.sqrt(2.0)


def test_matrix_power_examples():
    np.testing.assert_allclose(matrix_power(np.diag([4.0, 9.0]), 0.5), np.diag([2.0, 3.0]), atol=1e-14)
    np.testing.assert_allclose(matrix_power(np.eye(3), -0.7), np.eye(3), atol=1e-14)
    A = np.array([[1.5, -0.5], [-0.5, 1.5]])
    want = np.array([[1 + R2, 1 - R2], [1 - R2, 1 + R2]]) / 2
    np.testing.assert_allclose(matrix_power(A, 0.5), want, atol=1e-14)


def test_matrix_power_rejects_bad_input():
    with pytest.raises(InvalidWeightError):
        matrix_power(np.array([[1.0, 2.0], [0.0, 1.0]]), 0.5)
    with pytest.raises(InvalidWeightError):
        matrix_power(np.diag([1.0, -1.0]), 0.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 2**31 - 1))
def test_power_semigroup(s, t, seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((3, 3))
    A = G @ G.T + 0.5 * np.eye(3)
    lhs = matrix_power(A, s) @ matrix_power(A, t)
    rhs = matrix_power(A, s + t)
    assert np.abs(lhs - rhs).max() <= 1e-8 * max(1.0, np.abs(rhs).max())


def test_constant_family():
    W = make_weight(WeightFamily.constant(np.diag([4.0, 9.0])), 3)
    assert W.values.shape == (8, 2, 2)
    assert np.all(W.values == np.diag([4.0, 9.0]))


def test_scalar_power_midpoints():
    W = make_weight(WeightFamily.scalar_power(1.0, x0=0.0), 2)
    np.testing.assert_allclose(W.values.reshape(-1), [1 / 8, 3 / 8, 5 / 8, 7 / 8])


def test_non_integrable():
    with pytest.raises(NonIntegrableWeightError):
        make_weight(WeightFamily.scalar_power(-2.0, x0=0.5), 4)


def test_unknown_family():
    with pytest.raises(UnknownFamilyError):
        WeightFamily.from_dict({"family": "hilbert"})


def test_family_dict_roundtrip():
    fam = WeightFamily.rotated_powers([0.5, -0.5])
    again = WeightFamily.from_dict(fam.to_dict())
    np.testing.assert_array_equal(make_weight(fam, 5).values, make_weight(again, 5).values)


def test_weights_are_spd():
    for fam in (WeightFamily.diagonal_powers([0.5, -0.5]), WeightFamily.rotated_powers([0.5, -0.5])):
        W = make_weight(fam, 8)
        assert np.allclose(W.values, np.swapaxes(W.values, 1, 2))
        assert np.linalg.eigvalsh(W.values).min() > 0


def test_multiply_pointwise():
    f = StepFunction(np.ones((4, 2)))
    M = StepFunction(np.broadcast_to(np.diag([2.0, 3.0]), (4, 2, 2)).copy())
    np.testing.assert_allclose(multiply_pointwise(M, f).values, np.tile([2.0, 3.0], (4, 1)))
    W = make_weight(WeightFamily.constant(np.diag([4.0, 9.0])), 2)
    e1 = StepFunction(np.tile([1.0, 0.0], (4, 1)))
    np.testing.assert_allclose(multiply_pointwise(W.power(0.5), e1).values, np.tile([2.0, 0.0], (4, 1)))


def test_weighted_lp_norm():
    W = make_weight(WeightFamily.constant(np.diag([4.0, 9.0])), 2)
    assert weighted_lp_norm(W, 2, StepFunction(np.tile([1.0, 0.0], (4, 1)))) == pytest.approx(2.0)
    w = make_weight(WeightFamily.scalar_power(1.0, x0=0.0), 2)
    assert weighted_lp_norm(w, 2, StepFunction(np.ones(4))) == pytest.approx(0.5**0.5)


def test_power_cache_reuses_arrays():
    W = make_weight(WeightFamily.rotated_powers([0.5, -0.5]), 6)
    assert W.power_values(0.5) is W.power_values(0.5)
