import numpy as np
import pytest

from mwparaproduct.dyadic import DyadicInterval, StepFunction, haar_function, haar_transform
from mwparaproduct.errors import InvalidInputError, SingularMultiplierError
from mwparaproduct.operators import (
    MultiplierSpec,
    SymbolCoefficients,
    bmo_corpus,
    bmo_norm,
    build_multiplier,
    conjugated_paraproduct,
    conjugated_paraproduct_M,
    dyadic_maximal,
    haar_multiplier,
    matrix_carleson_norm,
    matrix_paraproduct,
    paraproduct,
    square_function,
)
from mwparaproduct.weights import WeightFamily, make_weight

ROOT = DyadicInterval.root()
R2 = np.sqrt(2.0)


def h0(N):
    return haar_function(ROOT, N).values


def vec(N, *cols):
    return StepFunction(np.column_stack(cols))


def brute_paraproduct(b, f):
    # direct sum over all I of b_I (m_I f) h_I
    N = b.resolution
    out = np.zeros_like(f.values, dtype=float)
    for I in ROOT.descendants(N - 1):
        bI = b.levels[I.level][I.index]
        mf = f.values[I.cell_slice(N)].mean(axis=0)
        h = haar_function(I, N).values
        out += np.multiply.outer(h, bI @ mf if np.ndim(bI) == 2 else bI * mf)
    return out


def test_paraproduct_examples():
    b = SymbolCoefficients.from_mapping({ROOT: 1.0}, 3)
    np.testing.assert_allclose(paraproduct(b, StepFunction(np.ones(8))).values, h0(3))
    z = SymbolCoefficients.zeros(3)
    assert np.all(paraproduct(z, StepFunction(np.arange(8.0))).values == 0)
    b = SymbolCoefficients.from_mapping({ROOT: 1.0, DyadicInterval(1, 0): 1.0}, 2)
    f = StepFunction(np.array([1.0, 1.0, 0.0, 0.0]))
    np.testing.assert_allclose(paraproduct(b, f).values, [-0.5 - R2, -0.5 + R2, 0.5, 0.5], atol=1e-14)


def test_paraproduct_against_brute_force(rng):
    N = 6
    b = SymbolCoefficients(N, tuple(rng.standard_normal(2**l) for l in range(N)))
    f = StepFunction(rng.standard_normal((2**N, 2)))
    np.testing.assert_allclose(paraproduct(b, f).values, brute_paraproduct(b, f), atol=1e-12)


def test_matrix_paraproduct(rng):
    N = 3
    B = SymbolCoefficients.from_mapping({ROOT: np.eye(2)}, N, 2)
    out = matrix_paraproduct(B, StepFunction(np.ones((8, 2)))).values
    np.testing.assert_allclose(out, np.column_stack([h0(N), h0(N)]))
    B = SymbolCoefficients.from_mapping({ROOT: [[0, 1], [0, 0]]}, N, 2)
    out = matrix_paraproduct(B, vec(N, np.zeros(8), np.ones(8))).values
    np.testing.assert_allclose(out, np.column_stack([h0(N), np.zeros(8)]))
    N = 5
    B = SymbolCoefficients(N, tuple(rng.standard_normal((2**l, 2, 2)) for l in range(N)))
    f = StepFunction(rng.standard_normal((2**N, 2)))
    np.testing.assert_allclose(matrix_paraproduct(B, f).values, brute_paraproduct(B, f), atol=1e-12)


def test_haar_multiplier_examples(rng):
    N = 4
    f = StepFunction(rng.standard_normal((16, 2)))
    out = haar_multiplier(MultiplierSpec.constant(np.eye(2), N), f).values
    np.testing.assert_allclose(out, f.values - f.values.mean(axis=0), atol=1e-13)
    assert np.all(haar_multiplier(MultiplierSpec.constant(np.zeros((2, 2)), N), f).values == 0)
    W = make_weight(WeightFamily.constant(np.diag([4.0, 9.0])), N)
    a = build_multiplier(W, 2, "reducing", "exact_p2")
    out = haar_multiplier(a, vec(N, h0(N), np.zeros(16))).values
    np.testing.assert_allclose(out, np.column_stack([2 * h0(N), np.zeros(16)]), atol=1e-13)


def test_build_multiplier_variants():
    N = 3
    Id = make_weight(WeightFamily.constant(np.eye(2)), N)
    for A in build_multiplier(Id, 2, "reducing").levels:
        np.testing.assert_allclose(A, np.broadcast_to(np.eye(2), A.shape), atol=1e-14)
    W = make_weight(WeightFamily.constant(np.diag([4.0, 9.0])), N)
    for A in build_multiplier(W, 2, "naive_average").levels:
        np.testing.assert_allclose(A, np.broadcast_to(np.diag([2.0, 3.0]), A.shape), atol=1e-14)
    for A in build_multiplier(W, 2, "reducing", invert=True).levels:
        np.testing.assert_allclose(A, np.broadcast_to(np.diag([0.5, 1 / 3]), A.shape), atol=1e-14)


def test_singular_multiplier():
    with pytest.raises(SingularMultiplierError):
        MultiplierSpec.constant(np.diag([1.0, 0.0]), 3).inverted()


def test_square_function_examples():
    N = 4
    np.testing.assert_allclose(square_function(StepFunction(h0(N))).values, 1.0)
    np.testing.assert_allclose(square_function(StepFunction(np.full(16, 2.0))).values, 0.0, atol=1e-15)
    chi = StepFunction((np.arange(16) < 8).astype(float))
    np.testing.assert_allclose(square_function(chi).values, 0.5)


def test_square_function_l2_identity(rng):
    f = StepFunction(rng.standard_normal((64, 3)))
    S = square_function(f).values
    c = haar_transform(f)
    assert np.mean(S**2) == pytest.approx(c.energy(), rel=1e-12)


def test_dyadic_maximal_examples():
    np.testing.assert_allclose(dyadic_maximal(StepFunction(np.full(8, 0.3))).values, 0.3)
    np.testing.assert_allclose(dyadic_maximal(StepFunction(np.array([1.0, 0, 0, 0]))).values, [1, 0.5, 0.25, 0.25])
    np.testing.assert_allclose(dyadic_maximal(StepFunction(np.array([0.0, 0, 0, 1]))).values, [0.25, 0.25, 0.5, 1])
    with pytest.raises(InvalidInputError):
        dyadic_maximal(StepFunction(np.array([1.0, -1.0])))


def test_dyadic_maximal_brute_force(rng):
    N = 6
    g = rng.random(2**N)
    want = np.zeros(2**N)
    for I in ROOT.descendants(N):
        sl = I.cell_slice(N)
        want[sl] = np.maximum(want[sl], g[sl].mean())
    np.testing.assert_allclose(dyadic_maximal(StepFunction(g)).values, want, atol=1e-15)


def test_bmo_norm_examples():
    assert bmo_norm(SymbolCoefficients.from_mapping({ROOT: 1.0}, 4)) == pytest.approx(1.0)
    L = 5
    b = SymbolCoefficients(L, tuple(np.full(2**l, 2.0 ** (-l / 2)) for l in range(L)))
    assert bmo_norm(b) == pytest.approx(np.sqrt(L))
    assert matrix_carleson_norm(b.times_identity(2)) == pytest.approx(bmo_norm(b), rel=1e-14)


def test_conjugated_examples(rng):
    N = 4
    b = SymbolCoefficients(N, tuple(rng.standard_normal(2**l) for l in range(N)))
    f = StepFunction(rng.standard_normal((16, 2)))
    Id = make_weight(WeightFamily.constant(np.eye(2)), N)
    np.testing.assert_allclose(conjugated_paraproduct(Id, 2, b, f).values, paraproduct(b, f).values, atol=1e-12)
    W = make_weight(WeightFamily.constant(np.diag([4.0, 9.0])), N)
    b0 = SymbolCoefficients.from_mapping({ROOT: 1.0}, N)
    out = conjugated_paraproduct(W, 2, b0, StepFunction(np.ones((16, 2)))).values
    np.testing.assert_allclose(out, np.column_stack([h0(N), h0(N)]), atol=1e-13)
    assert np.all(conjugated_paraproduct(W, 2, SymbolCoefficients.zeros(N), f).values == 0)
    # constant weight: the M-variant equals the conjugated operator
    np.testing.assert_allclose(conjugated_paraproduct_M(W, 2, b, f).values,
                               conjugated_paraproduct(W, 2, b, f).values, atol=1e-12)


def test_corpus_is_normalized_and_reproducible():
    a = bmo_corpus(3, 8, seed=5)
    b = bmo_corpus(3, 8, seed=5)
    for x, y in zip(a, b):
        assert bmo_norm(x) == pytest.approx(1.0)
        for u, v in zip(x.levels, y.levels):
            assert np.array_equal(u, v)
