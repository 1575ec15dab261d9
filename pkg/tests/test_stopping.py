import numpy as np
import pytest

from mwparaproduct.dyadic import DyadicInterval, StepFunction, haar_function, haar_transform, lp_norm
from mwparaproduct.errors import IndexOutOfRangeError, LambdaTooSmallError
from mwparaproduct.stopping import (
    StoppingConfig,
    build_stopping_tree,
    cotlar_cross_term,
    cotlar_matrix,
    delta_projection,
    interval_baseline,
    lambda_ladder,
    operator_MI,
    operator_T,
    operator_Tj,
    stopping_children,
)
from mwparaproduct.weights import WeightFamily, make_weight

from oracles import exact_p2_pair, f_generation_brute_force, stopping_brute_force

ROOT = DyadicInterval.root()


@pytest.fixture(scope="module")
def alpha15():
    return make_weight(WeightFamily.scalar_power(1.5), 10)


@pytest.fixture(scope="module")
def rotated8():
    W = make_weight(WeightFamily.rotated_powers([0.9, -0.9]), 8)
    tree, rep = build_stopping_tree(W, 2, StoppingConfig(lambda_factor=1.5))
    return W, tree


def test_identity_has_no_children():
    W = make_weight(WeightFamily.constant(np.eye(2)), 6)
    assert stopping_children(W, 2, ROOT, 1.5) == []
    with pytest.raises(LambdaTooSmallError) as err:
        stopping_children(W, 2, ROOT, 0.5)
    assert err.value.to_dict()["error"] == "lambda-too-small"


def test_identity_tree():
    W = make_weight(WeightFamily.constant(np.eye(2)), 6)
    tree, rep = build_stopping_tree(W, 2, StoppingConfig(lam=4.0))
    assert tree.J == [[ROOT]]
    assert rep.rate == 0.0
    assert len(tree.F(1)) == 2**6 - 1
    f = StepFunction(np.random.default_rng(1).standard_normal((64, 2)))
    np.testing.assert_allclose(delta_projection(f, tree, 1).values, f.values - f.values.mean(axis=0), atol=1e-13)
    np.testing.assert_allclose(operator_T(W, 2, f, tree).values, f.values - f.values.mean(axis=0), atol=1e-13)


def test_root_lambda_too_small(alpha15):
    # the non-A_2 weight has root averages far above 10 at this resolution
    with pytest.raises(LambdaTooSmallError):
        stopping_children(alpha15, 2, ROOT, 10.0)


def test_children_match_oracle(alpha15):
    lam = 2.0 * interval_baseline(alpha15, 2, ROOT)
    V, Vp = exact_p2_pair(alpha15.values, ROOT, 10)
    got = stopping_children(alpha15, 2, ROOT, lam)
    assert got == stopping_brute_force(alpha15.values, 2, ROOT, lam, V, Vp)
    assert got


def test_children_of_inner_interval(alpha15):
    I = DyadicInterval(2, 1)
    lam = 1.2 * interval_baseline(alpha15, 2, I)
    V, Vp = exact_p2_pair(alpha15.values, I, 10)
    got = stopping_children(alpha15, 2, I, lam)
    assert got == stopping_brute_force(alpha15.values, 2, I, lam, V, Vp)


def test_f_generations_partition(rotated8):
    W, tree = rotated8
    assert tree.generations >= 2
    brute = f_generation_brute_force(tree, 8)
    for j in range(1, tree.generations + 1):
        assert tree.F(j) == brute[j]
    total = sum(len(tree.F(j)) for j in range(tree.generations + 1))
    assert total == 2**8 - 1
    with pytest.raises(IndexOutOfRangeError):
        tree.F(tree.generations + 1)


def test_delta_projection_against_direct_sum(rotated8, rng):
    W, tree = rotated8
    f = StepFunction(rng.standard_normal((256, 2)))
    c = haar_transform(f)
    for j in range(tree.generations + 1):
        want = np.zeros_like(f.values)
        for I in tree.F(j):
            want += np.multiply.outer(haar_function(I, 8).values, c[I])
        np.testing.assert_allclose(delta_projection(f, tree, j).values, want, atol=1e-12)


def test_delta_parseval(rotated8, rng):
    W, tree = rotated8
    f = StepFunction(rng.standard_normal((256, 2)))
    parts = [np.mean(np.sum(delta_projection(f, tree, j).values ** 2, axis=1)) for j in range(tree.generations + 1)]
    g = f.values - f.values.mean(axis=0)
    assert sum(parts) == pytest.approx(np.mean(np.sum(g**2, axis=1)), rel=1e-10)


def test_T_constant_weight():
    N = 4
    W = make_weight(WeightFamily.constant(np.diag([4.0, 9.0])), N)
    h = haar_function(ROOT, N).values
    f = StepFunction(np.column_stack([h, np.zeros(16)]))
    np.testing.assert_allclose(operator_T(W, 2, f).values, f.values, atol=1e-13)


def test_T_decomposition_and_support(rotated8, rng):
    W, tree = rotated8
    f = StepFunction(rng.standard_normal((256, 2)))
    Tf = operator_T(W, 2, f, tree).values
    parts = [operator_Tj(W, 2, f, tree, j).values for j in range(1, tree.generations + 1)]
    assert np.abs(Tf - sum(parts)).max() <= 1e-10 * np.abs(f.values).max()
    for j, Tj in enumerate(parts, start=1):
        outside = ~tree.union_mask(j - 1)
        assert np.all(Tj[outside] == 0)


def test_MI_pieces_sum_to_Tj(rotated8, rng):
    W, tree = rotated8
    f = StepFunction(rng.standard_normal((256, 2)))
    j = 2
    pieces = sum(operator_MI(W, 2, f, I, tree).values for I in tree.J[j - 1])
    Wh = W.power_values(0.5)
    np.testing.assert_allclose(np.einsum("kij,kj->ki", Wh, pieces), operator_Tj(W, 2, f, tree, j).values, atol=1e-12)


def test_cross_terms(rotated8, rng):
    W, tree = rotated8
    f = StepFunction(rng.standard_normal((256, 2)))
    Tj = operator_Tj(W, 3, f, tree, 1)
    assert cotlar_cross_term(W, 3, f, tree, 1, 1) == pytest.approx(lp_norm(Tj, 3) ** 3, rel=1e-12)
    rep = cotlar_matrix(W, 2, f, tree)
    assert np.allclose(rep.cross, rep.cross.T)
    assert len(rep.step_ratios) == tree.generations - 1


def test_empty_generation_cross_term():
    W = make_weight(WeightFamily.constant(np.eye(2)), 5)
    tree, _ = build_stopping_tree(W, 2, StoppingConfig(lam=4.0))
    f = StepFunction(np.random.default_rng(0).standard_normal((32, 2)))
    # T_1 is all of T here; nothing lives beyond the root generation
    assert cotlar_cross_term(W, 2, f, tree, 0, 0) == 0.0


def test_lambda_ladder_finds_halving():
    W = make_weight(WeightFamily.scalar_power(0.5), 10)
    res = lambda_ladder(W, 2)
    assert res["halving_factor"] is not None
    assert res["ladder"][0]["factor"] == 1.5


def test_tree_serialization(rotated8):
    _, tree = rotated8
    d = tree.to_dict()
    assert len(d["generations"]) == tree.generations + 1
    assert d["generations"][0]["F"] == []
