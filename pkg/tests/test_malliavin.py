import math

import numpy as np
import pytest

from chaoslab import hermite
from chaoslab.chaos import SCALAR, BanachSpaceModel, ChaosExpansion, MonomialFunctional, exact_inner, l2_norm_exact, lp_norm_mc, random_chaos, to_chaos
from chaoslab.hermite import order_of
from chaoslab.malliavin import (
    OperatorValuedExpansion,
    derivative,
    derivative_lp,
    derivative_lp_columns,
    derivative_monomial,
    derivative_n,
    divergence,
    ibp_check,
    ibp_vector_check,
    product_rule_deviation,
    sobolev_norm,
    sobolev_norm_exact_l2,
)
from chaoslab.montecarlo import McConfig

X = np.array([1.0, -2.0])
E2 = BanachSpaceModel(2)


def chaos(n, terms, space=E2):
    return ChaosExpansion(n, space, terms)


def u_terms(n, c, j, x):
    v = np.zeros((n, len(x)))
    v[j - 1] = x
    return {c: v}


def test_derivative_of_first_chaos():
    DF = derivative(chaos(3, {(2,): X}))
    assert DF == OperatorValuedExpansion(1, 3, E2, u_terms(3, (), 2, X))


def test_derivative_of_product():
    DF = derivative(chaos(2, {(1, 2): X}))
    want = OperatorValuedExpansion(1, 2, E2, {**u_terms(2, ((2, 1),), 1, X), **u_terms(2, ((1, 1),), 2, X)})
    assert DF.max_deviation(want) == 0.0


def _hermite_of_wiener(m, h):
    # H_m(h . g) in monomials via the multinomial expansion
    coef = hermite.hermite_coeffs(m).coefficients
    terms = {}
    for p, a in enumerate(coef):
        for k in range(p + 1):
            e = (k, p - k)
            val = a * math.comb(p, k) * h[0] ** k * h[1] ** (p - k)
            terms[e] = terms.get(e, 0.0) + val
    return to_chaos(MonomialFunctional(2, SCALAR, {e: [v] for e, v in terms.items()}))


@pytest.mark.parametrize("m", range(1, 6))
def test_derivative_of_hermite_of_wiener(m):
    h = np.array([0.6, -0.8])
    g = np.random.default_rng(m).standard_normal((30, 2))
    DF = derivative(_hermite_of_wiener(m, h)).evaluate_points(g)[..., 0]
    want = hermite.hermite_eval(m - 1, g @ h)[:, None] * h
    np.testing.assert_allclose(DF, want, atol=1e-10)


def test_second_derivatives():
    F = to_chaos(MonomialFunctional(1, E2, {(2,): X}))
    D2 = derivative_n(F, 2)
    assert D2.terms.keys() == {()}
    np.testing.assert_allclose(D2.coefficient(())[0, 0], 2 * X)
    assert not derivative_n(chaos(1, {(1,): X}), 2).terms


def test_derivative_annihilates_low_orders():
    F = random_chaos(3, E2, range(3), np.random.default_rng(0))
    assert not derivative_n(F, 3).terms


@pytest.mark.parametrize("seed", range(10))
def test_two_derivative_routes_agree(seed):
    rng = np.random.default_rng(seed)
    F = random_chaos(3, E2, range(5), rng)
    assert derivative(F).max_deviation(derivative_monomial(F)) <= 1e-10
    DF = derivative(F)
    assert derivative(DF).max_deviation(derivative_monomial(DF)) <= 1e-10


@pytest.mark.parametrize("m", range(1, 6))
def test_order_shift_and_number_operator(m):
    F = random_chaos(3, E2, [m], np.random.default_rng(m))
    DF = derivative(F)
    assert all(order_of(c) == m - 1 for c in DF.terms)
    assert divergence(DF).max_deviation(m * F) <= 1e-10


def test_divergence_examples():
    x = X
    assert divergence(OperatorValuedExpansion(1, 2, E2, u_terms(2, (), 1, x))) == chaos(2, {(1,): x})
    d = divergence(OperatorValuedExpansion(1, 2, E2, u_terms(2, ((2, 1),), 1, x)))
    assert d.max_deviation(chaos(2, {(1, 2): x})) <= 1e-15
    # gamma_1^2 - 1 = sqrt(2) Psi_(1,1)
    d = divergence(OperatorValuedExpansion(1, 2, E2, u_terms(2, ((1, 1),), 1, x)))
    assert d.max_deviation(chaos(2, {(1, 1): math.sqrt(2) * x})) <= 1e-15


@pytest.mark.parametrize("seed", range(10))
def test_divergence_is_adjoint_of_derivative(seed):
    rng = np.random.default_rng(seed)
    n = 3
    u = OperatorValuedExpansion(1, n, E2, {c: rng.standard_normal((n, 2)) for m in range(4) for c in hermite.count_vectors(n, m)})
    G = random_chaos(n, E2, range(5), rng)
    assert exact_inner(divergence(u), G) == pytest.approx(exact_inner(u, derivative(G)), abs=1e-10)


def test_ibp_examples():
    one = chaos(1, {(1,): [1.0]}, SCALAR)
    assert ibp_check(one, [1.0]) == pytest.approx((1.0, 1.0))
    sq = to_chaos(MonomialFunctional(1, SCALAR, {(2,): [1.0]}))
    assert ibp_check(sq, [1.0]) == pytest.approx((0.0, 0.0), abs=1e-15)
    cube = to_chaos(MonomialFunctional(1, SCALAR, {(3,): [1.0]}))
    assert ibp_check(cube, [1.0]) == pytest.approx((3.0, 3.0))


@pytest.mark.parametrize("seed", range(10))
def test_ibp_and_product_rule_random(seed):
    rng = np.random.default_rng(seed)
    F = random_chaos(3, E2, range(5), rng)
    G = random_chaos(3, E2, range(4), rng)
    f = random_chaos(3, SCALAR, range(5), rng)
    h = rng.standard_normal(3)
    lhs, rhs = ibp_check(f, h)
    assert abs(lhs - rhs) <= 1e-10
    lhs, rhs = ibp_vector_check(F, G, h)
    assert abs(lhs - rhs) <= 1e-10
    assert product_rule_deviation(F, G) <= 1e-10


@pytest.mark.parametrize("m", range(1, 5))
def test_exact_derivative_norm(m):
    F = random_chaos(3, SCALAR, [m], np.random.default_rng(m))
    assert l2_norm_exact(derivative(F)) == pytest.approx(math.sqrt(m) * l2_norm_exact(F), rel=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_banach_derivative_bracket(seed):
    m = 1 + seed % 3
    F = random_chaos(3, BanachSpaceModel(3, "linf"), [m], np.random.default_rng(seed))
    f, df = derivative_lp_columns(F, 1, 2, McConfig(samples=10_000, seed=seed))
    assert math.sqrt(m) / 10 <= df.estimate / f.estimate <= 10 * math.sqrt(m)


def test_sobolev_examples():
    c = ChaosExpansion.constant(X, 2)
    for k in (1, 2):
        r = sobolev_norm(c, k, 3, McConfig(samples=10_000))
        assert r.estimate == pytest.approx(np.linalg.norm(X), rel=1e-12)
    g1 = chaos(1, {(1,): [1.0]}, SCALAR)
    r = sobolev_norm(g1, 1, 2, McConfig(samples=100_000, seed=1))
    assert abs(r.estimate - math.sqrt(2)) <= 3 * r.stderr


def test_sobolev_matches_exact_l2():
    F = random_chaos(2, E2, range(4), np.random.default_rng(7))
    r = sobolev_norm(F, 2, 2, McConfig(samples=100_000, seed=2))
    assert abs(r.estimate - sobolev_norm_exact_l2(F, 2)) <= 3 * r.stderr


def test_derivative_lp_l2_matches_exact():
    F = random_chaos(2, E2, range(4), np.random.default_rng(8))
    r = derivative_lp(F, 1, 2, McConfig(samples=100_000, seed=4))
    assert abs(r.estimate - l2_norm_exact(derivative(F))) <= 3 * r.stderr


@pytest.mark.parametrize("seed", range(30))
def test_divergence_bounded_by_sobolev_norm(seed):
    rng = np.random.default_rng(seed)
    n, space = 2, BanachSpaceModel(2, "linf")
    u = OperatorValuedExpansion(
        1, n, space, {c: rng.standard_normal((n, 2)) for m in range(4) for c in hermite.count_vectors(n, m)}
    )
    mc = McConfig(samples=10_000, seed=seed, inner=32)
    for p in (2, 4):
        ratio = lp_norm_mc(divergence(u), p, mc).estimate / sobolev_norm(u, 1, p, mc).estimate
        assert ratio <= 20
