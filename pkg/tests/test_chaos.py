import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoslab.chaos import (
    SCALAR,
    BanachSpaceModel,
    ChaosExpansion,
    MonomialFunctional,
    chaos_from_json,
    chaos_to_json,
    exact_inner,
    gamma_times,
    l2_norm_exact,
    lp_norms_mc,
    pair,
    phi_m,
    project_Jm,
    random_chaos,
    scalar_times,
    to_chaos,
)
from chaoslab.errors import DimensionError, SymmetryError, UnsupportedNormError
from chaoslab.hermite import multi_stats, psi_eval
from chaoslab.montecarlo import McConfig
from chaoslab.tensor import ElementaryOperator, gamma_norm_exact_hilbert, symmetrize

from oracles import expect_poly, gauss_hermite_expect, poly_mul, psi_monomials

X = np.array([1.5, -2.0])
E2 = BanachSpaceModel(2)


def mono(n, terms, space=E2):
    return MonomialFunctional(n, space, terms)


def test_gamma_squared_to_chaos():
    F = to_chaos(mono(1, {(2,): X}))
    assert set(F.terms) == {(), ((1, 2),)}
    np.testing.assert_allclose(F.coefficient(()), X)
    np.testing.assert_allclose(F.coefficient(((1, 2),)), math.sqrt(2) * X)


def test_constant_and_product_to_chaos():
    assert to_chaos(mono(2, {(0, 0): X})).terms.keys() == {()}
    F = to_chaos(mono(2, {(1, 1): X}))
    assert F.terms.keys() == {((1, 1), (2, 1))}
    np.testing.assert_allclose(F.coefficient((1, 2)), X)


def test_evaluate_examples():
    s = np.array([[2.0, -1.0]])
    assert np.array_equal(ChaosExpansion.constant(X, 2).evaluate(s), X)
    np.testing.assert_allclose(ChaosExpansion(2, E2, {(1,): X}).evaluate(s), 2 * X)


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)), st.floats(-3, 3), max_size=6), st.integers(0, 2**32))
def test_evaluate_after_to_chaos_matches_monomial(terms, seed):
    G = mono(2, {a: [v] for a, v in terms.items()}, SCALAR)
    g = np.random.default_rng(seed).standard_normal((100, 2))
    np.testing.assert_allclose(to_chaos(G).evaluate_points(g), G.evaluate_points(g), atol=1e-9)


def test_projections_of_gamma_powers():
    F = to_chaos(mono(1, {(3,): [1.0]}, SCALAR))
    J1 = project_Jm(F, 1)
    np.testing.assert_allclose(J1.coefficient((1,)), [3.0])
    assert J1.orders() == {1}
    G = to_chaos(mono(1, {(2,): [1.0]}, SCALAR))
    np.testing.assert_allclose(project_Jm(G, 0).coefficient(()), [1.0])


def test_projection_algebra():
    F = random_chaos(3, E2, range(4), np.random.default_rng(0))
    total = ChaosExpansion.zero(3, E2)
    for m in range(4):
        total = total + F.project(m)
        assert F.project(m).project(m) == F.project(m)
        for k in range(4):
            if k != m:
                assert not F.project(m).project(k).terms
    assert total.max_deviation(F) == 0.0


def test_l2_norm_examples():
    assert l2_norm_exact(ChaosExpansion.constant(X, 1)) == pytest.approx(np.linalg.norm(X))
    assert l2_norm_exact(to_chaos(mono(1, {(2,): [1.0]}, SCALAR))) == pytest.approx(math.sqrt(3))
    F = ChaosExpansion(2, E2, {(1,): [1.0, 0.0], (2,): [0.0, 1.0]})
    assert l2_norm_exact(F) == pytest.approx(math.sqrt(2))


def test_l2_norm_needs_hilbert():
    with pytest.raises(UnsupportedNormError):
        l2_norm_exact(ChaosExpansion.constant([1.0], 1, BanachSpaceModel(1, "linf")))


def test_orthonormality_against_wick_oracle():
    keys = [(), ((1, 1),), ((1, 2),), ((1, 1), (2, 1)), ((2, 3),), ((1, 2), (2, 2))]
    polys = [psi_monomials(c, 2) for c in keys]
    for a, pa in zip(keys, polys):
        for b, pb in zip(keys, polys):
            assert expect_poly(poly_mul(pa, pb)) == pytest.approx(float(a == b), abs=1e-12)


def test_exact_inner_matches_quadrature():
    rng = np.random.default_rng(1)
    F = random_chaos(2, E2, range(4), rng)
    G = random_chaos(2, E2, range(3), rng)
    oracle = gauss_hermite_expect(lambda g: (F.evaluate_points(g) * G.evaluate_points(g)).sum(axis=1), 2)
    assert exact_inner(F, G) == pytest.approx(float(oracle), abs=1e-10)
    sq = gauss_hermite_expect(lambda g: (F.evaluate_points(g) ** 2).sum(axis=1), 2)
    assert l2_norm_exact(F) ** 2 == pytest.approx(float(sq), rel=1e-10)


def test_gamma_times_matches_monomial_product():
    rng = np.random.default_rng(2)
    F = random_chaos(3, E2, range(4), rng)
    g = rng.standard_normal((50, 3))
    for k in (1, 2, 3):
        np.testing.assert_allclose(
            gamma_times(F, k).evaluate_points(g), g[:, [k - 1]] * F.evaluate_points(g), atol=1e-10
        )


def test_pair_and_scalar_times_are_pointwise():
    rng = np.random.default_rng(3)
    F = random_chaos(2, E2, range(3), rng)
    G = random_chaos(2, E2, range(3), rng)
    f = random_chaos(2, SCALAR, range(3), rng)
    g = rng.standard_normal((40, 2))
    np.testing.assert_allclose(
        pair(F, G).evaluate_points(g)[:, 0], (F.evaluate_points(g) * G.evaluate_points(g)).sum(axis=1), atol=1e-10
    )
    np.testing.assert_allclose(
        scalar_times(f, F).evaluate_points(g), f.evaluate_points(g) * F.evaluate_points(g), atol=1e-10
    )


def test_phi_examples():
    T = ElementaryOperator(1, 2, E2, {(2,): X})
    F = phi_m(T)
    assert F.terms.keys() == {((2, 1),)}
    np.testing.assert_allclose(F.coefficient((2,)), X)
    # P_s(u1 (x) u2) (x) x: two ordered keys with x/2
    S = symmetrize(ElementaryOperator(2, 2, E2, {(1, 2): X}))
    np.testing.assert_allclose(phi_m(S).coefficient((1, 2)), X / math.sqrt(2))
    D = ElementaryOperator(2, 1, E2, {(1, 1): X})
    np.testing.assert_allclose(phi_m(D).coefficient((1, 1)), X)


def test_phi_matches_brute_force_expansion():
    # sum over ordered keys of (i!/m!)^(1/2) Psi_i x_i, evaluated pointwise
    rng = np.random.default_rng(4)
    T = symmetrize(ElementaryOperator.from_dense(rng.standard_normal((3, 3, 3, 1)), SCALAR))
    g = rng.standard_normal((30, 3))
    brute = sum(
        math.sqrt(multi_stats(i).factorial / 6) * psi_eval(i, g) * x[0] for i, x in T.table.items()
    )
    np.testing.assert_allclose(phi_m(T).evaluate_points(g)[:, 0], brute, atol=1e-10)


def test_phi_rejects_asymmetric_when_asked():
    with pytest.raises(SymmetryError):
        phi_m(ElementaryOperator(2, 2, E2, {(1, 2): X}), require_symmetric=True)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32))
def test_wiener_ito_isometry(n, m, d, seed):
    rng = np.random.default_rng(seed)
    T = symmetrize(ElementaryOperator.from_dense(rng.standard_normal((n,) * m + (d,)), BanachSpaceModel(d)))
    assert l2_norm_exact(phi_m(T)) == pytest.approx(gamma_norm_exact_hilbert(T), rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("tag", ["l1", "l2", "linf"])
def test_kahane_khintchine_bracket(tag):
    rng = np.random.default_rng(5)
    for k in range(8):
        F = random_chaos(3, BanachSpaceModel(3, tag), [1 + k % 3], rng)
        l2, l4 = lp_norms_mc(F, [2, 4], McConfig(samples=20_000, seed=k))
        assert 1.0 <= l4.estimate / l2.estimate <= 3.0


def test_kahane_scalar_first_chaos_value():
    F = ChaosExpansion(1, SCALAR, {(1,): [1.0]})
    l2, l4 = lp_norms_mc(F, [2, 4], McConfig(samples=400_000, seed=1))
    r = l4.estimate / l2.estimate
    assert abs(r - 3**0.25) < 3 * (l4.stderr / l2.estimate + r * l2.stderr / l2.estimate)


def test_json_round_trip():
    F = random_chaos(2, BanachSpaceModel(2, "linf"), range(3), np.random.default_rng(6))
    back = chaos_from_json(json.loads(json.dumps(chaos_to_json(F))))
    assert back == F
    assert chaos_to_json(ChaosExpansion.constant([1.0], 1))["terms"] == {"": [1.0]}


def test_dimension_checks():
    with pytest.raises(DimensionError):
        ChaosExpansion(1, E2, {(2,): X})
    with pytest.raises(DimensionError):
        ChaosExpansion(2, E2, {(1,): [1.0]})
    with pytest.raises(ValueError):
        BanachSpaceModel(2, "l7")
