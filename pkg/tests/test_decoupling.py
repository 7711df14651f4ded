import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoslab.chaos import BanachSpaceModel, l2_norm_exact, phi_m
from chaoslab.decoupling import (
    DecouplingInstance,
    build_coupled,
    coupled_lp,
    decoupled_lp,
    decoupling_ratio,
    exact_second_moments,
    meyer_chain,
    random_instance,
    ratio_row,
    survival_curve,
)
from chaoslab.errors import SymmetryError, TetrahedralityError, UnsupportedNormError
from chaoslab.montecarlo import McConfig
from chaoslab.tensor import ElementaryOperator, gamma_norm_exact_hilbert, symmetrize

E1 = BanachSpaceModel(1)
E2 = BanachSpaceModel(2)
LINF3 = BanachSpaceModel(3, "linf")


def test_build_coupled_examples():
    x = np.array([1.0, -1.0])
    tet = DecouplingInstance("tetrahedral", ElementaryOperator(2, 2, E2, {(1, 2): x}))
    F = build_coupled(tet)
    assert F.terms.keys() == {((1, 1), (2, 1))}
    np.testing.assert_array_equal(F.coefficient((1, 2)), x)
    diag = DecouplingInstance("symmetric", ElementaryOperator(2, 1, E2, {(1, 1): x}))
    # (2!/2!)^(1/2) Psi_(1,1) x = (g^2 - 1)/sqrt(2) * sqrt(2) x
    np.testing.assert_allclose(build_coupled(diag).coefficient((1, 1)), x)


def test_instance_validation():
    with pytest.raises(SymmetryError):
        DecouplingInstance("symmetric", ElementaryOperator(2, 2, E1, {(1, 2): [1.0]}))
    with pytest.raises(TetrahedralityError):
        DecouplingInstance("tetrahedral", ElementaryOperator(2, 2, E1, {(1, 1): [1.0]}))
    with pytest.raises(ValueError):
        random_instance("mixed", 2, 2, E1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        random_instance("tetrahedral", 3, 2, E1, np.random.default_rng(0))


def test_symmetric_matches_phi_of_symmetrization():
    rng = np.random.default_rng(1)
    T = ElementaryOperator.from_dense(rng.standard_normal((3, 3, 3, 2)), E2)
    inst = DecouplingInstance("symmetric", symmetrize(T))
    assert build_coupled(inst).max_deviation(phi_m(symmetrize(T))) == 0.0


@pytest.mark.parametrize("case", ["symmetric", "tetrahedral"])
def test_first_order_is_identical(case):
    inst = random_instance(case, 1, 4, LINF3, np.random.default_rng(2))
    mc = McConfig(samples=20_000, seed=3)
    a, b = coupled_lp(inst, 3, mc), decoupled_lp(inst, 3, mc)
    assert a.estimate == b.estimate
    rep = decoupling_ratio(inst, 3, mc)
    assert rep.ratio == 1.0 and rep.ratio_se == 0.0


def test_zero_instance():
    inst = DecouplingInstance("symmetric", ElementaryOperator(2, 2, E2, {}))
    mc = McConfig(samples=10_000)
    assert coupled_lp(inst, 2, mc).estimate == 0.0
    assert decoupled_lp(inst, 2, mc).estimate == 0.0
    assert math.isnan(decoupling_ratio(inst, 2, mc).ratio)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["symmetric", "tetrahedral"]), st.integers(1, 4), st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**32))
def test_exact_second_moment_identity(case, m, n, d, seed):
    if case == "tetrahedral" and m > n:
        m = n
    inst = random_instance(case, m, n, BanachSpaceModel(d), np.random.default_rng(seed))
    a, b = exact_second_moments(inst)
    assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("m,n", [(2, 3), (3, 4)])
def test_tetrahedral_with_all_orderings(m, n):
    # every ordering stored separately: the coupled sum sees only the symmetric part
    inst = random_instance("tetrahedral", m, n, E2, np.random.default_rng(4), increasing=False)
    a, b = exact_second_moments(inst)
    assert a == pytest.approx(math.factorial(m) * gamma_norm_exact_hilbert(symmetrize(inst.coefficients)) ** 2, rel=1e-12)
    assert b == pytest.approx(gamma_norm_exact_hilbert(inst.coefficients) ** 2, rel=1e-12)


def test_exact_moments_need_hilbert():
    with pytest.raises(UnsupportedNormError):
        exact_second_moments(random_instance("symmetric", 2, 2, LINF3, np.random.default_rng(0)))


@pytest.mark.parametrize("case", ["symmetric", "tetrahedral"])
def test_l2_mc_matches_exact(case):
    inst = random_instance(case, 2, 4, E2, np.random.default_rng(5))
    rep = decoupling_ratio(inst, 2, McConfig(samples=200_000, seed=6))
    exact = math.sqrt(exact_second_moments(inst)[0])
    for est in (rep.coupled, rep.decoupled):
        assert abs(est.estimate - exact) <= 3 * est.stderr + 1e-12
    assert rep.agrees()
    assert abs(rep.ratio - 1) <= 3 * rep.ratio_se


@pytest.mark.parametrize("m", [2, 3])
@pytest.mark.parametrize("p", [1.0, 2.0, 4.0])
def test_linf_bracket(m, p):
    rng = np.random.default_rng(10 * m + int(p))
    for k in range(3):
        case = ("symmetric", "tetrahedral")[k % 2]
        rep = decoupling_ratio(random_instance(case, m, 3, LINF3, rng), p, McConfig(samples=20_000, seed=k))
        assert 0.1 <= rep.ratio <= 10


def test_ratio_stable_when_doubling_samples():
    inst = random_instance("symmetric", 2, 3, LINF3, np.random.default_rng(7))
    a = decoupling_ratio(inst, 2, McConfig(samples=50_000, seed=1))
    b = decoupling_ratio(inst, 2, McConfig(samples=100_000, seed=2))
    assert abs(a.ratio - b.ratio) <= 4 * math.hypot(a.ratio_se, b.ratio_se)


def test_ratio_row_columns():
    inst = random_instance("tetrahedral", 2, 3, LINF3, np.random.default_rng(8))
    mc = McConfig(samples=10_000, seed=4)
    row = ratio_row(inst, 2.0, mc, decoupling_ratio(inst, 2.0, mc))
    assert row["case"] == "tetrahedral" and row["norm"] == "linf" and row["seed"] == 4
    assert row["ratio"] == pytest.approx(row["coupled"] / row["decoupled"])


def test_survival_curve_is_monotone():
    inst = random_instance("symmetric", 2, 3, E2, np.random.default_rng(9))
    curve = survival_curve(inst, [0.0, 0.5, 1.0, 2.0, 4.0, 50.0], McConfig(samples=20_000))
    assert curve[0][1] == curve[0][2] == 1.0
    assert curve[-1][1] == curve[-1][2] == 0.0
    for (_, a0, b0), (_, a1, b1) in zip(curve, curve[1:]):
        assert a1 <= a0 and b1 <= b0


def test_meyer_chain_l2_levels_agree():
    inst = random_instance("symmetric", 3, 3, E2, np.random.default_rng(11))
    chain = meyer_chain(inst, 2, McConfig(samples=100_000, seed=5))
    exact = l2_norm_exact(build_coupled(inst))
    assert len(chain) == 4
    for est in chain:
        assert abs(est.estimate - exact) <= 4 * est.stderr


def test_meyer_chain_linf_bracket():
    inst = random_instance("tetrahedral", 3, 4, LINF3, np.random.default_rng(12))
    chain = meyer_chain(inst, 4, McConfig(samples=20_000, seed=6))
    base = chain[0].estimate
    assert all(1 / 20 <= c.estimate / base <= 20 for c in chain)
