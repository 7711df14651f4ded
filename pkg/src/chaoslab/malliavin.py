"""Malliavin derivative, its iterates and the divergence on polynomial functionals.

``D^k F`` is stored as an :class:`OperatorValuedExpansion`: a Psi-basis
expansion whose coefficients are tensors of shape ``(n,) * k + (d,)``, the
finite-model picture of ``gamma^k(H, E)``. Slot 0 is the H-direction added by
the most recent application of ``D``.

Two independent routes compute ``D``:

* :func:`derivative` uses the Hermite shift ``H_m' = H_{m-1}``, which gives
  ``D Psi_c = sum_j sqrt(c_j) Psi_{c - e_j} u_j``;
* :func:`derivative_monomial` differentiates the monomial form term by term.

The divergence is the adjoint of ``D``. It is computed from the local rule
``delta(f u_k (x) x) = (f g_k - D_k f) x`` and, with the sign conventions used
here, satisfies ``delta D = -L`` (the number operator).
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from . import hermite
from .chaos import (
    SCALAR,
    BanachSpaceModel,
    ChaosExpansion,
    Expansion,
    _accumulate,
    exact_inner,
    gamma_times,
    l2_norm_exact,
    monomial_to_chaos_terms,
    pair,
    product_terms,
)
from .errors import DimensionError
from .montecarlo import (
    EstimateResult,
    McConfig,
    batch_means,
    inner_gaussians,
    lp_from_moment,
    mean_and_se,
)


class OperatorValuedExpansion(Expansion):
    """``sum_c Psi_c T_c`` with ``T_c`` a tensor in ``(R^n)^{(x) k} (x) R^d``."""

    __slots__ = ("order",)

    def __init__(self, order: int, dim_n: int, space: BanachSpaceModel, terms: Mapping | None = None):
        if order < 1:
            raise ValueError("tensor order must be >= 1")
        self.order = int(order)
        super().__init__(dim_n, space, terms)

    @property
    def value_shape(self):
        return (self.dim_n,) * self.order + (self.space.d,)

    def _new(self, terms):
        return OperatorValuedExpansion(self.order, self.dim_n, self.space, terms)

    def apply(self, h) -> "ChaosExpansion | OperatorValuedExpansion":
        """Contract slot 0 with ``h``: ``U(h)``."""
        h = np.asarray(h, dtype=float)
        if h.shape != (self.dim_n,):
            raise DimensionError(f"h must have length {self.dim_n}")
        terms = {c: np.tensordot(h, v, axes=([0], [0])) for c, v in self.terms.items()}
        if self.order == 1:
            return ChaosExpansion(self.dim_n, self.space, terms)
        return OperatorValuedExpansion(self.order - 1, self.dim_n, self.space, terms)

    def slot(self, j: int):
        """``U(u_j)`` for a basis vector (1-based)."""
        e = np.zeros(self.dim_n)
        e[j - 1] = 1.0
        return self.apply(e)


def _lift(F: Expansion, terms) -> OperatorValuedExpansion:
    k = F.order + 1 if isinstance(F, OperatorValuedExpansion) else 1
    return OperatorValuedExpansion(k, F.dim_n, F.space, terms)


def derivative(F: Expansion) -> OperatorValuedExpansion:
    """``DF`` by the Hermite shift; accepts scalar/vector or operator-valued input."""
    n = F.dim_n
    out: dict = {}
    for c, v in F.terms.items():
        for j, cj in c:
            val = np.zeros((n,) + v.shape)
            val[j - 1] = math.sqrt(cj) * v
            _accumulate(out, hermite.add_unit(c, j, -1), val)
    return _lift(F, out)


def derivative_monomial(F: Expansion) -> OperatorValuedExpansion:
    """``DF`` by partial derivatives of the monomial form, mapped back to Psi."""
    n = F.dim_n
    mono: dict = {}
    for a, v in F.monomial_terms().items():
        for j, p in enumerate(a):
            if p:
                val = np.zeros((n,) + v.shape)
                val[j] = p * v
                _accumulate(mono, a[:j] + (p - 1,) + a[j + 1 :], val)
    return _lift(F, monomial_to_chaos_terms(mono))


def derivative_n(F: Expansion, k: int) -> OperatorValuedExpansion:
    """``D^k F = D(D^{k-1} F)``."""
    if k < 1:
        raise ValueError("derivative order must be >= 1")
    out = derivative(F)
    for _ in range(k - 1):
        out = derivative(out)
    return out


def divergence(u: OperatorValuedExpansion) -> ChaosExpansion:
    """``delta(u)`` for an order-1 operator-valued expansion."""
    if u.order != 1:
        raise ValueError("divergence is implemented for tensor order 1")
    out = ChaosExpansion.zero(u.dim_n, u.space)
    for k in range(1, u.dim_n + 1):
        f = u.slot(k)
        if not f.terms:
            continue
        out = out + gamma_times(f, k) - derivative(f).slot(k)
    return out


def pair_operator(U: OperatorValuedExpansion, G: ChaosExpansion) -> OperatorValuedExpansion:
    """Pointwise ``<U, G>``: contracts the E-slot of ``U`` with ``G``."""
    if U.space.d != G.space.d:
        raise DimensionError("pairing needs equal d")
    terms = product_terms(U, G, lambda T, v: np.tensordot(T, v, axes=([-1], [0]))[..., None])
    return OperatorValuedExpansion(U.order, U.dim_n, SCALAR, terms)


def ibp_check(F: ChaosExpansion, h) -> tuple[float, float]:
    """``(E DF(h), E W(h) F)`` for scalar ``F``, both exact."""
    if F.space.d != 1:
        raise DimensionError("ibp_check is the scalar form; use ibp_vector_check")
    h = np.asarray(h, dtype=float)
    lhs = float(derivative(F).apply(h).mean()[0])
    rhs = sum(h[j - 1] * float(F.coefficient(((j, 1),))[0]) for j in range(1, F.dim_n + 1))
    return lhs, rhs


def _expect_wiener_times(f: ChaosExpansion, h) -> float:
    # E(W(h) f) = sum_j h_j <f, Psi_{e_j}>
    return sum(h[j - 1] * float(f.coefficient(((j, 1),))[0]) for j in range(1, f.dim_n + 1))


def ibp_vector_check(F: ChaosExpansion, G: ChaosExpansion, h) -> tuple[float, float]:
    """``(E<DF(h), G>, E(W(h)<F, G>) - E<F, DG(h)>)`` for ``G`` dual-valued."""
    h = np.asarray(h, dtype=float)
    lhs = exact_inner(derivative(F).apply(h), G)
    rhs = _expect_wiener_times(pair(F, G), h) - exact_inner(F, derivative(G).apply(h))
    return lhs, rhs


def product_rule_deviation(F: ChaosExpansion, G: ChaosExpansion) -> float:
    """Max coefficient gap in ``D<F, G> = <DF, G> + <F, DG>``."""
    lhs = derivative(pair(F, G))
    rhs = pair_operator(derivative(F), G) + pair_operator(derivative(G), F)
    return lhs.max_deviation(rhs)


# --------------------------------------------------------------------------
# pathwise gamma norms and Sobolev norms


def gamma_norm_pathwise(tensors: np.ndarray, space: BanachSpaceModel, mc: McConfig | None = None) -> np.ndarray:
    """gamma^k norm of each operator in a batch ``(N, n, ..., n, d)``.

    Exact (Hilbert-Schmidt) for the l2 tag; otherwise
    ``(E || sum_i Z^(1)_i1 ... Z^(k)_ik T_i ||^2)^(1/2)`` averaged over a fixed
    set of ``mc.inner`` inner Gaussian draws shared by all outer samples.
    """
    tensors = np.asarray(tensors, dtype=float)
    N, k = tensors.shape[0], tensors.ndim - 2
    if space.is_hilbert:
        return np.sqrt((tensors.reshape(N, -1) ** 2).sum(axis=1))
    mc = mc or McConfig()
    n = tensors.shape[1]
    Z = inner_gaussians(k, n, mc)  # (k, M, n)
    acc = np.einsum("ri,bix->brx", Z[0], tensors.reshape(N, n, -1))
    for s in range(1, k):
        acc = acc.reshape(N, acc.shape[1], n, -1)
        acc = np.einsum("ri,brix->brx", Z[s], acc)
    norms = space.norm(acc)  # (N, M)
    return np.sqrt((norms**2).mean(axis=1))


def pathwise_derivative_norms(F: Expansion, k: int, g: np.ndarray, mc: McConfig | None = None) -> np.ndarray:
    """Columns ``||F||, ||DF||_gamma, ..., ||D^k F||_{gamma^k}`` at points ``g``.

    ``F`` may itself be operator-valued; its own column is then a gamma norm.
    """
    if isinstance(F, OperatorValuedExpansion):
        cols = [gamma_norm_pathwise(F.evaluate_points(g), F.space, mc)]
    else:
        cols = [np.atleast_1d(F.space.norm(F.evaluate_points(g)))]
    D = F
    for _ in range(k):
        D = derivative(D)
        if D.terms:
            cols.append(gamma_norm_pathwise(D.evaluate_points(g), F.space, mc))
        else:
            cols.append(np.zeros(g.shape[0]))
    return np.stack(cols, axis=1)


def derivative_lp(F: ChaosExpansion, k: int, p: float, mc: McConfig) -> EstimateResult:
    """``||D^k F||_{L^p(Omega; gamma^k(H, E))}`` by Monte Carlo."""
    if k < 1:
        raise ValueError("derivative order must be >= 1")
    if not derivative_n(F, k).terms:
        return EstimateResult(0.0, 0.0, mc.samples, mc.seed)
    means = batch_means(
        lambda s: pathwise_derivative_norms(F, k, s[:, 0, :], mc)[:, k] ** p, F.dim_n, 1, mc
    )
    mean, se = mean_and_se(means, mc)
    return lp_from_moment(float(mean[0]), float(se[0]), p, mc)


def derivative_lp_columns(F: ChaosExpansion, k: int, p: float, mc: McConfig) -> list[EstimateResult]:
    """``||D^j F||_{L^p}`` for ``j = 0..k`` from one pass of pathwise norms."""
    if p < 1:
        raise ValueError("moment order p must be >= 1")
    means = batch_means(lambda s: pathwise_derivative_norms(F, k, s[:, 0, :], mc) ** p, F.dim_n, 1, mc)
    mean, se = mean_and_se(means, mc)
    return [lp_from_moment(float(mean[j]), float(se[j]), p, mc) for j in range(k + 1)]


def sobolev_norm(F: Expansion, k: int, p: float, mc: McConfig) -> EstimateResult:
    """``(||F||_p^p + sum_{j<=k} ||D^j F||_p^p)^(1/p)`` by Monte Carlo."""
    if k < 1:
        raise ValueError("derivative order must be >= 1")
    if not F.terms:
        return EstimateResult(0.0, 0.0, mc.samples, mc.seed)
    means = batch_means(
        lambda s: (pathwise_derivative_norms(F, k, s[:, 0, :], mc) ** p).sum(axis=1),
        F.dim_n,
        1,
        mc,
    )
    mean, se = mean_and_se(means, mc)
    return lp_from_moment(float(mean[0]), float(se[0]), p, mc)


def sobolev_norm_exact_l2(F: ChaosExpansion, k: int) -> float:
    """The ``p = 2`` Sobolev norm for the l2 tag, from orthonormality."""
    total = l2_norm_exact(F) ** 2
    D = F
    for _ in range(k):
        D = derivative(D)
        total += l2_norm_exact(D) ** 2
    return math.sqrt(total)
