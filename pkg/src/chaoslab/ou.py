"""Ornstein-Uhlenbeck calculus on chaos expansions.

Every operator here is a function of the number operator and acts on the
order-``m`` part of an expansion by a scalar:

    P(t): e^{-mt}     L: -m     C = -(-L)^{1/2}: -sqrt(m)     L^{-1}: -1/m
    Q(t): e^{-sqrt(m) t}        R_lambda: 1/(lambda - m)

The functions accept both :class:`ChaosExpansion` and operator-valued
expansions, so the same ``P(t)`` serves as ``P_E`` and ``P_{gamma(H,E)}``.

Sign convention: ``delta D = -L``, hence ``E<(-L)F, G> = E[DF, DG]_gamma`` and
``F = E(F) + delta(D (-L)^{-1} (F - E F))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy import optimize, special

from .chaos import ChaosExpansion, Expansion, exact_inner, l2_norm_exact
from .errors import AccuracyError, DimensionError, MeanZeroError
from .malliavin import (
    OperatorValuedExpansion,
    derivative,
    derivative_n,
    divergence,
    gamma_norm_pathwise,
)
from .montecarlo import EstimateResult, McConfig, batch_means, lp_from_moment, mean_and_se


def apply_P(t: float, F: Expansion) -> Expansion:
    if t < 0:
        raise ValueError("semigroup time must be >= 0")
    return F.scale_orders(lambda m: math.exp(-m * t))


def apply_L(F: Expansion) -> Expansion:
    return F.scale_orders(lambda m: -float(m))


def apply_C(F: Expansion) -> Expansion:
    return F.scale_orders(lambda m: -math.sqrt(m))


def apply_Linv(F: Expansion) -> Expansion:
    if np.any(F.mean() != 0):
        raise MeanZeroError("L^{-1} needs E(F) = 0")
    return F.scale_orders(lambda m: -1.0 / m)


def apply_I_minus_L_power(F: Expansion, power: float) -> Expansion:
    """``(I - L)^power``: order ``m`` scaled by ``(1 + m)^power``."""
    return F.scale_orders(lambda m: (1.0 + m) ** power)


def apply_Q_closed(t: float, F: Expansion) -> Expansion:
    """Subordinated semigroup generated by ``C``."""
    if t < 0:
        raise ValueError("semigroup time must be >= 0")
    return F.scale_orders(lambda m: math.exp(-math.sqrt(m) * t))


def apply_Q1_closed(t: float, F: Expansion) -> Expansion:
    """Semigroup generated by ``-(I - L)^{1/2}``."""
    return F.scale_orders(lambda m: math.exp(-math.sqrt(1.0 + m) * t))


# --------------------------------------------------------------------------
# subordination by nu_t


def subordinator_density(s, t: float):
    """``t / (2 sqrt(pi s^3)) exp(-t^2 / 4s)`` on ``s > 0``."""
    s = np.asarray(s, dtype=float)
    return t / (2.0 * np.sqrt(np.pi * s**3)) * np.exp(-(t**2) / (4.0 * s))


def subordinator_cdf(s, t: float):
    """``nu_t((0, s])``."""
    return special.erfc(t / (2.0 * np.sqrt(np.asarray(s, dtype=float))))


@dataclass(frozen=True)
class SubordinatorQuad:
    """Quadrature for ``int_0^inf e^{-ms} d nu_t(s)``.

    With ``s = t^2 / (4 v^2)`` the measure becomes ``(2/sqrt(pi)) e^{-v^2} dv``
    and the integrand ``e^{-m t^2 / (4 v^2)}`` is smooth. The ``v``-window is
    where the log-integrand lies within ``log_drop`` of its maximum, unless
    fixed ``s_bounds`` are supplied (they must then hold ``coverage`` of the
    ``nu_t`` mass). Gauss-Legendre nodes cover the window and the discarded
    tails are bounded analytically.
    """

    nodes: int = 64
    scheme: str = "gauss-legendre"
    log_drop: float = 45.0
    s_bounds: tuple[float, float] | None = None
    rtol: float = 1e-8
    coverage: float = 1 - 1e-6

    def __post_init__(self):
        if self.nodes < 8:
            raise ValueError("node count must be >= 8")
        if self.scheme != "gauss-legendre":
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")
        if self.s_bounds is not None and not 0 < self.s_bounds[0] < self.s_bounds[1]:
            raise ValueError("s_bounds must satisfy 0 < s_lo < s_hi")

    @staticmethod
    def mass_bounds(t: float, coverage: float = 1 - 1e-6) -> tuple[float, float]:
        """``(s_lo, s_hi)`` holding ``coverage`` of the ``nu_t`` mass, the rest split evenly."""
        eps = (1.0 - coverage) / 2.0
        v_lo, v_hi = float(special.erfinv(eps)), float(special.erfcinv(eps))
        return t * t / (4.0 * v_hi * v_hi), t * t / (4.0 * v_lo * v_lo)

    def window(self, m: int, t: float) -> tuple[float, float, float]:
        """``(lo, peak, hi)`` in ``v``; the peak splits the two panels."""
        b = m * t * t / 4.0
        if self.s_bounds is not None:
            s_lo, s_hi = self.s_bounds
            lo, hi = t / (2.0 * math.sqrt(s_hi)), t / (2.0 * math.sqrt(s_lo))
            return lo, min(max(b**0.25, lo), hi), hi

        def logf(v):
            return -v * v - b / (v * v)

        if b == 0:
            return 0.0, 0.0, math.sqrt(self.log_drop)
        res = optimize.minimize_scalar(
            lambda u: -logf(math.exp(u)), bounds=(-30.0, 10.0), method="bounded",
            options={"xatol": 1e-10},
        )
        peak = math.exp(res.x)
        level = logf(peak) - self.log_drop
        lo = optimize.brentq(lambda v: logf(v) - level, peak * 1e-4, peak)
        hi = optimize.brentq(lambda v: logf(v) - level, peak, peak + math.sqrt(self.log_drop) + 1.0)
        return lo, peak, hi

    @staticmethod
    def tail_bound(m: int, t: float, lo: float, hi: float) -> float:
        """Upper bound for the integral outside ``[lo, hi]`` in ``v``."""
        b = m * t * t / 4.0
        right = math.erfc(hi)
        left = 0.0
        if lo > 0:
            peak = b**0.25
            if lo <= peak:
                # integrand is increasing on (0, lo)
                left = 2.0 / math.sqrt(math.pi) * lo * math.exp(-lo * lo - b / (lo * lo))
            else:
                left = math.erf(lo)
        return right + left

    def integrate(self, m: int, t: float) -> float:
        """``int_0^inf e^{-ms} d nu_t(s)`` by two Gauss-Legendre panels."""
        if t <= 0:
            raise ValueError("subordination time must be > 0")
        if self.s_bounds is not None:
            mass = float(subordinator_cdf(self.s_bounds[1], t) - subordinator_cdf(self.s_bounds[0], t))
            if mass < self.coverage:
                raise AccuracyError(f"s_bounds hold only {mass:.8f} of the nu_t mass at t={t}")
        lo, peak, hi = self.window(m, t)
        b = m * t * t / 4.0
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        val = 0.0
        for a, c in ((lo, peak), (peak, hi)):
            if c <= a:
                continue
            v = 0.5 * (c - a) * x + 0.5 * (c + a)
            f = np.exp(-v * v - b / (v * v)) if b else np.exp(-v * v)
            val += 0.5 * (c - a) * float(w @ f)
        val *= 2.0 / math.sqrt(math.pi)
        if self.tail_bound(m, t, lo, hi) > self.rtol * max(val, 1e-300):
            raise AccuracyError(f"quadrature window misses too much mass for order {m}, t={t}")
        return val


def apply_Q(t: float, F: Expansion, quad: SubordinatorQuad | None = None) -> tuple[Expansion, Expansion]:
    """``(closed form, quadrature)`` versions of ``Q(t) F``."""
    quad = quad or SubordinatorQuad()
    if t <= 0:
        raise ValueError("subordination time must be > 0")
    cache: dict[int, float] = {}

    def factor(m):
        if m not in cache:
            cache[m] = quad.integrate(m, t)
        return cache[m]

    return apply_Q_closed(t, F), F.scale_orders(factor)


# --------------------------------------------------------------------------
# multipliers


@dataclass(frozen=True)
class MultiplierSpec:
    """Scalar rule ``n -> phi(n)``: a callable or a finite table."""

    rule: Callable[[int], float] | Mapping[int, float]

    def __call__(self, n: int) -> float:
        if callable(self.rule):
            return float(self.rule(n))
        if n not in self.rule:
            raise KeyError(f"multiplier undefined at order {n}")
        return float(self.rule[n])


def multiplier(spec: MultiplierSpec | Callable[[int], float], F: Expansion) -> Expansion:
    """``T_phi F = sum_n phi(n) J_n F``."""
    spec = spec if isinstance(spec, MultiplierSpec) else MultiplierSpec(spec)
    for m in F.orders():
        spec(m)
    return F.scale_orders(spec)


def resolvent(lam: float, F: Expansion) -> Expansion:
    """``R_lambda = sum_m (lambda - m)^{-1} J_m``."""
    if float(lam).is_integer() and lam >= 0:
        raise ValueError("lambda lies in the spectrum {0, 1, 2, ...}")
    return multiplier(lambda m: 1.0 / (lam - m), F)


def tail_bound_check(t: float, N: int, F: ChaosExpansion) -> tuple[float, float]:
    """``(||P(t)(I - J_0 - ... - J_{N-1}) F||_2, e^{-Nt} ||F||_2)``."""
    if F.space.d != 1:
        raise DimensionError("tail bound is checked for scalar functionals")
    tail = F.scale_orders(lambda m: 1.0 if m >= N else 0.0)
    return l2_norm_exact(apply_P(t, tail)), math.exp(-N * t) * l2_norm_exact(F)


def rs_operators(F: ChaosExpansion) -> tuple[OperatorValuedExpansion, ChaosExpansion]:
    """``RF = D sum_m m^{-1/2} J_m F`` and ``S(RF)``.

    ``S`` is defined on derivatives by ``S(D sum_m J_m G) = sum_m m^{1/2} J_m G``;
    it recovers ``J_m G`` from the order ``m - 1`` layer of ``DG`` through
    ``delta D = m`` on chaos ``m``.
    """
    RF = derivative(F.scale_orders(lambda m: m**-0.5 if m else 0.0))
    return RF, apply_S(RF)


def apply_S(V: OperatorValuedExpansion) -> ChaosExpansion:
    """``S`` on an order-1 operator-valued expansion ``V = DG``."""
    return divergence(V.scale_orders(lambda k: 1.0 / math.sqrt(k + 1)))


def represent(F: ChaosExpansion) -> tuple[np.ndarray, OperatorValuedExpansion]:
    """``(E F, U)`` with ``U = D (-L)^{-1} (F - E F)``; ``F = E F + delta(U)``."""
    mean = F.mean()
    centered = F - F.project(0)
    U = derivative(centered.scale_orders(lambda m: 1.0 / m))
    return mean, U


def commutation_check(t: float, F: ChaosExpansion) -> dict[str, float]:
    """Max coefficient gaps in the four commutation relations with ``D``."""
    DF = derivative(F)
    return {
        "DP": derivative(apply_P(t, F)).max_deviation(math.exp(-t) * apply_P(t, DF)),
        "DQ": derivative(apply_Q_closed(t, F)).max_deviation(apply_Q1_closed(t, DF)),
        "DL": derivative(apply_L(F)).max_deviation(-1.0 * apply_I_minus_L_power(DF, 1.0)),
        "DC": derivative(apply_C(F)).max_deviation(-1.0 * apply_I_minus_L_power(DF, 0.5)),
    }


def dirichlet_check(F: ChaosExpansion, G: ChaosExpansion) -> tuple[float, float]:
    """``(E<(-L)F, G>, E[DF, DG]_gamma)``."""
    lhs = exact_inner(-1.0 * apply_L(F), G)
    rhs = exact_inner(derivative(F), derivative(G))
    return lhs, rhs


def spectrum_residuals(F: ChaosExpansion, lambdas=(0.5, 2.5, -1.0)) -> dict[str, float]:
    """Max gaps in ``(m + L) J_m F = 0`` and ``(lambda + L) R = R (lambda + L) = I``."""
    out = {"eigen": max((apply_L(F.project(m)).max_deviation(-m * F.project(m)) for m in F.orders()), default=0.0)}
    for lam in lambdas:
        R = resolvent(lam, F)
        left = lam * R + apply_L(R)
        FF = lam * F + apply_L(F)
        right = resolvent(lam, FF)
        out[f"left_{lam}"] = left.max_deviation(F)
        out[f"right_{lam}"] = right.max_deviation(F)
    return out


def apply_C_power(k: int, F: Expansion) -> Expansion:
    """``C^k``: order ``m`` scaled by ``(-sqrt(m))^k``."""
    return F.scale_orders(lambda m: (-math.sqrt(m)) ** k)


def meyer_norms(F: ChaosExpansion, k: int, p: float, mc: McConfig) -> dict[str, EstimateResult]:
    """``||F||_p``, ``||C^k F||_p`` and ``||D^k F||_p`` from one Monte Carlo pass.

    The gamma^k norm of ``D^k F`` is pathwise (exact for l2, inner Monte Carlo
    otherwise).
    """
    if p < 1:
        raise ValueError("moment order p must be >= 1")
    CF = apply_C_power(k, F)
    DF = derivative_n(F, k)

    def stat(s):
        g = s[:, 0, :]
        cols = [F.space.norm(F.evaluate_points(g)), CF.space.norm(CF.evaluate_points(g))]
        if DF.terms:
            cols.append(gamma_norm_pathwise(DF.evaluate_points(g), F.space, mc))
        else:
            cols.append(np.zeros(g.shape[0]))
        return np.stack([np.atleast_1d(c) for c in cols], axis=1) ** p

    mean, se = mean_and_se(batch_means(stat, F.dim_n, 1, mc), mc)
    est = [lp_from_moment(float(mean[j]), float(se[j]), p, mc) for j in range(3)]
    return {"F": est[0], "C": est[1], "D": est[2]}
