"""Coupled and decoupled Gaussian chaos pairs and their norm ratios.

An instance holds coefficients ``x_i`` indexed by ordered multi-indices of
length ``m``. The coupled functional uses one Gaussian sequence,

    symmetric:    F = sum_i (i!/m!)^(1/2) Psi_i x_i
    tetrahedral:  F = sum_i g_i1 ... g_im x_i

and the decoupled one uses ``m`` independent copies,
``F~ = sum_i g^(1)_i1 ... g^(m)_im x_i``. Monte Carlo estimates of both
norms are taken from one sample array with ``m`` rows: the coupled value
reads row 0, the decoupled value rows ``0 .. m-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import hermite
from .chaos import BanachSpaceModel, ChaosExpansion, l2_norm_exact, phi_m
from .errors import SymmetryError, TetrahedralityError, UnsupportedNormError
from .malliavin import derivative_n
from .montecarlo import EstimateResult, McConfig, batch_means, lp_from_moment, mean_and_se
from .tensor import ElementaryOperator, decoupled_values, gamma_norm_exact_hilbert, gamma_norm_mc, is_tetrahedral, symmetrize

CASES = ("symmetric", "tetrahedral")

RATIO_COLUMNS = (
    "case", "m", "n", "d", "norm", "p", "samples", "seed",
    "coupled", "coupled_se", "decoupled", "decoupled_se", "ratio",
)


@dataclass(frozen=True)
class DecouplingInstance:
    case: str
    coefficients: ElementaryOperator

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}, got {self.case!r}")
        T = self.coefficients
        if self.case == "symmetric" and not T.is_symmetric():
            raise SymmetryError("symmetric case needs x_i = x_i' for permuted keys")
        if self.case == "tetrahedral" and not is_tetrahedral(T):
            raise TetrahedralityError("tetrahedral case needs x_i = 0 on repeated indices")

    @property
    def m(self) -> int:
        return self.coefficients.order

    @property
    def dim_n(self) -> int:
        return self.coefficients.dim_n

    @property
    def space(self) -> BanachSpaceModel:
        return self.coefficients.space


def random_instance(
    case: str,
    m: int,
    n: int,
    space: BanachSpaceModel,
    rng: np.random.Generator,
    increasing: bool = True,
) -> DecouplingInstance:
    """I.i.d. standard normal coefficients, then symmetrized or masked.

    The tetrahedral mask keeps only strictly increasing keys by default; with
    ``increasing=False`` every key with distinct entries is kept.
    """
    if case not in CASES:
        raise ValueError(f"case must be one of {CASES}, got {case!r}")
    if case == "tetrahedral" and m > n:
        raise ValueError("tetrahedral instances need m <= n")
    shape = (n,) * m + (space.d,)
    T = ElementaryOperator.from_dense(rng.standard_normal(shape), space)
    if case == "symmetric":
        return DecouplingInstance(case, symmetrize(T))

    def keep(i):
        if increasing:
            return all(a < b for a, b in zip(i, i[1:]))
        return len(set(i)) == len(i)

    return DecouplingInstance(case, T._new({i: x for i, x in T.table.items() if keep(i)}))


def build_coupled(inst: DecouplingInstance) -> ChaosExpansion:
    T = inst.coefficients
    if inst.case == "symmetric":
        return phi_m(T, require_symmetric=True)
    # distinct indices: g_i1 ... g_im = Psi_counts(i)
    out: dict = {}
    for i, x in T.table.items():
        c = hermite.counts(i)
        out[c] = out[c] + x if c in out else x
    return ChaosExpansion(inst.dim_n, inst.space, out)


def _coupled_values(inst: DecouplingInstance, F: ChaosExpansion, s: np.ndarray) -> np.ndarray:
    # for m = 1 the coupled and decoupled sums are the same function of row 0
    if inst.m == 1:
        return decoupled_values(inst.coefficients, s)
    return F.evaluate(s, 0)


def coupled_lp(inst: DecouplingInstance, p: float, mc: McConfig) -> EstimateResult:
    """``||F||_{L^p(Omega; E)}`` by pathwise evaluation of the coupled expansion."""
    F = build_coupled(inst)
    if not F.terms:
        return EstimateResult(0.0, 0.0, mc.samples, mc.seed)
    means = batch_means(lambda s: inst.space.norm(_coupled_values(inst, F, s)) ** p, inst.dim_n, 1, mc)
    mean, se = mean_and_se(means, mc)
    return lp_from_moment(float(mean[0]), float(se[0]), p, mc)


def decoupled_lp(inst: DecouplingInstance, p: float, mc: McConfig) -> EstimateResult:
    """``||F~||_{L^p(Omega; E)}``; the same computation as :func:`gamma_norm_mc`."""
    return gamma_norm_mc(inst.coefficients, p, mc)


@dataclass(frozen=True)
class RatioReport:
    coupled: EstimateResult
    decoupled: EstimateResult
    ratio: float
    ratio_se: float

    def agrees(self, k: float = 3.0) -> bool:
        """``|coupled - decoupled| <= k`` combined standard errors."""
        gap = abs(self.coupled.estimate - self.decoupled.estimate)
        return gap <= k * math.hypot(self.coupled.stderr, self.decoupled.stderr)


def decoupling_ratio(inst: DecouplingInstance, p: float, mc: McConfig) -> RatioReport:
    """Coupled and decoupled ``L^p`` norms from one sample array, and their ratio.

    ``ratio_se`` is a delta-method error that uses the batch covariance of the
    two moments, so the positive correlation of the paired columns is kept.
    """
    if p < 1:
        raise ValueError("moment order p must be >= 1")
    F = build_coupled(inst)
    T = inst.coefficients
    if not F.terms:
        zero = EstimateResult(0.0, 0.0, mc.samples, mc.seed)
        return RatioReport(zero, zero, math.nan, math.nan)

    def stat(s):
        a = np.atleast_1d(inst.space.norm(_coupled_values(inst, F, s))) ** p
        b = a if inst.m == 1 else np.atleast_1d(inst.space.norm(decoupled_values(T, s))) ** p
        return np.stack([a, b], axis=1)

    means = batch_means(stat, inst.dim_n, inst.m, mc)
    mean, se = mean_and_se(means, mc)
    coupled = lp_from_moment(float(mean[0]), float(se[0]), p, mc)
    decoupled = lp_from_moment(float(mean[1]), float(se[1]), p, mc)
    ratio = coupled.estimate / decoupled.estimate
    # var(log ratio) = var(log A - log B) / p^2 from the batch covariance
    logs = np.log(means)
    b = means.shape[0]
    var = float(np.var(logs[:, 0] - logs[:, 1], ddof=1)) / b / p**2
    return RatioReport(coupled, decoupled, ratio, ratio * math.sqrt(var))


def ratio_row(inst: DecouplingInstance, p: float, mc: McConfig, report: RatioReport) -> dict:
    """One CSV row with :data:`RATIO_COLUMNS`."""
    return {
        "case": inst.case,
        "m": inst.m,
        "n": inst.dim_n,
        "d": inst.space.d,
        "norm": inst.space.norm_tag,
        "p": p,
        "samples": mc.samples,
        "seed": mc.seed,
        "coupled": report.coupled.estimate,
        "coupled_se": report.coupled.stderr,
        "decoupled": report.decoupled.estimate,
        "decoupled_se": report.decoupled.stderr,
        "ratio": report.ratio,
    }


def exact_second_moments(inst: DecouplingInstance) -> tuple[float, float]:
    """``(E||F||^2, E||F~||^2)`` from orthonormality (l2 tag only)."""
    if not inst.space.is_hilbert:
        raise UnsupportedNormError("exact second moments need the l2 tag")
    return l2_norm_exact(build_coupled(inst)) ** 2, gamma_norm_exact_hilbert(inst.coefficients) ** 2


def survival_curve(inst: DecouplingInstance, thresholds, mc: McConfig) -> list[tuple[float, float, float]]:
    """Empirical ``(t, P(||F|| > t), P(||F~|| > t))``; no acceptance threshold."""
    ts = np.asarray(thresholds, dtype=float)
    F = build_coupled(inst)
    T = inst.coefficients

    def stat(s):
        a = np.atleast_1d(inst.space.norm(_coupled_values(inst, F, s)))
        b = np.atleast_1d(inst.space.norm(decoupled_values(T, s)))
        return np.concatenate([a[:, None] > ts, b[:, None] > ts], axis=1).astype(float)

    mean, _ = mean_and_se(batch_means(stat, inst.dim_n, inst.m, mc), mc)
    k = len(ts)
    return [(float(t), float(mean[j]), float(mean[k + j])) for j, t in enumerate(ts)]


def _contract_batch(values: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Contract the ``j`` H-slots of per-sample tensors ``(N, n, ..., n, d)`` with rows ``(N, j, n)``."""
    N, j, n = rows.shape
    acc = values
    for k in range(j):
        acc = np.einsum("bi,bir->br", rows[:, k, :], acc.reshape(N, n, -1))
    return acc.reshape(N, -1)


def meyer_chain(inst: DecouplingInstance, p: float, mc: McConfig) -> list[EstimateResult]:
    """``||F^(j)||_p`` for ``j = 0..m`` along the one-copy-at-a-time reduction.

    ``F^(j) = D F^(j-1)(g~^(j)) / sqrt(m - j + 1)``, i.e.
    ``D^j F(g~^(1), ..., g~^(j)) / sqrt(m! / (m-j)!)``. ``F^(0) = F`` and
    ``F^(m)`` is the constant ``D^m F / sqrt(m!)`` tested against ``m`` fresh
    copies, a fully decoupled functional. Row 0 carries the base sequence and
    rows ``1..m`` the copies.
    """
    if p < 1:
        raise ValueError("moment order p must be >= 1")
    m = inst.m
    F = build_coupled(inst)
    if not F.terms:
        return [EstimateResult(0.0, 0.0, mc.samples, mc.seed) for _ in range(m + 1)]
    layers = [F] + [derivative_n(F, j) for j in range(1, m + 1)]
    scales = [1.0] + [1.0 / math.sqrt(math.perm(m, j)) for j in range(1, m + 1)]

    def stat(s):
        g = s[:, 0, :]
        cols = [np.atleast_1d(inst.space.norm(F.evaluate_points(g)))]
        for j in range(1, m + 1):
            vals = layers[j].evaluate_points(g)
            cols.append(np.atleast_1d(inst.space.norm(scales[j] * _contract_batch(vals, s[:, 1 : j + 1, :]))))
        return np.stack(cols, axis=1) ** p

    mean, se = mean_and_se(batch_means(stat, inst.dim_n, m + 1, mc), mc)
    return [lp_from_moment(float(mean[j]), float(se[j]), p, mc) for j in range(m + 1)]
