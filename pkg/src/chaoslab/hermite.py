"""Multi-index bookkeeping and normalized Hermite polynomials.

The Hermite polynomials used throughout the package are normalized by

    H_0 = 1,  H_1(x) = x,  (m + 1) H_{m+1}(x) = x H_m(x) - H_{m-1}(x),

so that ``H_m = He_m / m!`` where ``He_m`` is the classical probabilists'
Hermite polynomial (``numpy.polynomial.hermite_e``). With this choice
``E[H_m(g)^2] = 1/m!`` for a standard normal ``g`` and the products

    Psi_c = sqrt(c!) * prod_j H_{c_j}(g_j)

form an orthonormal basis of the polynomial Gaussian functionals.

A *multi-index* is an ordered tuple of 1-based basis indices, e.g.
``(3, 1, 3)``. Its *count vector* is the sorted tuple of
``(index, multiplicity)`` pairs, e.g. ``((1, 1), (3, 2))``; ``Psi`` only
depends on the count vector, which therefore serves as the dictionary key
for chaos expansions.
"""

from __future__ import annotations

import itertools

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DimensionError

MultiIndex = tuple[int, ...]
CountVector = tuple[tuple[int, int], ...]

MONOMIAL = "monomial"
HERMITE = "hermite"
_BASES = (MONOMIAL, HERMITE)


class MultiStats(NamedTuple):
    order: int
    sup: int
    factorial: int
    counts: CountVector


def check_multiindex(i: Sequence[int]) -> MultiIndex:
    i = tuple(int(k) for k in i)
    if any(k < 1 for k in i):
        raise ValueError(f"multi-index entries must be >= 1, got {i}")
    return i


def counts(i: Sequence[int]) -> CountVector:
    """Canonical count vector of a multi-index (order-invariant)."""
    return tuple(sorted(Counter(check_multiindex(i)).items()))


def canonical_counts(c: Iterable[tuple[int, int]]) -> CountVector:
    """Normalize an arbitrary iterable of (index, multiplicity) pairs."""
    acc: dict[int, int] = {}
    for j, k in c:
        if j < 1:
            raise ValueError(f"basis index must be >= 1, got {j}")
        if k < 0:
            raise ValueError(f"multiplicity must be >= 0, got {k}")
        acc[j] = acc.get(j, 0) + k
    return tuple(sorted((j, k) for j, k in acc.items() if k > 0))


def expand_counts(c: CountVector) -> MultiIndex:
    """Sorted multi-index with the given counts."""
    return tuple(j for j, k in c for _ in range(k))


def order_of(c: CountVector) -> int:
    return sum(k for _, k in c)


def sup_of(c: CountVector) -> int:
    return max((j for j, _ in c), default=0)


def factorial_of(c: CountVector) -> int:
    return math.prod(math.factorial(k) for _, k in c)


def multi_stats(i: Sequence[int]) -> MultiStats:
    """Return ``|i|``, ``|i|_inf``, ``i!`` and the count vector of ``i``."""
    c = counts(i)
    return MultiStats(order_of(c), sup_of(c), factorial_of(c), c)


def add_unit(c: CountVector, j: int, k: int = 1) -> CountVector:
    """Count vector of ``c`` with the multiplicity of ``j`` raised by ``k``
    (lowered when ``k`` is negative)."""
    return canonical_counts(tuple(c) + ((j, k),)) if k >= 0 else _remove(c, j, -k)


def _remove(c: CountVector, j: int, k: int) -> CountVector:
    out = []
    for jj, kk in c:
        if jj == j:
            if kk < k:
                raise ValueError(f"cannot remove {k} copies of {j} from {c}")
            kk -= k
        if kk:
            out.append((jj, kk))
    return tuple(out)


def count_vectors(n: int, m: int) -> list[CountVector]:
    """All count vectors of order ``m`` over indices ``1..n``, sorted."""
    return [counts(i) for i in itertools.combinations_with_replacement(range(1, n + 1), m)]


def format_counts(c: CountVector) -> str:
    """``((1, 1), (3, 2))`` -> ``"1:1,3:2"``; the empty key is ``""``."""
    return ",".join(f"{j}:{k}" for j, k in c)


def parse_counts(s: str) -> CountVector:
    s = s.strip()
    if not s:
        return ()
    pairs = []
    for part in s.split(","):
        j, _, k = part.partition(":")
        if not k:
            raise ValueError(f"malformed count vector entry {part!r}")
        pairs.append((int(j), int(k)))
    return canonical_counts(pairs)


# --------------------------------------------------------------------------
# univariate Hermite algebra


@dataclass(frozen=True)
class UnivariatePoly:
    """Coefficients indexed by degree in either the monomial or Hermite basis.

    Coefficients are floats, or exact ``Fraction`` values when every input
    coefficient is an ``int`` or ``Fraction``.
    """

    coefficients: tuple
    basis: str = MONOMIAL

    def __post_init__(self):
        if self.basis not in _BASES:
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.is_exact_input(self.coefficients):
            coeffs = [Fraction(a) for a in self.coefficients]
        else:
            coeffs = [float(a) for a in self.coefficients]
        while coeffs and coeffs[-1] == 0:
            coeffs.pop()
        object.__setattr__(self, "coefficients", tuple(coeffs))

    @staticmethod
    def is_exact_input(coeffs) -> bool:
        return all(isinstance(a, (int, Fraction)) and not isinstance(a, bool) for a in coeffs)

    @property
    def exact(self) -> bool:
        return bool(self.coefficients) and isinstance(self.coefficients[0], Fraction)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if not self.coefficients:
            return np.zeros_like(x)
        coeffs = np.array([float(a) for a in self.coefficients])
        if self.basis == MONOMIAL:
            return np.polynomial.polynomial.polyval(x, coeffs)
        table = hermite_table(self.degree, x)
        return table @ coeffs


@lru_cache(maxsize=None)
def _hermite_rows(m: int) -> tuple[tuple[Fraction, ...], ...]:
    # rows[k][p] = coefficient of x^p in H_k, exact
    rows: list[tuple[Fraction, ...]] = [(Fraction(1),)]
    if m >= 1:
        rows.append((Fraction(0), Fraction(1)))
    for k in range(1, m):
        prev, cur = rows[k - 1], rows[k]
        nxt = [Fraction(0)] * (k + 2)
        for p, a in enumerate(cur):
            nxt[p + 1] += a
        for p, a in enumerate(prev):
            nxt[p] -= a
        rows.append(tuple(a / (k + 1) for a in nxt))
    return tuple(rows)


@lru_cache(maxsize=None)
def _power_rows(m: int) -> tuple[tuple[Fraction, ...], ...]:
    # rows[k][q] = coefficient of H_q in x^k; back-substitution against the
    # lower-triangular Hermite table (H_k has leading coefficient 1/k!)
    herm = _hermite_rows(m)
    rows: list[tuple[Fraction, ...]] = []
    for k in range(m + 1):
        rest = [Fraction(0)] * (k + 1)
        rest[k] = Fraction(1)
        out = [Fraction(0)] * (k + 1)
        for q in range(k, -1, -1):
            if rest[q] == 0:
                continue
            a = rest[q] / herm[q][q]
            out[q] = a
            for p, h in enumerate(herm[q]):
                rest[p] -= a * h
        rows.append(tuple(out))
    return tuple(rows)


def hermite_coeffs(m: int) -> UnivariatePoly:
    """Monomial coefficients of ``H_m``."""
    if m < 0:
        raise ValueError("degree must be >= 0")
    return UnivariatePoly(tuple(float(a) for a in _hermite_rows(m)[m]), MONOMIAL)


def hermite_matrix(m: int) -> np.ndarray:
    """``A[k, p]`` = coefficient of ``x^p`` in ``H_k``, for ``k, p <= m``."""
    out = np.zeros((m + 1, m + 1))
    for k, row in enumerate(_hermite_rows(m)):
        out[k, : len(row)] = [float(a) for a in row]
    return out


def power_matrix(m: int) -> np.ndarray:
    """``B[k, q]`` = coefficient of ``H_q`` in ``x^k``, for ``k, q <= m``."""
    out = np.zeros((m + 1, m + 1))
    for k, row in enumerate(_power_rows(m)):
        out[k, : len(row)] = [float(a) for a in row]
    return out


def basis_convert(p: UnivariatePoly, target: str) -> UnivariatePoly:
    """Re-express ``p`` in the ``target`` basis.

    Exact polynomials are converted in rational arithmetic, so a round trip
    returns the input unchanged. Float conversion is limited by conditioning:
    at degree 12 the Hermite coefficients of ``x^12`` reach ``12!``, and a
    float round trip can drift by about ``1e-10``.
    """
    if target not in _BASES:
        raise ValueError(f"unknown basis {target!r}")
    if p.basis == target or not p.coefficients:
        return UnivariatePoly(p.coefficients, target)
    if p.exact:
        rows = _hermite_rows(p.degree) if target == MONOMIAL else _power_rows(p.degree)
        out = [
            sum((a * rows[k][q] for k, a in enumerate(p.coefficients) if q < len(rows[k])), Fraction(0))
            for q in range(p.degree + 1)
        ]
        return UnivariatePoly(tuple(out), target)
    c = np.asarray(p.coefficients)
    if target == MONOMIAL:
        out = c @ hermite_matrix(p.degree)
    else:
        out = c @ power_matrix(p.degree)
    return UnivariatePoly(tuple(out), target)


def hermite_table(m: int, x) -> np.ndarray:
    """Array of ``H_0(x), ..., H_m(x)`` stacked along a new last axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (m + 1,))
    out[..., 0] = 1.0
    if m >= 1:
        out[..., 1] = x
    for k in range(1, m):
        out[..., k + 1] = (x * out[..., k] - out[..., k - 1]) / (k + 1)
    return out


def hermite_eval(m: int, x):
    """``H_m(x)`` by the three-term recurrence; ``x`` may be an array."""
    if m < 0:
        raise ValueError("degree must be >= 0")
    h = hermite_table(m, x)[..., m]
    return float(h) if h.ndim == 0 else h


def as_counts(i) -> CountVector:
    """Accept either a multi-index or an already-canonical count vector."""
    i = tuple(i)
    if i and isinstance(i[0], tuple):
        return canonical_counts(i)
    return counts(i)


def psi_eval(i, g):
    """``Psi_i`` at the sample vector ``g`` (last axis indexes the basis)."""
    c = as_counts(i)
    g = np.asarray(g, dtype=float)
    if sup_of(c) > g.shape[-1]:
        raise DimensionError(
            f"index {sup_of(c)} exceeds sample dimension {g.shape[-1]}"
        )
    val = np.full(g.shape[:-1], math.sqrt(factorial_of(c)))
    for j, k in c:
        val = val * hermite_table(k, g[..., j - 1])[..., k]
    return float(val) if val.ndim == 0 else val
