"""Vector-valued polynomial Wiener functionals in the orthonormal Psi basis.

A :class:`ChaosExpansion` stores ``F = sum_c Psi_c * x_c`` as a mapping from
count vectors ``c`` to coefficient vectors ``x_c`` in ``R^d``. Because the
``Psi_c`` are orthonormal, chaos projections, Ornstein-Uhlenbeck functions
and exact ``L^2`` quantities act coefficientwise. Products and derivatives
are routed through :class:`MonomialFunctional`, the same functional written
as ``sum_a g^a * x_a`` over exponent vectors ``a``.

JSON shape of a chaos expansion::

    {"kind": "chaos", "dim_n": 2, "d": 1, "norm": "l2",
     "terms": {"": [1.0], "1:2": [1.4142135623730951]}}

Keys are count vectors written as sorted ``index:multiplicity`` pairs
(``""`` is the constant term); values are coefficient arrays.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import hermite
from .errors import DimensionError, SymmetryError, UnsupportedNormError
from .hermite import CountVector, factorial_of, order_of, sup_of


def _l1(x):
    return np.abs(x).sum(axis=-1)


def _l2(x):
    return np.sqrt((np.asarray(x) ** 2).sum(axis=-1))


def _linf(x):
    return np.abs(x).max(axis=-1)


NORMS: dict[str, Callable[[np.ndarray], np.ndarray]] = {"l1": _l1, "l2": _l2, "linf": _linf}
DUAL_NORMS: dict[str, str] = {"l1": "linf", "l2": "l2", "linf": "l1"}


def register_norm(name: str, fn: Callable[[np.ndarray], np.ndarray], dual: str | None = None):
    """Add a custom norm on ``R^d`` acting along the last axis."""
    NORMS[name] = fn
    if dual is not None:
        DUAL_NORMS[name] = dual


@dataclass(frozen=True)
class BanachSpaceModel:
    """``E = R^d`` with one of the registered norms."""

    d: int
    norm_tag: str = "l2"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.norm_tag not in NORMS:
            raise ValueError(f"unknown norm {self.norm_tag!r}; known: {sorted(NORMS)}")

    def norm(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise DimensionError(f"expected vectors of length {self.d}, got {x.shape}")
        out = NORMS[self.norm_tag](x)
        return float(out) if np.ndim(out) == 0 else out

    def dual(self) -> "BanachSpaceModel":
        return BanachSpaceModel(self.d, DUAL_NORMS[self.norm_tag])

    @property
    def is_hilbert(self) -> bool:
        return self.norm_tag == "l2"


SCALAR = BanachSpaceModel(1, "l2")


# --------------------------------------------------------------------------
# term-dictionary kernels; values may be arrays of any common shape


def clean_terms(terms: Mapping, shape: tuple[int, ...]) -> dict:
    out = {}
    for key, val in terms.items():
        val = np.asarray(val, dtype=float)
        if val.shape != shape:
            raise DimensionError(f"coefficient of {key} has shape {val.shape}, expected {shape}")
        if np.any(val != 0.0):
            out[key] = val
    return out


def _accumulate(out: dict, key, val):
    if key in out:
        out[key] = out[key] + val
    else:
        out[key] = val


def chaos_to_monomial_terms(terms: Mapping[CountVector, np.ndarray], n: int) -> dict:
    """Rewrite ``sum_c Psi_c v_c`` as ``sum_a g^a w_a`` (``a`` of length n)."""
    out: dict = {}
    for c, val in terms.items():
        if not c:
            _accumulate(out, (0,) * n, val)
            continue
        factors = []
        for j, k in c:
            row = hermite.hermite_matrix(k)[k]
            factors.append([(j, p, a) for p, a in enumerate(row) if a != 0.0])
        scale = math.sqrt(factorial_of(c))
        for combo in itertools.product(*factors):
            expo = [0] * n
            coef = scale
            for j, p, a in combo:
                expo[j - 1] = p
                coef *= a
            _accumulate(out, tuple(expo), coef * val)
    return out


def monomial_to_chaos_terms(terms: Mapping[tuple[int, ...], np.ndarray]) -> dict:
    """Rewrite ``sum_a g^a w_a`` in the Psi basis."""
    out: dict = {}
    for expo, val in terms.items():
        factors = []
        for j, p in enumerate(expo, start=1):
            if p == 0:
                continue
            row = hermite.power_matrix(p)[p]
            factors.append([(j, q, b) for q, b in enumerate(row) if b != 0.0])
        for combo in itertools.product(*factors):
            c = tuple((j, q) for j, q, _ in combo if q > 0)
            coef = math.prod(b for _, _, b in combo) / math.sqrt(factorial_of(c))
            _accumulate(out, c, coef * val)
    return out


def psi_matrix(keys, g: np.ndarray) -> np.ndarray:
    """``Psi_c(g)`` for every key; ``g`` has shape ``(N, n)``, result ``(N, len(keys))``."""
    g = np.asarray(g, dtype=float)
    n = g.shape[-1]
    top = max((k for c in keys for _, k in c), default=0)
    table = hermite.hermite_table(top, g)  # (N, n, top+1)
    out = np.empty(g.shape[:-1] + (len(keys),))
    for t, c in enumerate(keys):
        if sup_of(c) > n:
            raise DimensionError(f"key {c} exceeds sample dimension {n}")
        col = np.full(g.shape[:-1], math.sqrt(factorial_of(c)))
        for j, k in c:
            col = col * table[..., j - 1, k]
        out[..., t] = col
    return out


# --------------------------------------------------------------------------


class Expansion:
    """Finite Psi-basis expansion with array coefficients of a fixed shape."""

    __slots__ = ("dim_n", "space", "terms")

    def __init__(self, dim_n: int, space: BanachSpaceModel, terms: Mapping | None = None):
        if dim_n < 1:
            raise ValueError("dim_n must be >= 1")
        self.dim_n = int(dim_n)
        self.space = space
        terms = {hermite.as_counts(c) if c else (): v for c, v in (terms or {}).items()}
        for c in terms:
            if sup_of(c) > self.dim_n:
                raise DimensionError(f"key {c} uses a basis index above dim_n={self.dim_n}")
        self.terms = clean_terms(terms, self.value_shape)

    @property
    def value_shape(self) -> tuple[int, ...]:
        raise NotImplementedError

    def _new(self, terms):
        raise NotImplementedError

    def _check_compatible(self, other):
        if type(other) is not type(self):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.dim_n != self.dim_n or other.value_shape != self.value_shape:
            raise DimensionError("expansions live on different models")

    def __add__(self, other):
        self._check_compatible(other)
        out = dict(self.terms)
        for c, v in other.terms.items():
            _accumulate(out, c, v)
        return self._new(out)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, a: float):
        if not np.isscalar(a):
            return NotImplemented
        return self._new({c: a * v for c, v in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return (
            self.dim_n == other.dim_n
            and self.space == other.space
            and self.terms.keys() == other.terms.keys()
            and all(np.array_equal(v, other.terms[c]) for c, v in self.terms.items())
        )

    __hash__ = None

    def __repr__(self):
        body = ", ".join(
            f"{hermite.format_counts(c) or '()'}: {np.array2string(v, precision=6)}"
            for c, v in sorted(self.terms.items())
        )
        return f"{type(self).__name__}(n={self.dim_n}, {{{body}}})"

    def __len__(self):
        return len(self.terms)

    def coefficient(self, c) -> np.ndarray:
        c = hermite.as_counts(c) if c else ()
        return self.terms.get(c, np.zeros(self.value_shape))

    def orders(self) -> set[int]:
        return {order_of(c) for c in self.terms}

    def max_order(self) -> int:
        return max(self.orders(), default=0)

    def scale_orders(self, fn: Callable[[int], float]):
        """Multiply each order-``m`` coefficient by ``fn(m)``."""
        return self._new({c: fn(order_of(c)) * v for c, v in self.terms.items()})

    def project(self, m: int):
        """Chaos projection ``J_m``."""
        if m < 0:
            raise ValueError("chaos order must be >= 0")
        return self._new({c: v for c, v in self.terms.items() if order_of(c) == m})

    def mean(self) -> np.ndarray:
        """``E(F)``: the order-0 coefficient."""
        return self.coefficient(())

    def max_deviation(self, other) -> float:
        self._check_compatible(other)
        keys = self.terms.keys() | other.terms.keys()
        return max(
            (float(np.abs(self.coefficient(c) - other.coefficient(c)).max()) for c in keys),
            default=0.0,
        )

    def allclose(self, other, atol: float = 1e-10) -> bool:
        return self.max_deviation(other) <= atol

    def psi_values(self, g) -> tuple[list, np.ndarray]:
        keys = sorted(self.terms)
        return keys, psi_matrix(keys, g)

    def evaluate_points(self, g) -> np.ndarray:
        """Values at points ``g`` of shape ``(..., n)``; result ``(..., *value_shape)``."""
        g = np.asarray(g, dtype=float)
        if g.shape[-1] != self.dim_n:
            raise DimensionError(f"sample dimension {g.shape[-1]} != dim_n {self.dim_n}")
        if not self.terms:
            return np.zeros(g.shape[:-1] + self.value_shape)
        keys, psi = self.psi_values(g)
        coef = np.stack([self.terms[c] for c in keys])
        return np.tensordot(psi, coef, axes=([-1], [0]))

    def evaluate(self, s, copy: int = 0) -> np.ndarray:
        """Value on row ``copy`` of a sample ``(rows, n)`` or batch ``(N, rows, n)``."""
        s = np.asarray(s, dtype=float)
        if s.ndim < 2:
            raise DimensionError("expected a sample matrix of shape (rows, n)")
        return self.evaluate_points(s[..., copy, :])

    def monomial_terms(self) -> dict:
        return chaos_to_monomial_terms(self.terms, self.dim_n)


class ChaosExpansion(Expansion):
    """E-valued polynomial functional ``sum_c Psi_c x_c``."""

    __slots__ = ()

    @property
    def value_shape(self):
        return (self.space.d,)

    def _new(self, terms):
        return ChaosExpansion(self.dim_n, self.space, terms)

    @classmethod
    def constant(cls, x, dim_n: int, space: BanachSpaceModel | None = None):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        space = space or BanachSpaceModel(len(x))
        return cls(dim_n, space, {(): x})

    @classmethod
    def zero(cls, dim_n: int, space: BanachSpaceModel):
        return cls(dim_n, space, {})

    def to_monomial(self) -> "MonomialFunctional":
        return MonomialFunctional(self.dim_n, self.space, self.monomial_terms())


def random_chaos(n: int, space: BanachSpaceModel, orders, rng: np.random.Generator) -> ChaosExpansion:
    """I.i.d. standard normal coefficients on every count vector of the given orders."""
    terms = {
        c: rng.standard_normal(space.d) for m in orders for c in hermite.count_vectors(n, m)
    }
    return ChaosExpansion(n, space, terms)


def to_chaos(F: "MonomialFunctional") -> ChaosExpansion:
    """Psi-basis expansion of a monomial functional."""
    return ChaosExpansion(F.dim_n, F.space, monomial_to_chaos_terms(F.terms))


def to_monomial(F: ChaosExpansion) -> "MonomialFunctional":
    return F.to_monomial()


@dataclass
class MonomialFunctional:
    """``sum_a g_1^{a_1} ... g_n^{a_n} x_a`` with exponent vectors ``a``."""

    dim_n: int
    space: BanachSpaceModel
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        norm = {}
        for a, v in self.terms.items():
            a = tuple(int(p) for p in a)
            if len(a) != self.dim_n or any(p < 0 for p in a):
                raise DimensionError(f"exponent vector {a} invalid for dim_n={self.dim_n}")
            norm[a] = v
        self.terms = clean_terms(norm, (self.space.d,))

    def evaluate_points(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        out = np.zeros(g.shape[:-1] + (self.space.d,))
        for a, v in self.terms.items():
            mono = np.prod(g ** np.asarray(a), axis=-1)
            out += mono[..., None] * v
        return out

    def partial(self, j: int) -> "MonomialFunctional":
        """Partial derivative in ``g_j`` (1-based)."""
        out: dict = {}
        for a, v in self.terms.items():
            p = a[j - 1]
            if p:
                b = a[: j - 1] + (p - 1,) + a[j:]
                _accumulate(out, b, p * v)
        return MonomialFunctional(self.dim_n, self.space, out)


# --------------------------------------------------------------------------


def evaluate(F: ChaosExpansion, s, copy: int = 0) -> np.ndarray:
    return F.evaluate(s, copy)


def project_Jm(F: Expansion, m: int):
    return F.project(m)


def l2_norm_exact(F: Expansion) -> float:
    """``||F||_{L^2(Omega; E)}`` from orthonormality (Hilbert ``E`` only)."""
    if not F.space.is_hilbert:
        raise UnsupportedNormError(
            f"exact L^2 norm needs the l2 tag, got {F.space.norm_tag!r}; use lp_norm_mc"
        )
    return math.sqrt(sum(float((v**2).sum()) for v in F.terms.values()))


def exact_inner(F: Expansion, G: Expansion) -> float:
    """``E <F, G>`` with the coordinatewise pairing (``E*`` identified with ``R^d``)."""
    if F.dim_n != G.dim_n or F.value_shape != G.value_shape:
        raise DimensionError("expansions live on different models")
    return sum(float((v * G.terms[c]).sum()) for c, v in F.terms.items() if c in G.terms)


def phi_m(T, require_symmetric: bool = False) -> ChaosExpansion:
    """Wiener-Ito map: ``P_s(u_i) (x) x_i -> (i!/m!)^(1/2) Psi_i x_i`` summed over
    the ordered keys of the elementary operator ``T``."""
    if require_symmetric and not T.is_symmetric():
        raise SymmetryError("operator is not symmetric")
    m = T.order
    mf = math.factorial(m)
    out: dict = {}
    for i, x in T.table.items():
        c = hermite.counts(i)
        _accumulate(out, c, math.sqrt(factorial_of(c) / mf) * x)
    return ChaosExpansion(T.dim_n, T.space, out)


def lp_norms_mc(F: ChaosExpansion, ps, mc) -> list:
    """Monte Carlo ``||F||_{L^p(Omega; E)}`` for each ``p`` in ``ps`` from one
    pass of pathwise evaluations."""
    from .montecarlo import EstimateResult, batch_means, lp_from_moment, mean_and_se

    ps = [float(p) for p in ps]
    if any(p < 1 for p in ps):
        raise ValueError("moment order p must be >= 1")
    if not F.terms:
        return [EstimateResult(0.0, 0.0, mc.samples, mc.seed) for _ in ps]

    def stat(s):
        norms = np.asarray(F.space.norm(F.evaluate(s, 0)))
        return np.stack([norms**p for p in ps], axis=1)

    mean, se = mean_and_se(batch_means(stat, F.dim_n, 1, mc), mc)
    return [lp_from_moment(float(mean[k]), float(se[k]), p, mc) for k, p in enumerate(ps)]


def lp_norm_mc(F: ChaosExpansion, p: float, mc):
    """Monte Carlo ``||F||_{L^p(Omega; E)}`` by pathwise evaluation."""
    return lp_norms_mc(F, [p], mc)[0]


# --------------------------------------------------------------------------
# products through the monomial basis


def _product_terms(A: Mapping, B: Mapping, combine) -> dict:
    out: dict = {}
    for a, u in A.items():
        for b, v in B.items():
            _accumulate(out, tuple(x + y for x, y in zip(a, b)), combine(u, v))
    return out


def product_terms(F: Expansion, G: Expansion, combine) -> dict:
    """Psi-basis terms of the pointwise product ``combine(F, G)``, where
    ``combine`` is bilinear on coefficient arrays."""
    if F.dim_n != G.dim_n:
        raise DimensionError("expansions live on different models")
    return monomial_to_chaos_terms(
        _product_terms(F.monomial_terms(), G.monomial_terms(), combine)
    )


def pair(F: ChaosExpansion, G: ChaosExpansion) -> ChaosExpansion:
    """Pointwise duality ``<F, G>`` as a scalar chaos expansion."""
    if F.space.d != G.space.d:
        raise DimensionError("pairing needs equal d")
    return ChaosExpansion(F.dim_n, SCALAR, product_terms(F, G, lambda u, v: np.atleast_1d(u @ v)))


def scalar_times(f: ChaosExpansion, F: ChaosExpansion) -> ChaosExpansion:
    """Pointwise product of a scalar functional ``f`` with ``F``."""
    if f.space.d != 1:
        raise DimensionError("first factor must be scalar")
    return ChaosExpansion(F.dim_n, F.space, product_terms(f, F, lambda u, v: u[0] * v))


def gamma_times(F: Expansion, k: int):
    """``g_k * F`` via ``g H_m = (m+1) H_{m+1} + H_{m-1}``, i.e.
    ``g_k Psi_c = sqrt(c_k+1) Psi_{c+e_k} + sqrt(c_k) Psi_{c-e_k}``."""
    if not 1 <= k <= F.dim_n:
        raise DimensionError(f"basis index {k} outside 1..{F.dim_n}")
    out: dict = {}
    for c, v in F.terms.items():
        ck = dict(c).get(k, 0)
        _accumulate(out, hermite.add_unit(c, k), math.sqrt(ck + 1) * v)
        if ck:
            _accumulate(out, hermite.add_unit(c, k, -1), math.sqrt(ck) * v)
    return F._new(out)


# --------------------------------------------------------------------------
# serialization


def chaos_to_json(F: ChaosExpansion) -> dict:
    return {
        "kind": "chaos",
        "dim_n": F.dim_n,
        "d": F.space.d,
        "norm": F.space.norm_tag,
        "terms": {
            hermite.format_counts(c): [float(a) for a in v] for c, v in sorted(F.terms.items())
        },
    }


def chaos_from_json(obj: Mapping) -> ChaosExpansion:
    if obj.get("kind", "chaos") != "chaos":
        raise ValueError(f"expected kind 'chaos', got {obj.get('kind')!r}")
    space = BanachSpaceModel(int(obj["d"]), obj.get("norm", "l2"))
    terms = {hermite.parse_counts(k): np.asarray(v, dtype=float) for k, v in obj["terms"].items()}
    return ChaosExpansion(int(obj["dim_n"]), space, terms)
