"""Multiple Wiener-Ito integrals of tetrahedral simple functions.

``M`` is modelled by ``q`` disjoint cells ``A_1, ..., A_q`` with masses
``mu(A_j) > 0``. Cell ``j`` is wired to basis vector
``u_j = mu(A_j)^(-1/2) 1_{A_j}`` of ``L^2(M)``, so ``W(A_j) = mu(A_j)^(1/2) g_j``
and the integral of a tetrahedral simple function is an exact chaos
expansion of order ``m``.

JSON shapes::

    {"kind": "measure", "masses": [1.0, 4.0]}
    {"kind": "simple", "order": 2, "d": 1, "norm": "l2", "table": {"1,2": [1.0]}}
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import hermite
from .chaos import BanachSpaceModel, ChaosExpansion, clean_terms, l2_norm_exact
from .errors import DimensionError, TetrahedralityError, UnsupportedNormError
from .tensor import ElementaryOperator, symmetrize


@dataclass(frozen=True)
class MeasureSpaceModel:
    masses: tuple[float, ...]

    def __post_init__(self):
        masses = tuple(float(a) for a in self.masses)
        if not masses:
            raise ValueError("need at least one cell")
        if any(not a > 0 for a in masses):
            raise ValueError("cell masses must be strictly positive")
        object.__setattr__(self, "masses", masses)

    @property
    def q(self) -> int:
        return len(self.masses)

    def root_mass(self, i) -> float:
        return math.prod(math.sqrt(self.masses[j - 1]) for j in i)


class TetraSimpleFunction:
    """``F = sum_i 1_{A_i1 x ... x A_im} x_i`` with ``x_i = 0`` on repeated indices."""

    __slots__ = ("order", "space", "table")

    def __init__(self, order: int, space: BanachSpaceModel, table: Mapping | None = None):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order, self.space = int(order), space
        keyed = {}
        for i, x in (table or {}).items():
            i = (int(i),) if np.isscalar(i) else tuple(int(k) for k in i)
            if len(i) != self.order or any(k < 1 for k in i):
                raise DimensionError(f"key {i} invalid for order {order}")
            keyed[i] = x
        self.table = clean_terms(keyed, (space.d,))
        bad = [i for i in self.table if len(set(i)) < len(i)]
        if bad:
            raise TetrahedralityError(f"repeated cell index in keys {bad[:3]}")

    def __repr__(self):
        return f"TetraSimpleFunction(m={self.order}, {len(self.table)} terms)"

    def coefficient(self, i) -> np.ndarray:
        return self.table.get(tuple(i), np.zeros(self.space.d))

    def max_cell(self) -> int:
        return max((max(i) for i in self.table), default=0)


def _check_cells(F: TetraSimpleFunction, M: MeasureSpaceModel):
    if F.max_cell() > M.q:
        raise DimensionError(f"cell index {F.max_cell()} outside 1..{M.q}")


def to_operator(F: TetraSimpleFunction, M: MeasureSpaceModel) -> ElementaryOperator:
    """Operator in the normalized-indicator basis: ``1_A = mu(A)^(1/2) u``."""
    _check_cells(F, M)
    table = {i: M.root_mass(i) * x for i, x in F.table.items()}
    return ElementaryOperator(F.order, M.q, F.space, table)


def symmetrize_function(F: TetraSimpleFunction) -> TetraSimpleFunction:
    T = ElementaryOperator(F.order, max(F.max_cell(), 1), F.space, F.table)
    return TetraSimpleFunction(F.order, F.space, symmetrize(T).table)


def l2_function_norm(F: TetraSimpleFunction, M: MeasureSpaceModel) -> float:
    """``||F||_{L^2(M^m; E)}`` with the Euclidean norm on coefficients."""
    _check_cells(F, M)
    return math.sqrt(sum(float(x @ x) * math.prod(M.masses[j - 1] for j in i) for i, x in F.table.items()))


def integrate_Im(F: TetraSimpleFunction, M: MeasureSpaceModel) -> ChaosExpansion:
    """``I_m(F) = sum_i W(A_i1) ... W(A_im) x_i`` as a chaos expansion.

    Distinct cells make ``g_i1 ... g_im`` equal to ``Psi_i``.
    """
    if not isinstance(F, TetraSimpleFunction):
        raise TypeError("integrate_Im expects a TetraSimpleFunction")
    _check_cells(F, M)
    out: dict = {}
    for i, x in F.table.items():
        if len(set(i)) < len(i):
            raise TetrahedralityError(f"repeated cell index in key {i}")
        c = hermite.counts(i)
        out[c] = out[c] + M.root_mass(i) * x if c in out else M.root_mass(i) * x
    return ChaosExpansion(M.q, F.space, out)


def ito_isometry_check(F: TetraSimpleFunction, M: MeasureSpaceModel) -> tuple[float, float]:
    """``(E|I_m F|^2, m! ||F~||^2_{L^2(M^m)})`` for scalar ``F``."""
    if F.space.d != 1 or not F.space.is_hilbert:
        raise UnsupportedNormError("the exact isometry is checked for scalar l2 functions")
    lhs = l2_norm_exact(integrate_Im(F, M)) ** 2
    rhs = math.factorial(F.order) * l2_function_norm(symmetrize_function(F), M) ** 2
    return lhs, rhs


def measure_to_json(M: MeasureSpaceModel) -> dict:
    return {"kind": "measure", "masses": list(M.masses)}


def measure_from_json(obj: Mapping) -> MeasureSpaceModel:
    return MeasureSpaceModel(tuple(obj["masses"]))


def simple_to_json(F: TetraSimpleFunction) -> dict:
    return {
        "kind": "simple",
        "order": F.order,
        "d": F.space.d,
        "norm": F.space.norm_tag,
        "table": {",".join(map(str, i)): [float(a) for a in x] for i, x in sorted(F.table.items())},
    }


def simple_from_json(obj: Mapping) -> TetraSimpleFunction:
    space = BanachSpaceModel(int(obj["d"]), obj.get("norm", "l2"))
    table = {tuple(int(k) for k in key.split(",")): v for key, v in obj["table"].items()}
    return TetraSimpleFunction(int(obj["order"]), space, table)
