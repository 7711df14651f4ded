"""Elementary operators ``T = sum_i (u_i1 (x) ... (x) u_im) (x) x_i`` in gamma^m(H, E).

The table of an :class:`ElementaryOperator` maps ordered multi-indices of
length ``m`` to coefficient vectors. The gamma^m norm of such an operator is

    ||T||^2 = E || sum_i g^(1)_i1 ... g^(m)_im x_i ||^2

with ``m`` independent Gaussian sequences. Monte Carlo estimates take the
``m`` sequences from rows ``0 .. m-1`` of a Gaussian sample, so the order-1
estimator is literally the same computation as a single-row one.

JSON shape::

    {"kind": "operator", "order": 2, "dim_n": 3, "d": 1, "norm": "l2",
     "table": {"1,2": [0.5], "2,1": [0.5]}}
"""

from __future__ import annotations

import itertools
import math
from typing import Mapping

import numpy as np

from .chaos import BanachSpaceModel, clean_terms
from .errors import DimensionError, UnsupportedNormError
from .montecarlo import EstimateResult, McConfig, lp_norms

# entries per block when contracting dense coefficient tensors
_BLOCK_ENTRIES = 1 << 22


class ElementaryOperator:
    __slots__ = ("order", "dim_n", "space", "table")

    def __init__(self, order: int, dim_n: int, space: BanachSpaceModel, table: Mapping | None = None):
        if order < 1:
            raise ValueError("operator order must be >= 1")
        if dim_n < 1:
            raise ValueError("dim_n must be >= 1")
        self.order, self.dim_n, self.space = int(order), int(dim_n), space
        keyed = {}
        for i, x in (table or {}).items():
            i = (int(i),) if np.isscalar(i) else tuple(int(k) for k in i)
            if len(i) != self.order or any(not 1 <= k <= self.dim_n for k in i):
                raise DimensionError(f"key {i} invalid for order {order}, dim_n {dim_n}")
            keyed[i] = x
        self.table = clean_terms(keyed, (space.d,))

    def _new(self, table):
        return ElementaryOperator(self.order, self.dim_n, self.space, table)

    def __repr__(self):
        return f"ElementaryOperator(m={self.order}, n={self.dim_n}, {len(self.table)} terms)"

    def __add__(self, other):
        if (other.order, other.dim_n, other.space.d) != (self.order, self.dim_n, self.space.d):
            raise DimensionError("operators live on different models")
        out = dict(self.table)
        for i, x in other.table.items():
            out[i] = out[i] + x if i in out else x
        return self._new(out)

    def __mul__(self, a: float):
        return self._new({i: a * x for i, x in self.table.items()})

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other

    def coefficient(self, i) -> np.ndarray:
        return self.table.get(tuple(i), np.zeros(self.space.d))

    def max_deviation(self, other: "ElementaryOperator") -> float:
        keys = self.table.keys() | other.table.keys()
        return max(
            (float(np.abs(self.coefficient(i) - other.coefficient(i)).max()) for i in keys),
            default=0.0,
        )

    def is_symmetric(self, atol: float = 1e-12) -> bool:
        return symmetrize(self).max_deviation(self) <= atol

    def dense(self) -> np.ndarray:
        """Coefficient tensor of shape ``(n,) * m + (d,)`` (0-based slots)."""
        out = np.zeros((self.dim_n,) * self.order + (self.space.d,))
        for i, x in self.table.items():
            out[tuple(k - 1 for k in i)] = x
        return out

    @classmethod
    def from_dense(cls, arr, space: BanachSpaceModel) -> "ElementaryOperator":
        arr = np.asarray(arr, dtype=float)
        order, n = arr.ndim - 1, arr.shape[0]
        table = {
            tuple(k + 1 for k in idx): arr[idx]
            for idx in itertools.product(range(n), repeat=order)
            if np.any(arr[idx] != 0)
        }
        return cls(order, n, space, table)


def symmetrize(T: ElementaryOperator) -> ElementaryOperator:
    """``P_s``: average the coefficients over all permutations of each key."""
    m = T.order
    mf = math.factorial(m)
    out: dict = {}
    for i, x in T.table.items():
        for perm in itertools.permutations(range(m)):
            j = tuple(i[p] for p in perm)
            out[j] = out[j] + x / mf if j in out else x / mf
    return T._new(out)


def is_tetrahedral(T: ElementaryOperator) -> bool:
    return all(len(set(i)) == len(i) for i in T.table)


def gamma_norm_exact_hilbert(T: ElementaryOperator) -> float:
    """Hilbert case: products of decoupled Gaussians are orthonormal."""
    if not T.space.is_hilbert:
        raise UnsupportedNormError(f"exact gamma norm needs the l2 tag, got {T.space.norm_tag!r}")
    return math.sqrt(sum(float(x @ x) for x in T.table.values()))


def contract_rows(tensor: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """``sum_i rows[:, 0, i1] ... rows[:, m-1, im] tensor[i1, ..., im, :]``.

    ``tensor`` has shape ``(n,) * m + (d,)`` and ``rows`` ``(N, >= m, n)``;
    the result has shape ``(N, d)``.
    """
    m = tensor.ndim - 1
    n, d = tensor.shape[0], tensor.shape[-1]
    N = rows.shape[0]
    flat = tensor.reshape(n, -1)
    step = max(1, _BLOCK_ENTRIES // max(flat.shape[1], 1))
    out = np.empty((N, d))
    for lo in range(0, N, step):
        r = rows[lo : lo + step]
        acc = r[:, 0, :] @ flat  # (b, n^(m-1) d)
        for k in range(1, m):
            acc = acc.reshape(acc.shape[0], n, -1)
            acc = np.einsum("bi,bir->br", r[:, k, :], acc)
        out[lo : lo + step] = acc.reshape(-1, d)
    return out


def decoupled_values(T: ElementaryOperator, rows: np.ndarray) -> np.ndarray:
    """Pathwise ``sum_i g^(1)_i1 ... g^(m)_im x_i`` with copy ``k`` on row ``k - 1``."""
    rows = np.asarray(rows, dtype=float)
    if rows.shape[-2] < T.order or rows.shape[-1] != T.dim_n:
        raise DimensionError(f"need >= {T.order} rows of length {T.dim_n}, got {rows.shape}")
    if not T.table:
        return np.zeros(rows.shape[:-2] + (T.space.d,))
    if T.dim_n ** T.order <= 4 * len(T.table) or T.dim_n ** T.order <= 4096:
        return contract_rows(T.dense(), rows)
    out = np.zeros(rows.shape[:-2] + (T.space.d,))
    for i, x in T.table.items():
        prod = np.ones(rows.shape[:-2])
        for k, j in enumerate(i):
            prod = prod * rows[..., k, j - 1]
        out += prod[..., None] * x
    return out


def gamma_norm_mc(T: ElementaryOperator, p: float = 2.0, mc: McConfig | None = None) -> EstimateResult:
    """``(E || sum_i g^(1)_i1 ... g^(m)_im x_i ||^p)^(1/p)`` by Monte Carlo."""
    mc = mc or McConfig()
    if not T.table:
        return EstimateResult(0.0, 0.0, mc.samples, mc.seed)
    return lp_norms(
        lambda s: T.space.norm(decoupled_values(T, s)), T.dim_n, T.order, p, mc
    )[0]


def trace_pairing(T: ElementaryOperator, S: ElementaryOperator) -> float:
    """``[T, S]_gamma = tr(T* S) = sum_j <T u_j, S u_j>`` for order-1 operators."""
    if T.order != 1 or S.order != 1:
        raise ValueError("trace pairing is defined for order-1 operators only")
    if T.dim_n != S.dim_n or T.space.d != S.space.d:
        raise DimensionError("operators live on different models")
    return sum(float(x @ S.table[i]) for i, x in T.table.items() if i in S.table)


def operator_to_json(T: ElementaryOperator) -> dict:
    return {
        "kind": "operator",
        "order": T.order,
        "dim_n": T.dim_n,
        "d": T.space.d,
        "norm": T.space.norm_tag,
        "table": {",".join(map(str, i)): [float(a) for a in x] for i, x in sorted(T.table.items())},
    }


def operator_from_json(obj: Mapping) -> ElementaryOperator:
    if obj.get("kind", "operator") != "operator":
        raise ValueError(f"expected kind 'operator', got {obj.get('kind')!r}")
    space = BanachSpaceModel(int(obj["d"]), obj.get("norm", "l2"))
    table = {tuple(int(k) for k in key.split(",")): v for key, v in obj["table"].items()}
    return ElementaryOperator(int(obj["order"]), int(obj["dim_n"]), space, table)
