"""Finite-dimensional isonormal Gaussian model with reproducible sampling.

Every ``(seed, stream)`` pair names one infinite sequence of standard normal
draws. Draw number ``t`` is produced from raw 64-bit word ``t`` of a
Philox-4x64 generator keyed by ``(seed, stream)``: the top 53 bits give a
uniform ``u = (k + 1/2) / 2**53`` and the normal is ``ndtri(u)`` (inverse
CDF). One word per draw means any window of the sequence can be generated
directly from its offset, so chunks computed by different workers
concatenate to exactly the single-worker result.

A sample with ``k_max`` copies is a ``(k_max + 1, n)`` matrix; row 0 holds
the base sequence ``(g_j)``, rows ``1..k_max`` independent copies, and an
optional extra last row the tilde copy. Sample ``i`` of a run occupies the
draws ``[i * w, (i + 1) * w)`` with ``w`` the number of entries per sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DimensionError

_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0**-53


@dataclass(frozen=True)
class FiniteGaussianModel:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("model dimension n must be >= 1")


@dataclass(frozen=True)
class RngSpec:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not 0 <= self.stream <= _MASK64:
            raise ValueError("stream must be a 64-bit unsigned integer")


def normal_draws(rng: RngSpec, start: int, count: int) -> np.ndarray:
    """Draws ``start .. start + count - 1`` of the normal sequence of ``rng``."""
    if start < 0 or count < 0:
        raise ValueError("start and count must be non-negative")
    block, skip = divmod(start, 4)
    gen = np.random.Philox(key=[rng.seed, rng.stream], counter=[block, 0, 0, 0])
    raw = gen.random_raw(skip + count)[skip:]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53
    return ndtri(u)


def sample(
    model: FiniteGaussianModel,
    k_max: int,
    count: int,
    rng: RngSpec,
    start: int = 0,
    tilde: bool = False,
) -> np.ndarray:
    """Samples ``start .. start + count - 1``, shape ``(count, rows, n)``.

    ``rows = k_max + 1`` plus one when ``tilde`` is requested.
    """
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    if count < 1:
        raise ValueError("count must be >= 1")
    rows = k_max + 1 + int(tilde)
    width = rows * model.n
    flat = normal_draws(rng, start * width, count * width)
    return flat.reshape(count, rows, model.n)


def wiener(h, s, copy: int = 0):
    """``W(h) = sum_j h_j g_j`` on row ``copy`` of a sample (or batch)."""
    h = np.asarray(h, dtype=float)
    s = np.asarray(s, dtype=float)
    if h.ndim != 1 or h.shape[0] != s.shape[-1]:
        raise DimensionError(f"h has length {h.shape}, sample rows have {s.shape[-1]}")
    val = s[..., copy, :] @ h
    return float(val) if np.ndim(val) == 0 else val
