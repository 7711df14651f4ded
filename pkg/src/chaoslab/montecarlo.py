"""Batched Monte Carlo moment estimation on top of :mod:`chaoslab.gaussian`.

A run of ``samples`` draws is cut into ``batches`` contiguous chunks of the
same draw sequence. Chunks may be evaluated by several worker threads, but
the per-chunk means are always combined in chunk order, so results do not
depend on the worker count. Standard errors come from the spread of the
chunk means.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gaussian import FiniteGaussianModel, RngSpec, sample

# stream reserved for the inner Gaussian draws of pathwise gamma norms
INNER_STREAM = 0xC0FFEE


@dataclass(frozen=True)
class McConfig:
    samples: int = 100_000
    batches: int = 32
    seed: int = 0
    confidence: float = 3.0
    workers: int = 1
    inner: int = 64

    def __post_init__(self):
        if self.samples < 10_000:
            raise ValueError("samples must be >= 10^4")
        if self.batches < 2:
            raise ValueError("batches must be >= 2")
        if self.samples < self.batches:
            raise ValueError("samples must be >= batches")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.inner < 1:
            raise ValueError("inner must be >= 1")

    def batch_bounds(self) -> list[tuple[int, int]]:
        size, extra = divmod(self.samples, self.batches)
        bounds, start = [], 0
        for b in range(self.batches):
            count = size + (b < extra)
            bounds.append((start, count))
            start += count
        return bounds


@dataclass(frozen=True)
class EstimateResult:
    estimate: float
    stderr: float
    samples: int
    seed: int

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError("stderr must be >= 0")


def batch_means(
    stat: Callable[[np.ndarray], np.ndarray],
    n: int,
    rows: int,
    mc: McConfig,
    stream: int = 0,
) -> np.ndarray:
    """Per-batch means of ``stat`` over Gaussian samples.

    ``stat`` maps a ``(count, rows, n)`` sample array to a ``(count, q)``
    array; the result has shape ``(batches, q)``.
    """
    model = FiniteGaussianModel(n)
    rng = RngSpec(mc.seed, stream)

    def one(bound):
        start, count = bound
        s = sample(model, rows - 1, count, rng, start=start)
        vals = np.asarray(stat(s), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return vals.mean(axis=0)

    bounds = mc.batch_bounds()
    if mc.workers == 1:
        out = [one(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=mc.workers) as pool:
            out = list(pool.map(one, bounds))
    return np.vstack(out)


def mean_and_se(means: np.ndarray, mc: McConfig) -> tuple[np.ndarray, np.ndarray]:
    """Combine batch means (weighted by batch size) into mean and stderr."""
    weights = np.array([c for _, c in mc.batch_bounds()], dtype=float)
    weights /= weights.sum()
    mean = weights @ means
    spread = means - mean
    var = (spread**2).sum(axis=0) / (len(weights) - 1)
    return mean, np.sqrt(var / len(weights))


def lp_from_moment(moment: float, moment_se: float, p: float, mc: McConfig) -> EstimateResult:
    """``(E X^p)^(1/p)`` with a delta-method standard error."""
    if moment <= 0.0:
        return EstimateResult(0.0, 0.0, mc.samples, mc.seed)
    est = moment ** (1.0 / p)
    se = est / (p * moment) * moment_se
    return EstimateResult(float(est), float(se), mc.samples, mc.seed)


def lp_norms(
    norms: Callable[[np.ndarray], np.ndarray],
    n: int,
    rows: int,
    p: float,
    mc: McConfig,
    stream: int = 0,
) -> list[EstimateResult]:
    """L^p estimates for each column of the pathwise norms returned by ``norms``."""
    if p < 1:
        raise ValueError("moment order p must be >= 1")
    means = batch_means(lambda s: np.asarray(norms(s)) ** p, n, rows, mc, stream)
    mean, se = mean_and_se(means, mc)
    return [lp_from_moment(mean[k], se[k], p, mc) for k in range(len(mean))]


def combined_se(*results: EstimateResult) -> float:
    return math.sqrt(sum(r.stderr**2 for r in results))


def ratio_se(num: EstimateResult, den: EstimateResult) -> float:
    """First-order standard error of ``num / den`` (independence assumed)."""
    if den.estimate == 0:
        return math.inf
    r = num.estimate / den.estimate
    rel = 0.0
    if num.estimate:
        rel += (num.stderr / num.estimate) ** 2
    rel += (den.stderr / den.estimate) ** 2
    return abs(r) * math.sqrt(rel)


def inner_gaussians(k: int, n: int, mc: McConfig) -> np.ndarray:
    """Fixed ``(k, inner, n)`` Gaussian rows shared by every outer sample."""
    s = sample(FiniteGaussianModel(n), k - 1, mc.inner, RngSpec(mc.seed, INNER_STREAM))
    return np.ascontiguousarray(s.transpose(1, 0, 2))
