"""Seeded, batched Monte Carlo with deterministic merging.

Work is cut into batches whose size depends only on the grid, never on the
worker count. Batches run on a thread pool (numpy releases the GIL in the heavy
kernels) and their moment sums are merged in batch order, so a fixed
configuration reproduces bit-identical estimates for any number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import InvalidArgument
from .grid_paths import (AUXILIARY, BrownianPath, RngStream, TimeGrid,
                         grid_from_times, per_path_draws, sample_paths)

# target number of doubles per path array inside one batch
BATCH_ELEMENTS = 2**21


@dataclass(frozen=True)
class MCConfig:
    paths: int
    grid: TimeGrid | None = None
    seed: int = 0
    workers: int = 1
    bridge: bool = False
    batch_size: int | None = None

    def __post_init__(self):
        if int(self.paths) < 1:
            raise InvalidArgument("paths must be positive")
        if int(self.workers) < 1:
            raise InvalidArgument("workers must be positive")
        if self.batch_size is not None and int(self.batch_size) < 1:
            raise InvalidArgument("batch_size must be positive")
        RngStream(self.seed)

    def resolved_batch_size(self) -> int:
        if self.batch_size is not None:
            return int(self.batch_size)
        n = self.grid.n_steps if self.grid is not None else 1
        return int(max(1, min(4096, BATCH_ELEMENTS // max(n, 1))))

    def with_grid_default(self, *time_sets, T: float | None = None) -> "MCConfig":
        """Fill in the coarsest grid carrying every time in ``time_sets``."""
        if self.grid is not None:
            return self
        pts = np.concatenate([np.asarray(ts, dtype=float).ravel() for ts in time_sets])
        T = float(pts.max()) if T is None else T
        return replace(self, grid=grid_from_times(T, *time_sets))

    def with_seed_offset(self, offset: int) -> "MCConfig":
        return replace(self, seed=(int(self.seed) + int(offset)) % 2**64)


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int
    minimum: float = math.nan
    maximum: float = math.nan

    def __float__(self) -> float:
        return self.mean

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n}


@dataclass
class _Moments:
    n: int = 0
    s1: float = 0.0
    s2: float = 0.0
    lo: float = math.inf
    hi: float = -math.inf

    def add(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float).ravel()
        self.n += x.size
        self.s1 += float(np.sum(x))
        self.s2 += float(np.sum(x * x))
        if x.size:
            self.lo = min(self.lo, float(x.min()))
            self.hi = max(self.hi, float(x.max()))

    def estimate(self) -> Estimate:
        if self.n == 0:
            return Estimate(math.nan, math.nan, 0)
        mean = self.s1 / self.n
        if self.n > 1:
            var = max(self.s2 - self.n * mean * mean, 0.0) / (self.n - 1)
            se = math.sqrt(var / self.n)
        else:
            se = math.inf
        return Estimate(mean, se, self.n, self.lo, self.hi)


def run_batches(count: int, batch_size: int, workers: int,
                fn: Callable[[int, int], dict]) -> dict:
    """Apply ``fn(start, size)`` over ``[0, count)`` and merge moment sums in order.

    Outputs named ``raw_*`` are kept whole and returned concatenated in path
    order instead of being reduced to an :class:`Estimate`.
    """
    starts = list(range(0, count, batch_size))
    sizes = [min(batch_size, count - s) for s in starts]
    moments: dict[str, _Moments] = {}
    raw: dict[str, list] = {}

    def merge(result: dict) -> None:
        for name, vals in result.items():
            if name.startswith("raw_"):
                raw.setdefault(name, []).append(np.asarray(vals, dtype=float).ravel())
            else:
                moments.setdefault(name, _Moments()).add(vals)

    if workers == 1:
        for s, n in zip(starts, sizes):
            merge(fn(s, n))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(fn, starts, sizes):
                merge(result)
    out: dict = {k: m.estimate() for k, m in moments.items()}
    out.update({k: np.concatenate(v) for k, v in raw.items()})
    return out


def run_paths(mc: MCConfig, fn: Callable[[BrownianPath, RngStream], dict]) -> dict[str, Estimate]:
    """Sample ``mc.paths`` paths on ``mc.grid`` and average the per-path outputs of ``fn``.

    ``fn(batch, stream)`` receives a batch of paths and the stream of its first
    path, and returns named per-path arrays.
    """
    if mc.grid is None:
        raise InvalidArgument("this computation needs an explicit grid")

    def job(start: int, size: int) -> dict:
        stream = RngStream(mc.seed, start)
        return fn(sample_paths(mc.grid, stream, size), stream)

    return run_batches(int(mc.paths), mc.resolved_batch_size(), int(mc.workers), job)


def aux_normals(stream: RngStream, count: int, dim: int) -> np.ndarray:
    """Per-sample auxiliary standard normals, shape ``(count, dim)``."""
    return per_path_draws(stream.seed, stream.index, count, AUXILIARY, dim)


def run_samples(mc: MCConfig, dim: int,
                fn: Callable[[np.ndarray], dict]) -> dict[str, Estimate]:
    """Like :func:`run_paths` for plain i.i.d. standard normal vectors of size ``dim``."""
    bs = mc.batch_size or max(1, min(8192, BATCH_ELEMENTS // max(dim, 1)))

    def job(start: int, size: int) -> dict:
        return fn(aux_normals(RngStream(mc.seed, start), size, dim))

    return run_batches(int(mc.paths), int(bs), int(mc.workers), job)


@dataclass
class IdentityReport:
    """Two-sided check of an identity estimated by Monte Carlo and/or quadrature."""
    lhs: float
    rhs: float
    stderr_lhs: float
    stderr_rhs: float
    quad_budget: float = 0.0
    k_sigma: float = 3.0
    extra: dict = field(default_factory=dict)

    @property
    def discrepancy(self) -> float:
        return self.lhs - self.rhs

    @property
    def tolerance(self) -> float:
        return self.k_sigma * (self.stderr_lhs + self.stderr_rhs + self.quad_budget)

    @property
    def passed(self) -> bool:
        return bool(abs(self.discrepancy) <= self.tolerance)

    def to_dict(self) -> dict:
        d = {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "stderr_lhs": self.stderr_lhs,
            "stderr_rhs": self.stderr_rhs,
            "quad_budget": self.quad_budget,
            "discrepancy": self.discrepancy,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }
        d.update(self.extra)
        return d
