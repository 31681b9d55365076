"""Time grids, exact Brownian sampling, Wiener integrals and path maxima.

Paths are sampled from exact Gaussian increments, so the only discretization
error anywhere in the package comes from the functionals evaluated on a path.
Randomness is counter based: path ``i`` of a run with master seed ``seed``
always draws from the Philox stream keyed by ``seed`` at counter block ``i``,
independent of batching and of the number of worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, log

import numpy as np

from .errors import InvalidArgument
from .steps import StepFunction, check_aligned

INCREMENTS = 0
BRIDGE = 1
AUXILIARY = 2


@dataclass(frozen=True, eq=False)
class TimeGrid:
    points: np.ndarray

    def __post_init__(self):
        p = np.array(self.points, dtype=float).ravel()
        if p.size < 2:
            raise InvalidArgument("a grid needs at least one step")
        if p[0] != 0.0:
            raise InvalidArgument("grids start at time 0")
        if np.any(np.diff(p) <= 0):
            raise InvalidArgument("grid points must be strictly increasing")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @property
    def T(self) -> float:
        return float(self.points[-1])

    @property
    def n_steps(self) -> int:
        return self.points.size - 1

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.points)

    def index_of(self, times) -> np.ndarray:
        return check_aligned(times, self.points, what="time")


def make_grid(T: float, n_steps: int, refinement: str = "uniform",
              ratio: float = 0.5) -> TimeGrid:
    """Build a grid on ``[0, T]``.

    ``refinement="geometric-terminal"`` splits the steps into blocks of equal
    size; the gap shrinks by ``ratio`` from one block to the next, so points
    cluster at ``T`` where the representation kernels blow up. The number of
    blocks is ``ceil(log(n) / log(1/ratio)) + 1`` (capped at ``n``), so with
    few steps every gap is ``ratio`` times the previous one, and with many
    steps the last gap is roughly ``1/n`` of the first.
    """
    if not T > 0:
        raise InvalidArgument(f"T must be positive, got {T!r}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise InvalidArgument(f"n_steps must be a positive integer, got {n_steps!r}")
    n_steps = int(n_steps)
    if refinement == "uniform":
        return TimeGrid(np.linspace(0.0, T, n_steps + 1))
    if refinement in ("geometric-terminal", "geo"):
        if not 0 < ratio < 1:
            raise InvalidArgument(f"ratio must lie in (0, 1), got {ratio!r}")
        blocks = n_steps if n_steps == 1 else min(
            n_steps, int(ceil(log(n_steps) / log(1.0 / ratio))) + 1)
        per_block = -(-n_steps // blocks)
        gaps = ratio ** (np.arange(n_steps) // per_block)
        gaps *= T / gaps.sum()
        pts = np.concatenate([[0.0], np.cumsum(gaps)])
        pts[-1] = T
        return TimeGrid(pts)
    raise InvalidArgument(f"unknown refinement {refinement!r}")


def grid_from_times(T: float, *time_sets, min_steps: int = 1) -> TimeGrid:
    """Coarsest grid on ``[0, T]`` containing every given time.

    ``min_steps`` adds uniform points; exact sampling means coarse grids lose
    nothing for functionals of finitely many increments.
    """
    pts = [np.linspace(0.0, T, min_steps + 1)]
    for ts in time_sets:
        pts.append(np.asarray(ts, dtype=float).ravel())
    p = np.unique(np.concatenate(pts))
    if p[-1] > T * (1 + 1e-12) or p[0] < 0:
        raise InvalidArgument("times must lie in [0, T]")
    p = p[p <= T]
    # merge near-duplicates so later alignment checks stay exact
    keep = np.concatenate([[True], np.diff(p) > 1e-12 * max(1.0, T)])
    p = p[keep]
    p[-1] = T
    return TimeGrid(p)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream for path ``index`` under ``seed``.

    For a batch of ``B`` paths, stream indices ``index .. index + B - 1`` are
    used, one per path.
    """
    seed: int
    index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgument("seed must be a 64-bit unsigned integer")
        if int(self.index) < 0:
            raise InvalidArgument("stream index must be nonnegative")

    def generator(self, purpose: int = INCREMENTS, offset: int = 0) -> np.random.Generator:
        bitgen = np.random.Philox(
            key=int(self.seed), counter=[0, 0, int(purpose), int(self.index) + offset])
        return np.random.Generator(bitgen)


@dataclass(frozen=True, eq=False)
class PathPrefix:
    """A path (or batch of paths) restricted to ``[0, s]``.

    This is the only view of a path that integrand callbacks receive.
    """
    times: np.ndarray
    values: np.ndarray
    T: float
    running_max: np.ndarray | None = None

    @property
    def s(self) -> float:
        return float(self.times[-1])

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=-1)


@dataclass(frozen=True, eq=False)
class BrownianPath:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape[-1] != self.grid.points.size:
            raise InvalidArgument("path length does not match the grid")
        if np.any(v[..., 0] != 0.0):
            raise InvalidArgument("Brownian paths start at the origin")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=-1)

    @property
    def batch_shape(self) -> tuple:
        return self.values.shape[:-1]

    def __len__(self) -> int:
        return self.values.shape[0] if self.values.ndim > 1 else 1

    def __getitem__(self, i) -> "BrownianPath":
        if self.values.ndim == 1:
            raise IndexError("single path is not indexable")
        return BrownianPath(self.grid, self.values[i])

    def at(self, times) -> np.ndarray:
        return self.values[..., self.grid.index_of(times)]

    def prefix(self, i: int, record: "MaxRecord | None" = None) -> PathPrefix:
        """Restriction to ``[0, s_i]``; arrays are read-only views."""
        if not 0 <= i <= self.grid.n_steps:
            raise InvalidArgument(f"prefix index {i} out of range")
        rm = None if record is None else record.running_max[..., : i + 1]
        return PathPrefix(self.grid.points[: i + 1], self.values[..., : i + 1],
                          self.grid.T, rm)

    def shifted(self, hprime: StepFunction, eps: float) -> "BrownianPath":
        """Cameron-Martin shift ``w + eps * h`` with ``h' = hprime``."""
        return BrownianPath(self.grid, self.values + eps * hprime.integral(self.grid.points))


def per_path_draws(seed: int, start: int, count: int, purpose: int, size: int,
                   draw: str = "standard_normal") -> np.ndarray:
    """Rows ``j`` of ``RngStream(seed, start + j).generator(purpose).<draw>(size)``.

    One bit generator is rewound to each path's counter block instead of
    building a generator per path; the streams are identical.
    """
    bitgen = np.random.Philox(key=int(seed))
    gen = np.random.Generator(bitgen)
    fn = getattr(gen, draw)
    state = bitgen.state
    out = np.empty((count, size))
    for j in range(count):
        state["state"]["counter"][:] = [0, 0, int(purpose), int(start) + j]
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        bitgen.state = state
        out[j] = fn(size)
    return out


def _normals(grid: TimeGrid, seed: int, start: int, count: int) -> np.ndarray:
    return per_path_draws(seed, start, count, INCREMENTS, grid.n_steps)


def sample_path(grid: TimeGrid, rng: RngStream) -> BrownianPath:
    z = _normals(grid, rng.seed, rng.index, 1)[0]
    return _from_normals(grid, z)


def sample_paths(grid: TimeGrid, rng: RngStream, count: int) -> BrownianPath:
    """Batch of ``count`` paths; path ``j`` equals ``sample_path(grid, RngStream(seed, index + j))``."""
    if count < 1:
        raise InvalidArgument("count must be positive")
    return _from_normals(grid, _normals(grid, rng.seed, rng.index, count))


def _from_normals(grid: TimeGrid, z: np.ndarray) -> BrownianPath:
    dw = z * np.sqrt(grid.gaps)
    w = np.zeros(z.shape[:-1] + (grid.n_steps + 1,))
    np.cumsum(dw, axis=-1, out=w[..., 1:])
    return BrownianPath(grid, w)


def wiener_integral(path: BrownianPath, k: StepFunction):
    """``sum_i k|_{]s_i,s_{i+1}]} (W(s_{i+1}) - W(s_i))``; exact for grid-aligned ``k``."""
    return np.sum(k.levels_on(path.grid.points) * path.increments, axis=-1)


def wiener_integral_prefixes(path: BrownianPath, k: StepFunction) -> np.ndarray:
    """``W(I_{]0,s_i]} k)`` at every grid point ``s_i``."""
    terms = k.levels_on(path.grid.points) * path.increments
    out = np.zeros(path.values.shape)
    np.cumsum(terms, axis=-1, out=out[..., 1:])
    return out


@dataclass(frozen=True, eq=False)
class MaxRecord:
    running_max: np.ndarray
    interval_max: np.ndarray
    overall_max: np.ndarray
    argmax_time: np.ndarray
    bridge_corrected: bool


def _bridge_uniforms(rng: RngStream, shape: tuple, n: int) -> np.ndarray:
    count = int(np.prod(shape)) if shape else 1
    # 1 - U lies in (0, 1], keeping the log finite
    u = 1.0 - per_path_draws(rng.seed, rng.index, count, BRIDGE, n, "random")
    return u.reshape(shape + (n,))


def running_max(path: BrownianPath, bridge: bool = False,
                rng: RngStream | None = None) -> MaxRecord:
    """Running maxima ``M_{[0, s_i]}`` of a path.

    With ``bridge`` on, the maximum over each step is drawn from the exact
    Brownian-bridge law given the endpoints, by inverting
    ``P(max <= m) = 1 - exp(-2 (m - a)(m - b) / gap)``. The uniforms come from
    the BRIDGE stream of each path, so repeated calls with the same stream
    (e.g. from :func:`hitting_time`) see the same maxima.
    """
    a = path.values[..., :-1]
    b = path.values[..., 1:]
    gap = path.grid.gaps
    if bridge:
        if rng is None:
            raise InvalidArgument("bridge sampling needs an RngStream")
        u = _bridge_uniforms(rng, path.batch_shape, path.grid.n_steps)
        imax = 0.5 * (a + b + np.sqrt((b - a) ** 2 - 2.0 * gap * np.log(u)))
        imax = np.maximum(imax, np.maximum(a, b))
    else:
        imax = np.maximum(a, b)
    rm = np.zeros(path.values.shape)
    np.maximum.accumulate(imax, axis=-1, out=rm[..., 1:])
    np.maximum(rm, 0.0, out=rm)
    overall = rm[..., -1]
    # argmax at grid resolution: midpoint of the maximizing step under the bridge
    j = np.argmax(imax, axis=-1)
    pts = path.grid.points
    if bridge:
        loc = 0.5 * (pts[j] + pts[j + 1])
    else:
        loc = np.where(np.take_along_axis(a, j[..., None], -1)[..., 0]
                       >= np.take_along_axis(b, j[..., None], -1)[..., 0],
                       pts[j], pts[j + 1])
    argmax = np.where(overall > 0, loc, 0.0)
    return MaxRecord(rm, imax, overall, argmax, bool(bridge))


def hitting_time(path: BrownianPath, y: float, bridge: bool = False,
                 rng: RngStream | None = None, record: MaxRecord | None = None):
    """First time the path reaches level ``y > 0``; ``None``/NaN if never.

    With ``bridge`` on, a step is crossed exactly when its bridge maximum (the
    same draw :func:`running_max` uses) reaches ``y``; this happens with
    probability ``exp(-2 (y - a)(y - b) / gap)``. The crossing time inside the
    step is placed heuristically, by linear interpolation from the left
    endpoint to the sampled maximum located at the step midpoint.
    A bridge-corrected ``record`` from :func:`running_max` on the same stream
    may be passed to avoid recomputing it.
    """
    if not y > 0:
        raise InvalidArgument(f"level must be positive, got {y!r}")
    pts = path.grid.points
    if bridge:
        rec = record if record is not None and record.bridge_corrected else \
            running_max(path, bridge=True, rng=rng)
        crossed = rec.interval_max >= y
        j = np.argmax(crossed, axis=-1)
        hit = np.any(crossed, axis=-1)
        a = np.take_along_axis(path.values[..., :-1], j[..., None], -1)[..., 0]
        m = np.take_along_axis(rec.interval_max, j[..., None], -1)[..., 0]
        half = 0.5 * (pts[j + 1] - pts[j])
        frac = np.clip((y - a) / np.where(m > a, m - a, 1.0), 0.0, 1.0)
        tau = np.where(a >= y, pts[j], pts[j] + frac * half)
    else:
        above = path.values >= y
        j = np.argmax(above, axis=-1)
        hit = np.any(above, axis=-1)
        tau = pts[j]
    out = np.where(hit, tau, np.nan)
    if out.ndim == 0:
        return None if np.isnan(out) else float(out)
    return out

