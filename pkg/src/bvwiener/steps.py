"""Piecewise-constant functions on a time interval.

A :class:`StepFunction` takes the value ``levels[..., j]`` on the half-open
interval ``]breakpoints[j], breakpoints[j + 1]]`` and vanishes elsewhere.
Leading axes of ``levels`` index a batch (one step function per path), which
is how Malliavin gradients of a batch of paths are stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, InvalidArgument

ALIGN_RTOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StepFunction:
    breakpoints: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float).ravel()
        lv = np.array(self.levels, dtype=float)
        if lv.ndim == 0:
            lv = lv.reshape(1)
        if b.size < 2:
            raise InvalidArgument("a step function needs at least two breakpoints")
        if np.any(np.diff(b) <= 0):
            raise InvalidArgument("breakpoints must be strictly increasing")
        if b[0] < 0:
            raise InvalidArgument("breakpoints must be nonnegative times")
        if lv.shape[-1] != b.size - 1:
            raise InvalidArgument(
                f"expected {b.size - 1} levels, got {lv.shape[-1]}")
        if not np.all(np.isfinite(lv)):
            raise InvalidArgument("levels must be finite")
        object.__setattr__(self, "breakpoints", _readonly(b))
        object.__setattr__(self, "levels", _readonly(lv))

    # -- constructors -------------------------------------------------------

    @classmethod
    def indicator(cls, a: float, b: float, value: float = 1.0) -> "StepFunction":
        """``value * I_{]a,b]}``."""
        return cls([a, b], [value])

    @classmethod
    def zero(cls, T: float = 1.0) -> "StepFunction":
        return cls([0.0, T], [0.0])

    # -- basic queries ------------------------------------------------------

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def batch_shape(self) -> tuple:
        return self.levels.shape[:-1]

    @property
    def end(self) -> float:
        return float(self.breakpoints[-1])

    def __call__(self, s):
        """Value at ``s`` under the right-closed convention ``]b_j, b_{j+1}]``."""
        s = np.asarray(s, dtype=float)
        j = np.searchsorted(self.breakpoints, s, side="left") - 1
        return self._pick(j)

    def right_value(self, s):
        """Value on ``]s, s + eps]``; used for left-point (predictable) evaluation."""
        s = np.asarray(s, dtype=float)
        j = np.searchsorted(self.breakpoints, s, side="right") - 1
        return self._pick(j)

    def _pick(self, j):
        m = self.levels.shape[-1]
        inside = (j >= 0) & (j < m)
        jj = np.clip(j, 0, m - 1)
        return np.where(inside, self.levels[..., jj], 0.0)

    def norm(self):
        """L2 norm, exact: ``sqrt(sum level_j**2 * gap_j)``."""
        return np.sqrt(np.sum(self.levels**2 * self.gaps, axis=-1))

    def inner(self, other: "StepFunction"):
        """L2 inner product, exact on the merged breakpoints."""
        lo = max(self.breakpoints[0], other.breakpoints[0])
        hi = min(self.end, other.end)
        if hi <= lo:
            return np.zeros(np.broadcast_shapes(self.batch_shape, other.batch_shape))
        pts = np.union1d(self.breakpoints, other.breakpoints)
        pts = pts[(pts >= lo) & (pts <= hi)]
        mid = 0.5 * (pts[1:] + pts[:-1])
        return np.sum(self(mid) * other(mid) * np.diff(pts), axis=-1)

    def scaled(self, c: float) -> "StepFunction":
        return StepFunction(self.breakpoints, c * self.levels)

    def restricted(self, a: float, b: float) -> "StepFunction":
        """``I_{]a,b]} * self``."""
        if not b > a:
            raise InvalidArgument("restriction interval must satisfy a < b")
        pts = np.union1d(self.breakpoints, [a, b])
        pts = pts[(pts >= max(a, self.breakpoints[0])) & (pts <= min(b, self.end))]
        if pts.size < 2:
            return StepFunction([a, b], np.zeros(self.batch_shape + (1,)))
        mid = 0.5 * (pts[1:] + pts[:-1])
        return StepFunction(pts, self(mid))

    def integral(self, t):
        """``int_0^t self(r) dr``; for ``h' = self`` this is the path ``h(t)``."""
        t = np.asarray(t, dtype=float)
        left = np.concatenate(
            [np.zeros(self.batch_shape + (1,)),
             np.cumsum(self.levels * self.gaps, axis=-1)], axis=-1)
        j = np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1,
                    0, self.levels.shape[-1] - 1)
        partial = np.clip(t - self.breakpoints[j], 0.0, self.gaps[j]) * self.levels[..., j]
        out = left[..., j] + partial
        return np.where(t <= self.breakpoints[0], 0.0,
                        np.where(t >= self.end, left[..., -1], out))

    def tail_norm(self, s):
        """``|I_{]s,inf[} self|_2``, exact and continuous in ``s``."""
        if self.batch_shape:
            raise InvalidArgument("tail_norm is defined for unbatched step functions")
        s = np.asarray(s, dtype=float)
        sq = self.levels**2
        # mass strictly after breakpoint j
        after = np.concatenate([np.cumsum((sq * self.gaps)[::-1])[::-1], [0.0]])
        j = np.searchsorted(self.breakpoints, s, side="right") - 1
        jj = np.clip(j, 0, sq.size - 1)
        part = (self.breakpoints[jj + 1] - s) * sq[jj] + after[jj + 1]
        out = np.where(j < 0, after[0], np.where(j >= sq.size, 0.0, part))
        return np.sqrt(np.maximum(out, 0.0))

    # -- grid alignment -----------------------------------------------------

    def levels_on(self, points: np.ndarray) -> np.ndarray:
        """Levels on each grid interval ``]p_i, p_{i+1}]``.

        Raises AlignmentError when a breakpoint inside the grid range is not
        a grid point, or when the support reaches past the grid.
        """
        points = np.asarray(points, dtype=float)
        check_aligned(self.breakpoints, points, what="step-function breakpoint")
        mid = 0.5 * (points[1:] + points[:-1])
        return self(mid)

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "levels": self.levels.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StepFunction":
        try:
            return cls(d["breakpoints"], d["levels"])
        except KeyError as exc:
            raise InvalidArgument(f"step function spec lacks {exc}") from None


def check_aligned(times, points, what: str = "time") -> np.ndarray:
    """Indices of ``times`` within the sorted grid ``points``.

    Every time must match a grid point to relative tolerance ``ALIGN_RTOL``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    points = np.asarray(points, dtype=float)
    scale = max(1.0, abs(points[-1]))
    idx = np.clip(np.searchsorted(points, times), 0, points.size - 1)
    lower = np.clip(idx - 1, 0, points.size - 1)
    use_lower = np.abs(points[lower] - times) < np.abs(points[idx] - times)
    idx = np.where(use_lower, lower, idx)
    bad = np.abs(points[idx] - times) > ALIGN_RTOL * scale
    if np.any(bad):
        t = times[np.argmax(bad)]
        raise AlignmentError(f"{what} {t!r} is not a grid point; refine the grid")
    return idx
