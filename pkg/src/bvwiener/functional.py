"""Smooth cylindrical functionals ``f = phi(Delta_J W)`` and their calculus.

Evaluators act on the last axis, so every operation here accepts a single
path or a batch of paths alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgument
from .grid_paths import BrownianPath, wiener_integral
from .montecarlo import IdentityReport, MCConfig, run_paths
from .steps import StepFunction


@dataclass(frozen=True, eq=False)
class CylindricalFunctional:
    """``f = phi(W_{t_1} - W_{t_0}, ..., W_{t_n} - W_{t_{n-1}})``.

    ``phi`` maps ``(..., n) -> (...)`` and ``grad_phi`` maps ``(..., n) -> (..., n)``.
    ``bound`` is the declared sup-norm bound of ``phi`` and ``grad_phi``; it is
    documentation only and never checked at runtime.
    """
    times: np.ndarray
    phi: Callable
    grad_phi: Callable
    bound: float = math.inf

    def __post_init__(self):
        t = np.array(self.times, dtype=float).ravel()
        if t.size < 2:
            raise InvalidArgument("need at least two times (one increment)")
        if t[0] < 0 or np.any(np.diff(t) <= 0):
            raise InvalidArgument("times must be nonnegative and strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @property
    def n(self) -> int:
        return self.times.size - 1

    @classmethod
    def constant(cls, c: float, T: float = 1.0) -> "CylindricalFunctional":
        def phi(x):
            return np.full(np.shape(x)[:-1], float(c))

        return cls([0.0, T], phi, np.zeros_like, abs(c))

    @classmethod
    def wiener(cls, k: StepFunction) -> "CylindricalFunctional":
        """``W(k)`` for a step function ``k`` (unbounded, but differentiable)."""
        lv = np.asarray(k.levels)

        def phi(x):
            return np.asarray(x) @ lv

        def grad(x):
            return np.broadcast_to(lv, np.shape(x)).copy()

        return cls(k.breakpoints, phi, grad)

    @classmethod
    def of_wiener(cls, k: StepFunction, psi: Callable, dpsi: Callable,
                  bound: float = math.inf) -> "CylindricalFunctional":
        """``psi(W(k))`` written as a function of the increments over ``k``'s breakpoints."""
        lv = np.asarray(k.levels)

        def phi(x):
            return psi(np.asarray(x) @ lv)

        def grad(x):
            return dpsi(np.asarray(x) @ lv)[..., None] * lv

        return cls(k.breakpoints, phi, grad, bound)

    @classmethod
    def of_increment(cls, t0: float, t1: float, psi: Callable, dpsi: Callable,
                     bound: float = math.inf) -> "CylindricalFunctional":
        """``psi(W_{t1} - W_{t0})``."""
        return cls.of_wiener(StepFunction([t0, t1], [1.0]), psi, dpsi, bound)


@dataclass(frozen=True, eq=False)
class Direction:
    """Cameron-Martin direction ``h``, stored through ``h' ``."""
    hprime: StepFunction

    def __post_init__(self):
        if self.hprime.batch_shape:
            raise InvalidArgument("a direction is a single step function")

    def h(self, t):
        return self.hprime.integral(t)

    @property
    def norm(self) -> float:
        return float(self.hprime.norm())


def increments_at(f: CylindricalFunctional, path: BrownianPath) -> np.ndarray:
    return np.diff(path.at(f.times), axis=-1)


def eval_cyl(f: CylindricalFunctional, path: BrownianPath):
    return f.phi(increments_at(f, path))


def malliavin_derivative(f: CylindricalFunctional, path: BrownianPath) -> StepFunction:
    """``sum_i d_i phi(Delta W) I_{]t_{i-1}, t_i]}``; batched paths give batched levels."""
    grad = np.asarray(f.grad_phi(increments_at(f, path)), dtype=float)
    return StepFunction(f.times, grad)


def directional_derivative(f: CylindricalFunctional, h: Direction, path: BrownianPath):
    """``<grad f, h'>_2``, exact from the two step functions."""
    return malliavin_derivative(f, path).inner(h.hprime)


def divergence(g: CylindricalFunctional, h: Direction, path: BrownianPath):
    """``d*_h g = d_h g - g W(h')``."""
    return directional_derivative(g, h, path) - eval_cyl(g, path) * wiener_integral(path, h.hprime)


def _check_mc(mc: MCConfig) -> None:
    if mc.paths < 100:
        raise InvalidArgument("identity checks need at least 100 paths")


def ibp_check(f: CylindricalFunctional, g: CylindricalFunctional, h: Direction,
              mc: MCConfig) -> IdentityReport:
    """Monte Carlo check of ``E[(d_h f) g] = -E[f d*_h g]``.

    Both sides use the same paths. The pass threshold is
    ``3 (stderr_lhs + stderr_rhs)``, computable from the reported fields; the
    standard error of the per-path difference is reported as ``stderr_diff``.
    """
    _check_mc(mc)
    mc = mc.with_grid_default(f.times, g.times, h.hprime.breakpoints)

    def per_batch(path, stream):
        lhs = directional_derivative(f, h, path) * eval_cyl(g, path)
        rhs = -eval_cyl(f, path) * divergence(g, h, path)
        return {"lhs": lhs, "rhs": rhs, "diff": lhs - rhs}

    est = run_paths(mc, per_batch)
    return IdentityReport(est["lhs"].mean, est["rhs"].mean, est["lhs"].stderr,
                          est["rhs"].stderr,
                          extra={"stderr_diff": est["diff"].stderr, "paths": int(mc.paths)})


def finite_difference(f: CylindricalFunctional, h: Direction, path: BrownianPath,
                      eps: float):
    """``(f(w + eps h) - f(w)) / eps``; the oracle for :func:`directional_derivative`."""
    return (eval_cyl(f, path.shifted(h.hprime, eps)) - eval_cyl(f, path)) / eps


def union_times(*objs: Sequence[float]) -> np.ndarray:
    return np.unique(np.concatenate([np.asarray(o, dtype=float).ravel() for o in objs]))
