"""Closed-form Gaussian kernels used by the explicit representations."""

from __future__ import annotations

from dataclasses import dataclass
from math import pi, sqrt

import numpy as np
from scipy import integrate

from .errors import InvalidArgument
from .steps import StepFunction

SQRT_2PI = sqrt(2.0 * pi)
# exponents below this are flushed to exactly 0
UNDERFLOW_EXPONENT = -700.0


def _gauss(expo):
    expo = np.asarray(expo, dtype=float)
    return np.where(expo < UNDERFLOW_EXPONENT, 0.0,
                    np.exp(np.maximum(expo, UNDERFLOW_EXPONENT)))


def std_normal_density(x):
    """``exp(-x**2 / 2) / sqrt(2 pi)``."""
    x = np.asarray(x, dtype=float)
    return _gauss(-0.5 * x * x) / SQRT_2PI


@dataclass(frozen=True, eq=False)
class NormalizedDirection:
    """A unit-norm ``k`` in L2(0, T) with exact tail norms ``|I_{]s,T]} k|_2``."""
    k: StepFunction

    def __post_init__(self):
        if self.k.batch_shape:
            raise InvalidArgument("direction must be a single step function")
        nrm = float(self.k.norm())
        if abs(nrm - 1.0) > 1e-12:
            raise InvalidArgument(f"direction must have unit L2 norm, got {nrm!r}")

    @classmethod
    def normalize(cls, k: StepFunction) -> "NormalizedDirection":
        nrm = float(k.norm())
        if nrm == 0.0:
            raise InvalidArgument("cannot normalize the zero function")
        return cls(k.scaled(1.0 / nrm))

    @classmethod
    def indicator(cls, t: float) -> "NormalizedDirection":
        """``I_{]0,t]} / sqrt(t)``: then ``W(k) = W_t / sqrt(t)``."""
        return cls(StepFunction([0.0, t], [1.0 / sqrt(t)]))

    @property
    def tail_norms(self) -> np.ndarray:
        """Tail norms at each breakpoint; nonincreasing, 0 at the end."""
        return self.k.tail_norm(self.k.breakpoints)

    def tail_norm(self, s):
        return self.k.tail_norm(s)

    def value(self, s):
        """``k`` on ``]s, s+]``, zeroed where the tail norm vanishes."""
        v = self.k.right_value(s)
        return np.where(self.k.tail_norm(s) > 0, v, 0.0)


def cyl_kernel(direction: NormalizedDirection, x, s):
    """``K(x, s) = k(s) exp(-x^2 / 2 tau^2) / (sqrt(2 pi) tau)``, ``tau = |I_{]s,T]} k|_2``.

    ``K = 0`` whenever ``k(s) = 0``, which includes every ``s`` with ``tau = 0``.
    ``x`` and ``s`` broadcast against each other.
    """
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    ks = direction.value(s)
    tau = direction.tail_norm(s)
    safe = np.where(ks != 0, tau, 1.0)
    out = ks * _gauss(-0.5 * x * x / (safe * safe)) / (SQRT_2PI * safe)
    return np.where(ks != 0, out, 0.0)


def max_density(x, tau):
    """Density of ``sup_{[0,tau]} W``: ``2 exp(-x^2 / 2 tau) / sqrt(2 pi tau)`` for ``x > 0``."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise InvalidArgument("max_density needs a positive time span")
    x = np.asarray(x, dtype=float)
    dens = 2.0 * _gauss(-0.5 * x * x / tau) / np.sqrt(2.0 * pi * tau)
    return np.where(x > 0, dens, 0.0)


def xi_wiener(direction: NormalizedDirection, x):
    """``rho(x) E[|grad g|_2 | g = x]`` for ``g = W(k)``.

    The gradient of ``W(k)`` is the deterministic ``k``, of unit norm, so this
    is just the standard normal density.
    """
    return std_normal_density(x)


def xi_running_max(x: float, T: float) -> float:
    """``m_T(x) E[|grad M|_2 | M = x]`` for the maximum ``M`` of ``W`` on ``[0, T]``.

    ``grad M = I_{[0, sigma[}`` so ``|grad M|_2 = sqrt(sigma)``. Integrates
    ``sqrt(t)`` against the joint density of (maximum, argmax)
    ``x exp(-x^2 / 2t) / (pi t^{3/2} sqrt(T - t))``.
    """
    if not T > 0:
        raise InvalidArgument("T must be positive")
    if x <= 0:
        return 0.0

    def f(t):
        return np.exp(-x * x / (2.0 * t)) / t if t > 0 else 0.0

    # weight (T - t)^(-1/2) handled exactly by QUADPACK's algebraic weight
    val, _ = integrate.quad(f, 0.0, T, weight="alg", wvar=(0.0, -0.5),
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(x / pi * val)
