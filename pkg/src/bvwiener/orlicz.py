"""The Young function ``A(x) = int_0^|x| sqrt(log(1 + s)) ds`` and empirical
Luxembourg norms in ``L log^{1/2} L``.

Substituting ``v = log(1 + s)`` and integrating by parts gives the closed form

    A(x) = (1 + |x|) (sqrt(u) - D(sqrt(u))),   u = log(1 + |x|),

with ``D`` the Dawson function. It is free of overflow; for small ``u`` the
difference cancels and a power series is used instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.special import dawsn

from .errors import InvalidArgument
from .grid_paths import grid_from_times
from .montecarlo import MCConfig, run_paths, run_samples

SERIES_CUTOFF = 0.5
SERIES_TERMS = 30
NORM_RTOL = 1e-12
GH_ORDER = 128


def _series(u: np.ndarray) -> np.ndarray:
    # int_0^u sqrt(v) e^v dv = sum_k u^(k + 3/2) / (k! (k + 3/2))
    out = np.zeros_like(u)
    term = u * np.sqrt(u)
    for k in range(SERIES_TERMS):
        out += term / (k + 1.5)
        term = term * u / (k + 1)
    return out


def young_function(x):
    """``A_{1/2}(x)``; even, convex, ``A(x) / x -> inf``."""
    x = np.abs(np.asarray(x, dtype=float))
    u = np.log1p(x)
    small = u < SERIES_CUTOFF
    r = np.sqrt(u)
    big = (1.0 + x) * (r - dawsn(r))
    out = np.where(small, _series(np.where(small, u, 0.0)), big)
    return out if out.ndim else float(out)


def young_derivative(x):
    """``A'(x) = sign(x) sqrt(log(1 + |x|))``."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.sqrt(np.log1p(np.abs(x)))


def young_inverse(y: float) -> float:
    """The ``x >= 0`` with ``A(x) = y``."""
    if y < 0:
        raise InvalidArgument("A takes nonnegative values only")
    if y == 0:
        return 0.0
    hi = 1.0
    while young_function(hi) < y:
        hi *= 2.0
    return float(optimize.brentq(lambda v: young_function(v) - y, 0.0, hi,
                                 xtol=1e-300, rtol=NORM_RTOL))


@dataclass(frozen=True, eq=False)
class Sample:
    """Draws of a random variable with optional probability weights."""
    values: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size == 0:
            raise InvalidArgument("a sample must be nonempty")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("sample values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.weights is not None:
            w = np.array(self.weights, dtype=float).ravel()
            if w.shape != v.shape or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise InvalidArgument("weights must be nonnegative, one per value, summing to 1")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    @property
    def effective_size(self) -> float:
        if self.weights is None:
            return float(self.values.size)
        return 1.0 / float(np.sum(self.weights**2))

    def mean(self, a: np.ndarray) -> float:
        if self.weights is None:
            return float(np.mean(a))
        return float(np.sum(self.weights * a))


def _as_sample(X) -> Sample:
    return X if isinstance(X, Sample) else Sample(X)


def young_mean(X, k: float) -> float:
    """``E[A(X / k)]`` under the sample law."""
    X = _as_sample(X)
    return X.mean(young_function(X.values / k))


def luxembourg_norm(X, rtol: float = NORM_RTOL) -> float:
    """``inf {k > 0 : E[A(X / k)] <= 1}``; bracketing by doubling, then Brent's method."""
    X = _as_sample(X)
    top = float(np.max(np.abs(X.values)))
    if top == 0.0:
        return 0.0
    # E[A(X / top)] <= A(1) < 1, so top is an upper bracket
    hi, lo = top, 0.5 * top
    while young_mean(X, lo) <= 1.0:
        hi, lo = lo, 0.5 * lo
    return float(optimize.brentq(lambda k: young_mean(X, k) - 1.0, lo, hi,
                                 xtol=1e-300, rtol=rtol))


def luxembourg_stderr(X, norm: float | None = None) -> float:
    """Delta-method standard error of :func:`luxembourg_norm`.

    ``k`` solves ``F(k) = 1`` with ``F(k) = E[A(X/k)]``, so
    ``se(k) = se(F(k)) / |F'(k)|``.
    """
    X = _as_sample(X)
    k = luxembourg_norm(X) if norm is None else norm
    if k == 0.0:
        return 0.0
    a = young_function(X.values / k)
    var = X.mean((a - X.mean(a)) ** 2)
    slope = X.mean(young_derivative(X.values / k) * X.values) / k**2
    return float(math.sqrt(var / X.effective_size) / slope) if slope > 0 else math.inf


def gaussian_pairing_factor() -> float:
    """``E[|Z/2| exp(Z^2 / 4)]`` for standard normal ``Z``, by quadrature."""
    val, _ = integrate.quad(lambda z: z * math.exp(-z * z / 4.0), 0.0, math.inf,
                            epsabs=1e-14, epsrel=1e-13)
    return 2.0 * 0.5 * val / math.sqrt(2.0 * math.pi)


def pairing_constant(sigma_y: float) -> float:
    """``C(Y) = 2 sigma_Y (1 + E[|Z/2| exp(Z^2/4)])`` for centered Gaussian ``Y``.

    Follows from ``|xy| <= A(x) + |y| exp(y^2)`` applied to ``X / ||X||`` and
    ``Y / (2 sigma_Y)``. One valid constant, not the optimal one.
    """
    if not sigma_y > 0:
        raise InvalidArgument("sigma_Y must be positive")
    return 2.0 * sigma_y * (1.0 + gaussian_pairing_factor())


@dataclass
class PairingReport:
    e_abs_xy: float
    stderr_xy: float
    norm_x: float
    stderr_norm: float
    constant: float
    k_sigma: float = 3.0

    @property
    def bound(self) -> float:
        return self.constant * self.norm_x

    @property
    def passed(self) -> bool:
        slack = self.k_sigma * (self.stderr_xy + self.constant * self.stderr_norm)
        return bool(self.e_abs_xy <= self.bound + slack)

    def to_dict(self) -> dict:
        return {"e_abs_xy": self.e_abs_xy, "stderr_xy": self.stderr_xy, "norm_x": self.norm_x,
                "stderr_norm": self.stderr_norm, "constant": self.constant,
                "bound": self.bound, "pass": self.passed}


def pairing_inequality_check(x_of: Callable[[np.ndarray, np.ndarray], np.ndarray],
                             sigma_y: float, mc: MCConfig) -> PairingReport:
    """Empirical ``E|XY| <= C(Y) ||X||`` with ``Y = sigma_Y Z``.

    ``x_of(z, z2)`` builds ``X`` from ``Z`` (the normal behind ``Y``) and an
    independent normal ``z2``, so ``X`` may depend on ``Y`` or not.
    """
    const = pairing_constant(sigma_y)

    def fn(z):
        y = sigma_y * z[:, 0]
        x = np.broadcast_to(np.asarray(x_of(z[:, 0], z[:, 1]), dtype=float), y.shape)
        return {"raw_x": x, "abs_xy": np.abs(x * y)}

    est = run_samples(mc, 2, fn)
    X = Sample(est["raw_x"])
    nrm = luxembourg_norm(X)
    return PairingReport(est["abs_xy"].mean, est["abs_xy"].stderr, nrm,
                         luxembourg_stderr(X, nrm), const)


@dataclass
class MartingaleReport:
    levels: list[int]
    norms: list[float]
    stderrs: list[float]

    @property
    def monotone(self) -> bool:
        return all(b <= a + math.hypot(sa, sb) for a, b, sa, sb in
                   zip(self.norms, self.norms[1:], self.stderrs, self.stderrs[1:]))

    @property
    def ratio(self) -> float:
        if self.norms[0] == 0.0:
            return 0.0
        return self.norms[-1] / self.norms[0]

    @property
    def passed(self) -> bool:
        return self.monotone and (len(self.levels) < 8 or self.ratio <= 0.1)

    def rows(self) -> list[dict]:
        return [{"level": lv, "norm": n, "stderr": s}
                for lv, n, s in zip(self.levels, self.norms, self.stderrs)]

    def to_dict(self) -> dict:
        return {"rows": self.rows(), "monotone": self.monotone, "ratio": self.ratio,
                "pass": self.passed}


def bridge_expectation(phi: Callable, mean, sd, order: int = GH_ORDER) -> np.ndarray:
    """``E[phi(mean + sd Z)]`` by Gauss-Hermite quadrature, vectorized over ``mean``."""
    z, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / math.sqrt(2.0 * math.pi)
    mean = np.asarray(mean, dtype=float)
    return np.asarray(phi(mean[..., None] + sd * z), dtype=float) @ w


def martingale_orlicz_convergence(t: float, phi: Callable, levels: int, mc: MCConfig,
                                  T: float = 1.0) -> MartingaleReport:
    """Norms of ``M_n - f`` for ``f = phi(W_t)`` and ``M_n = E[f | W on the level-n dyadic grid]``.

    Given its dyadic neighbours ``a < t < b``, ``W_t`` is Gaussian with mean
    the linear interpolation and variance ``(t - a)(b - t) / (b - a)``, so
    ``M_n`` is a one-dimensional Gaussian integral.
    """
    if not 0 < t < T:
        raise InvalidArgument("t must lie strictly inside (0, T)")
    levels = int(levels)
    if levels < 1:
        raise InvalidArgument("levels must be at least 1")
    dyadic = np.linspace(0.0, T, 2**levels + 1)
    grid = grid_from_times(T, dyadic, [t])
    mc = MCConfig(mc.paths, grid, mc.seed, mc.workers, mc.bridge, mc.batch_size)
    it = int(grid.index_of([t])[0])
    plan = []
    for n in range(1, levels + 1):
        d = T / 2**n
        j = math.floor(t / d)
        a, b = j * d, (j + 1) * d
        if abs(t - a) <= 1e-12 * T or abs(b - t) <= 1e-12 * T:
            plan.append(None)
        else:
            ia, ib = grid.index_of([a, b])
            plan.append((int(ia), int(ib), (t - a) / d, math.sqrt((t - a) * (b - t) / d)))

    def per_batch(path, stream):
        v = path.values
        f = np.asarray(phi(v[..., it]), dtype=float)
        out = {}
        for n, p in enumerate(plan, start=1):
            if p is None:
                out[f"raw_{n}"] = np.zeros_like(f)
                continue
            ia, ib, lam, sd = p
            m = bridge_expectation(phi, v[..., ia] + lam * (v[..., ib] - v[..., ia]), sd)
            out[f"raw_{n}"] = m - f
        return out

    est = run_paths(mc, per_batch)
    norms, ses = [], []
    for n in range(1, levels + 1):
        X = Sample(est[f"raw_{n}"])
        k = luxembourg_norm(X)
        norms.append(k)
        ses.append(luxembourg_stderr(X, k))
    return MartingaleReport(list(range(1, levels + 1)), norms, ses)


def clamp(x, lo: float = -1.0, hi: float = 1.0):
    return np.clip(x, lo, hi)


def slow_growth_holds(X, k1: float, k2: float) -> bool:
    """``E[A(X/k1)] <= (k2/k1)^{3/2} E[A(X/k2)]`` for ``0 < k1 < k2``."""
    if not 0 < k1 < k2:
        raise InvalidArgument("need 0 < k1 < k2")
    lhs = young_mean(X, k1)
    rhs = (k2 / k1) ** 1.5 * young_mean(X, k2)
    return bool(lhs <= rhs * (1 + 1e-12))


def constant_sample_norm(c: float) -> float:
    """``|c| / A^{-1}(1)``: the norm of a constant."""
    return abs(c) / young_inverse(1.0)

