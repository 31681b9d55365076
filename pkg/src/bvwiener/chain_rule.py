"""Two-sided checks of the BV chain rule for ``g = W(k)``.

For a test functional ``u`` and direction ``h`` the identity reads

    -E[phi(g) d*_h u] = <k, h'>_2 int rho(x) E[u | g = x] Dphi(dx).

The left side is a plain Monte Carlo average over paths. The right side
conditions the increments of ``u`` on ``g = x`` exactly: ``(Delta, g)`` is
jointly Gaussian, so ``Delta | g = x`` has mean ``c x`` and covariance
``diag(gaps) - c c^T`` with ``c_i = <I_{]t_{i-1}, t_i]}, k>_2``. The same
auxiliary normals are reused for every ``x``, which keeps the right side
continuous in ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bv_measure import GL_ORDER, BVScalarFunction, SignedMeasure1D, integrate_kernel
from .clark_ocone import Cylindrical
from .errors import ConditioningError, InvalidArgument
from .functional import CylindricalFunctional, Direction, divergence
from .grid_paths import wiener_integral
from .kernels import NormalizedDirection, std_normal_density
from .montecarlo import Estimate, IdentityReport, MCConfig, run_paths, run_samples
from .steps import StepFunction

# relative size of a negative eigenvalue tolerated as rounding
EIG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GaussianConditioner:
    """Exact law of the increments of ``u`` given ``W(k) = x``."""
    times: np.ndarray
    c: np.ndarray
    factor: np.ndarray

    @classmethod
    def build(cls, direction: NormalizedDirection, times) -> "GaussianConditioner":
        t = np.asarray(times, dtype=float)
        n = t.size - 1
        c = np.asarray(StepFunction(t, np.eye(n)).inner(direction.k), dtype=float)
        cov = np.diag(np.diff(t)) - np.outer(c, c)
        vals, vecs = np.linalg.eigh(cov)
        scale = max(1.0, float(np.max(np.abs(vals))))
        if np.min(vals) < -EIG_TOL * scale:
            raise ConditioningError(
                f"conditional covariance is not positive semidefinite (eigenvalue {vals.min():.3e})")
        factor = vecs * np.sqrt(np.clip(vals, 0.0, None))
        for a in (t, c, factor):
            a.setflags(write=False)
        return cls(t, c, factor)

    @property
    def dim(self) -> int:
        return self.c.size

    def sample(self, x, z: np.ndarray) -> np.ndarray:
        """Increments given ``g = x``; ``z`` holds standard normals ``(..., dim)``.

        ``x`` broadcasts against the leading axes of the result, i.e. a scalar
        or an array whose trailing axis matches the sample axis of ``z``.
        """
        x = np.asarray(x, dtype=float)
        return x[..., None] * self.c + z @ self.factor.T


def _inner_kh(direction: NormalizedDirection, h: Direction) -> float:
    return float(direction.k.inner(h.hprime))


def _lhs_grid(mc: MCConfig, direction, u: CylindricalFunctional, h: Direction) -> MCConfig:
    return mc.with_grid_default(direction.k.breakpoints, u.times, h.hprime.breakpoints)


def _check_mc(mc: MCConfig) -> None:
    if mc.paths < 2:
        raise InvalidArgument("Monte Carlo checks need at least two samples")


def lhs_phi(direction: NormalizedDirection, phi, u: CylindricalFunctional,
            h: Direction, mc: MCConfig) -> Estimate:
    """``-E[phi(g) d*_h u]`` over sampled paths; ``phi`` is any vectorized callable."""
    _check_mc(mc)
    mc = _lhs_grid(mc, direction, u, h)

    def per_batch(path, stream):
        g = wiener_integral(path, direction.k)
        return {"lhs": -np.asarray(phi(g), dtype=float) * divergence(u, h, path)}

    return run_paths(mc, per_batch)["lhs"]


def lhs_levelset(direction: NormalizedDirection, u: CylindricalFunctional, h: Direction,
                 x: float, mc: MCConfig) -> Estimate:
    """``-E[I_{g > x} d*_h u]``."""
    return lhs_phi(direction, lambda g: (g > x).astype(float), u, h, mc)


def _conditional_side(direction, mu, u, h, mc, weight=None, orders=(GL_ORDER,)):
    """Per-sample ``w int rho(x) u(Delta(x)) Dphi(dx)`` for each quadrature order."""
    w = _inner_kh(direction, h) if weight is None else float(weight)
    cond = GaussianConditioner.build(direction, u.times)

    def fn(z):
        def K(x):
            x = np.asarray(x, dtype=float)
            return std_normal_density(x) * u.phi(cond.sample(x, z))

        return {f"o{o}": w * np.asarray(integrate_kernel(mu, K, order=o)) *
                np.ones(z.shape[0]) for o in orders}

    return run_samples(mc, cond.dim, fn)


def rhs_levelset(direction: NormalizedDirection, u: CylindricalFunctional, h: Direction,
                 x: float, mc: MCConfig) -> Estimate:
    """``rho(x) <k, h'>_2 E[u | g = x]`` by exact conditional sampling."""
    _check_mc(mc)
    w = _inner_kh(direction, h)
    if w == 0.0:
        return Estimate(0.0, 0.0, int(mc.paths))
    return _conditional_side(direction, SignedMeasure1D([(float(x), 1.0)]), u, h,
                             mc)[f"o{GL_ORDER}"]


def levelset_check(direction: NormalizedDirection, u: CylindricalFunctional, h: Direction,
                   x: float, mc: MCConfig) -> IdentityReport:
    lhs = lhs_levelset(direction, u, h, x, mc)
    rhs = rhs_levelset(direction, u, h, x, mc)
    return IdentityReport(lhs.mean, rhs.mean, lhs.stderr, rhs.stderr,
                          extra={"x": float(x), "paths": int(mc.paths)})


def chain_rule_check_phi(direction: NormalizedDirection, phi: BVScalarFunction,
                         u: CylindricalFunctional, h: Direction,
                         mc: MCConfig) -> IdentityReport:
    """``-E[phi(g) d*_h u]`` against ``<k,h'> int rho E[u | g = x] Dphi(dx)``.

    The quadrature budget is the gap between 16- and 8-point Gauss-Legendre
    on the density part. The report also carries the variation bound
    ``int rho d|Dphi| <= C_M |Dphi|(R)`` with ``C_M = sup rho = rho(0)``.
    """
    lhs = lhs_phi(direction, phi, u, h, mc)
    mu = phi.derivative
    w = _inner_kh(direction, h)
    if w == 0.0 or mu.is_zero:
        rhs, quad = Estimate(0.0, 0.0, int(mc.paths)), 0.0
    else:
        est = _conditional_side(direction, mu, u, h, mc, orders=(GL_ORDER, GL_ORDER // 2))
        rhs = est[f"o{GL_ORDER}"]
        quad = abs(rhs.mean - est[f"o{GL_ORDER // 2}"].mean)
    tv_xi = float(integrate_kernel(mu.abs(), std_normal_density))
    c_m = float(std_normal_density(0.0))
    return IdentityReport(lhs.mean, rhs.mean, lhs.stderr, rhs.stderr, quad_budget=quad,
                          extra={"variation": tv_xi, "variation_bound": c_m * mu.total_variation(),
                                 "paths": int(mc.paths)})


@dataclass
class DisintegratedReport:
    r_probes: list[float]
    windows: list[float]
    direct: list[Estimate]
    windowed: list[list[IdentityReport]]

    @property
    def passed(self) -> bool:
        return all(rep.passed for row in self.windowed for rep in row)

    def to_dict(self) -> dict:
        return {
            "r_probes": self.r_probes,
            "windows": self.windows,
            "direct": [e.to_dict() for e in self.direct],
            "windowed": [[rep.to_dict() for rep in row] for row in self.windowed],
            "pass": self.passed,
        }


def disintegrated_check(direction: NormalizedDirection, phi: BVScalarFunction,
                        u: CylindricalFunctional, s: float, r_probes: Sequence[float],
                        mc: MCConfig, windows: Sequence[float] = (0.1, 0.05)) -> DisintegratedReport:
    """Pointwise-in-``r`` pairing ``int U(x, r) Dphi(dx)`` against window averages.

    ``U(x, r) = rho(x) k(r) E[u | g = x]``. For each window ``delta`` the Monte
    Carlo left side with ``h' = I_{]r, r+delta]} / delta`` is compared with the
    direct value at ``r``; the two agree up to the variation of ``k`` over the
    window.
    """
    if u.times[-1] > s * (1 + 1e-12):
        raise InvalidArgument("u must depend on the path up to time s only")
    r_probes = [float(r) for r in r_probes]
    if any(r < s for r in r_probes):
        raise InvalidArgument("probe times must be at least s")
    T = direction.k.end
    mu = phi.derivative
    direct, windowed = [], []
    for r in r_probes:
        kr = float(direction.k.right_value(r))
        if kr == 0.0 or mu.is_zero:
            d = Estimate(0.0, 0.0, int(mc.paths))
        else:
            d = _conditional_side(direction, mu, u, None, mc, weight=kr)[f"o{GL_ORDER}"]
        direct.append(d)
        row = []
        for delta in windows:
            if not 0 < delta <= T - r:
                raise InvalidArgument(f"window {delta!r} at r = {r!r} leaves [0, T]")
            h = Direction(StepFunction.indicator(r, r + delta, 1.0 / delta))
            lhs = lhs_phi(direction, phi, u, h, mc)
            row.append(IdentityReport(lhs.mean, d.mean, lhs.stderr, d.stderr,
                                      extra={"r": r, "delta": float(delta)}))
        windowed.append(row)
    return DisintegratedReport(r_probes, [float(w) for w in windows], direct, windowed)


def bv_defining_identity_check(spec: Cylindrical, g_test: CylindricalFunctional,
                               h: Direction, mc: MCConfig) -> IdentityReport:
    """``int g dD_h f`` from the explicit chain rule against ``-E[f d*_h g]``."""
    rep = chain_rule_check_phi(spec.direction, spec.phi, g_test, h, mc)
    return IdentityReport(rep.rhs, rep.lhs, rep.stderr_rhs, rep.stderr_lhs,
                          quad_budget=rep.quad_budget, extra=rep.extra)


def levelset_continuity(direction: NormalizedDirection, u: CylindricalFunctional,
                        h: Direction, xs: Sequence[float], mc: MCConfig,
                        k_sigma: float = 5.0) -> dict:
    """``lhs_levelset`` on a grid of ``x`` with the largest adjacent jump in stderr units."""
    ests = [lhs_levelset(direction, u, h, x, mc) for x in xs]
    jumps = [abs(b.mean - a.mean) / max(math.hypot(a.stderr, b.stderr), 1e-300)
             for a, b in zip(ests, ests[1:])]
    worst = max(jumps, default=0.0)
    return {"x": [float(x) for x in xs], "values": [e.mean for e in ests],
            "stderr": [e.stderr for e in ests], "max_jump_sigma": worst,
            "pass": worst <= k_sigma}
