"""Explicit predictable integrands for BV functionals and the representation check.

Two families are covered: ``f = phi(W(k))`` for a unit-norm step function
``k`` and ``f = phi(M)`` with ``M`` the maximum of ``W`` on ``[0, T]``. In both
cases ``f = E[f] + int_0^T H_s dW_s`` with

* ``H_s = int K(x - W(I_{]0,s]} k), s) Dphi(dx)`` for the Wiener-integral case,
* ``H_s = int m_{T-s}(x - W_s) I_{x > M_s} Dphi(dx)`` for the maximum, where
  ``M_s`` is the running maximum.

The Ito integral is a left-point sum on the path grid. Integrands are built
either one prefix at a time (:func:`ito_integral` with a callback, the
reference route) or for all left points at once from cumulative prefix
statistics (:func:`integrand_matrix`, the fast route used by the checks).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import ndtr

from .bv_measure import (GL_ORDER, MAX_NODE_ELEMENTS, BVScalarFunction,
                         SignedMeasure1D, _leggauss, integrate_kernel)
from .errors import InvalidArgument, NumericError
from .grid_paths import (BrownianPath, MaxRecord, PathPrefix,
                         hitting_time, running_max, wiener_integral,
                         wiener_integral_prefixes)
from .kernels import (NormalizedDirection, cyl_kernel, max_density,
                      std_normal_density, xi_running_max)
from .montecarlo import Estimate, MCConfig, run_paths
from .steps import StepFunction

PROJECTION_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Cylindrical:
    """``f = phi(W(k))``."""
    direction: NormalizedDirection
    phi: BVScalarFunction

    kind = "cylindrical"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k": self.direction.k.to_dict(), "phi": self.phi.to_dict()}


@dataclass(frozen=True, eq=False)
class RunningMax:
    """``f = phi(sup_{[0,T]} W)``."""
    phi: BVScalarFunction

    kind = "running_max"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "phi": self.phi.to_dict()}


BVFunctionalSpec = Union[Cylindrical, RunningMax]


def spec_from_dict(d: dict) -> BVFunctionalSpec:
    """Parse ``{"kind": "cylindrical", "k": {...}, "phi": {...}}`` or
    ``{"kind": "running_max", "phi": {...}}``."""
    if not isinstance(d, dict):
        raise InvalidArgument("functional spec must be a JSON object")
    kind = d.get("kind")
    if "phi" not in d:
        raise InvalidArgument("functional spec lacks 'phi'")
    phi = BVScalarFunction.from_dict(d["phi"])
    if kind == "cylindrical":
        if "k" not in d or not isinstance(d["k"], dict):
            raise InvalidArgument("cylindrical spec lacks 'k'")
        return Cylindrical(NormalizedDirection(StepFunction.from_dict(d["k"])), phi)
    if kind == "running_max":
        return RunningMax(phi)
    raise InvalidArgument(f"unknown functional kind {kind!r}")


def digital(t: float = 1.0) -> Cylindrical:
    """``I_{W_t >= 0}`` written as ``I_{W(k) >= 0}`` with ``k = I_{]0,t]} / sqrt(t)``."""
    if not t > 0:
        raise InvalidArgument("t must be positive")
    return Cylindrical(NormalizedDirection.indicator(t), BVScalarFunction.heaviside(0.0))


def barrier(y: float = 1.0) -> RunningMax:
    """``I_{M >= y}``: the path reaches ``y`` before ``T``."""
    if not y > 0:
        raise InvalidArgument("barrier level must be positive")
    return RunningMax(BVScalarFunction.heaviside(y))


# -- closed-form means -------------------------------------------------------

def _normal_tail_antiderivative(x):
    """``G`` with ``G' = 1 - Phi``: ``x (1 - Phi(x)) - rho(x)``."""
    x = np.asarray(x, dtype=float)
    return x * ndtr(-x) - std_normal_density(x)


def expected_value(spec: BVFunctionalSpec, T: float) -> float:
    """``E[f] = base + int P(X >= x) Dphi(dx)`` with ``X`` standard normal or ``M``."""
    mu = spec.phi.derivative
    out = float(spec.phi.base)
    if isinstance(spec, Cylindrical):
        out += float(np.sum(mu.atom_w * ndtr(-mu.atom_x)))
        if mu.knots.size:
            G = _normal_tail_antiderivative(mu.knots)
            out += float(np.sum(mu.levels * np.diff(G)))
        return out
    if not T > 0:
        raise InvalidArgument("T must be positive")
    rt = math.sqrt(T)
    # P(M >= x) = 1 for x <= 0 and 2 (1 - Phi(x / sqrt(T))) above
    tail = np.where(mu.atom_x <= 0, 1.0, 2.0 * ndtr(-mu.atom_x / rt))
    out += float(np.sum(mu.atom_w * tail))
    if mu.knots.size:
        lo, hi = mu.knots[:-1], mu.knots[1:]
        neg = np.minimum(hi, 0.0) - np.minimum(lo, 0.0)
        G = _normal_tail_antiderivative(np.maximum(mu.knots, 0.0) / rt)
        out += float(np.sum(mu.levels * (neg + 2.0 * rt * np.diff(G))))
    return out


def evaluate_f(spec: BVFunctionalSpec, path: BrownianPath, record: MaxRecord | None = None):
    if isinstance(spec, Cylindrical):
        return spec.phi(wiener_integral(path, spec.direction.k))
    if record is None:
        record = running_max(path)
    return spec.phi(record.overall_max)


# -- integrands ----------------------------------------------------------------

def _prefix_wiener(k: StepFunction, prefix: PathPrefix):
    """``W(I_{]0,s]} k)`` from the prefix alone."""
    s = prefix.s
    if s <= 0.0 or s <= k.breakpoints[0]:
        return np.zeros(prefix.values.shape[:-1])
    lv = k.restricted(0.0, s).levels_on(prefix.times)
    return np.sum(lv * prefix.increments, axis=-1)


def _check_time(s: float, T: float) -> None:
    if not s < T:
        raise InvalidArgument(f"integrand needs s < T, got s = {s!r}")


def integrand_cylindrical(spec: Cylindrical, prefix: PathPrefix):
    """``H_s`` for ``f = phi(W(k))`` at ``s = prefix.s``."""
    _check_time(prefix.s, prefix.T)
    x0 = _prefix_wiener(spec.direction.k, prefix)
    s = prefix.s
    return integrate_kernel(spec.phi.derivative,
                            lambda x: cyl_kernel(spec.direction, x - x0, s))


def integrand_max(spec: RunningMax, prefix: PathPrefix):
    """``H_s`` for ``f = phi(M)``; needs the running maximum on the prefix."""
    _check_time(prefix.s, prefix.T)
    if prefix.running_max is None:
        raise InvalidArgument("running-maximum integrand needs the running maxima")
    w = prefix.values[..., -1]
    m = prefix.running_max[..., -1]
    tau = prefix.T - prefix.s
    return integrate_kernel(spec.phi.derivative, lambda x: max_density(x - w, tau), lower=m)


def integrand(spec: BVFunctionalSpec, prefix: PathPrefix):
    if isinstance(spec, Cylindrical):
        return integrand_cylindrical(spec, prefix)
    return integrand_max(spec, prefix)


def integrand_matrix(spec: BVFunctionalSpec, path: BrownianPath,
                     record: MaxRecord | None = None) -> np.ndarray:
    """``H`` at every left point ``s_0 .. s_{n-1}``, shape ``(..., n)``.

    Same values as :func:`integrand` on each prefix, computed from cumulative
    statistics (prefix Wiener integrals, running maxima) in one pass.
    """
    mu = spec.phi.derivative
    n = path.grid.n_steps
    s = path.grid.points[:-1]
    if mu.is_zero:
        return np.zeros(path.batch_shape + (n,))
    if isinstance(spec, Cylindrical):
        x0 = wiener_integral_prefixes(path, spec.direction.k)[..., :-1]

        def block(sl):
            return integrate_kernel(
                mu, lambda x: cyl_kernel(spec.direction, x - x0[..., sl], s[sl]))
    else:
        if record is None:
            raise InvalidArgument("running-maximum integrand needs a MaxRecord")
        w = path.values[..., :-1]
        m = record.running_max[..., :-1]
        tau = path.grid.T - s

        def block(sl):
            return integrate_kernel(mu, lambda x: max_density(x - w[..., sl], tau[sl]),
                                    lower=m[..., sl])

    if not mu.knots.size:
        out = block(slice(None))
    else:
        # keep quadrature node arrays bounded for density parts
        width = int(np.prod(path.batch_shape, dtype=np.int64)) if path.batch_shape else 1
        cols = max(1, MAX_NODE_ELEMENTS // (GL_ORDER * width))
        out = np.concatenate([np.asarray(block(slice(i, i + cols))).reshape(path.batch_shape + (-1,))
                              for i in range(0, n, cols)], axis=-1)
    return np.broadcast_to(out, path.batch_shape + (n,))


def _first_bad(h: np.ndarray) -> tuple[int, int]:
    bad = ~np.isfinite(h)
    flat = np.argwhere(bad)[0]
    return (int(flat[0]) if h.ndim > 1 else 0), int(flat[-1])


def ito_sum(H: np.ndarray, path: BrownianPath, first_index: int = 0):
    """``sum_i H_i (W(s_{i+1}) - W(s_i))``; raises NumericError on a non-finite ``H``."""
    if not np.all(np.isfinite(H)):
        p, i = _first_bad(H)
        raise NumericError(f"non-finite integrand on path {first_index + p} at s = "
                           f"{float(path.grid.points[i])!r}")
    return np.sum(H * path.increments, axis=-1)


def ito_integral(path: BrownianPath, H: Callable[[PathPrefix], object],
                 record: MaxRecord | None = None, first_index: int = 0):
    """Left-point Ito sum with ``H`` called on each prefix ``[0, s_i]``, ``i < n``.

    The callback sees only the prefix, so the integrand is predictable by
    construction. ``record`` supplies running maxima to the prefixes.
    """
    n = path.grid.n_steps
    total = np.zeros(path.batch_shape)
    dw = path.increments
    for i in range(n):
        h = np.broadcast_to(np.asarray(H(path.prefix(i, record)), dtype=float), path.batch_shape)
        if not np.all(np.isfinite(h)):
            bad = np.flatnonzero(~np.isfinite(h))
            raise NumericError(f"non-finite integrand on path {first_index + int(bad[0])} "
                               f"at s = {float(path.grid.points[i])!r}")
        total = total + h * dw[..., i]
    return total if total.ndim else float(total)


# -- representation check ----------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    n_steps: int
    paths: int
    l1_error: float
    l2_error: float
    stderr: float

    def to_dict(self) -> dict:
        return {"n_steps": self.n_steps, "paths": self.paths, "l1_error": self.l1_error,
                "l2_error": self.l2_error, "stderr": self.stderr}


@dataclass
class RepReport:
    """Outcome of :func:`verify_representation`.

    ``stderr`` of the L1 error is the standard error of the mean absolute
    residual; for the L2 error it comes from the delta method.
    """
    kind: str
    expected_f: float
    expected_source: str
    mean_f: float
    stderr_f: float
    repr_error_L1: float
    stderr_L1: float
    repr_error_L2: float
    stderr_L2: float
    l1_tol: float | None
    rows: list[ConvergenceRow]
    post_hit_violations: int | None = None
    k_sigma: float = 3.0
    extra: dict = field(default_factory=dict)

    @property
    def checks(self) -> dict[str, bool]:
        c = {}
        if self.expected_source == "closed_form":
            c["mean"] = abs(self.mean_f - self.expected_f) <= self.k_sigma * self.stderr_f
        if self.l1_tol is not None:
            slack = self.k_sigma * self.stderr_f if self.expected_source == "mc" else 0.0
            c["l1"] = self.repr_error_L1 <= self.l1_tol + slack
        if len(self.rows) > 1:
            errs = [r.l1_error for r in sorted(self.rows, key=lambda r: r.n_steps)]
            c["refinement"] = all(b <= a for a, b in zip(errs, errs[1:]))
        if self.post_hit_violations is not None:
            c["post_hit"] = self.post_hit_violations == 0
        return c

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "expected_f": self.expected_f,
            "expected_source": self.expected_source,
            "mean_f": self.mean_f,
            "stderr_f": self.stderr_f,
            "repr_error_L1": self.repr_error_L1,
            "stderr_L1": self.stderr_L1,
            "repr_error_L2": self.repr_error_L2,
            "stderr_L2": self.stderr_L2,
            "l1_tol": self.l1_tol,
            "post_hit_violations": self.post_hit_violations,
            "rows": [r.to_dict() for r in self.rows],
            "checks": self.checks,
            "pass": self.passed,
            **self.extra,
        }

    def rows_csv(self) -> str:
        return rows_to_csv([r.to_dict() for r in sorted(self.rows, key=lambda r: r.n_steps)],
                           ["n_steps", "paths", "l1_error", "l2_error", "stderr"])


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n",
                       extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _record_for(spec, path, mc, stream):
    if isinstance(spec, RunningMax):
        return running_max(path, bridge=mc.bridge, rng=stream)
    return None


def _residual_run(spec: BVFunctionalSpec, mc: MCConfig, ef: float | None):
    y_hit = spec.phi.derivative.support_max if isinstance(spec, RunningMax) else None
    check_hits = y_hit is not None and y_hit > 0

    def per_batch(path, stream):
        rec = _record_for(spec, path, mc, stream)
        H = integrand_matrix(spec, path, rec)
        I = ito_sum(H, path, stream.index)
        f = evaluate_f(spec, path, rec)
        out = {"f": f}
        if ef is None:
            out["raw_d"] = f - I
        else:
            r = f - ef - I
            out["abs_r"] = np.abs(r)
            out["sq_r"] = r * r
        if check_hits:
            tau = hitting_time(path, y_hit, bridge=mc.bridge, rng=stream, record=rec)
            after = path.grid.points[:-1] >= tau[..., None]
            out["viol"] = np.any(after & (H != 0), axis=-1).astype(float)
        return out

    return run_paths(mc, per_batch)


def _summarize(est: dict, ef: float | None):
    if ef is not None:
        l1, sq = est["abs_r"], est["sq_r"]
        return l1.mean, l1.stderr, sq.mean, sq.stderr
    d = est["raw_d"]
    r = d - est["f"].mean
    n = r.size
    a, q = np.abs(r), r * r
    se = lambda v: float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else math.inf  # noqa: E731
    return float(a.mean()), se(a), float(q.mean()), se(q)


def verify_representation(spec: BVFunctionalSpec, mc: MCConfig,
                          grids: Sequence = (), l1_tol: float | None = None,
                          closed_form: bool = True) -> RepReport:
    """Residual ``f - E[f] - int H dW`` over ``mc.paths`` paths on ``mc.grid``.

    Each grid in ``grids`` adds a convergence row (same seed, same path
    count). ``E[f]`` comes from :func:`expected_value` unless
    ``closed_form=False``, in which case the sample mean is used and its
    standard error is added to the L1 threshold.
    """
    if mc.grid is None:
        raise InvalidArgument("the representation check needs an explicit grid")
    T = mc.grid.T
    if isinstance(spec, Cylindrical) and spec.direction.k.end > T * (1 + 1e-12):
        raise InvalidArgument("direction extends past the horizon")
    ef = expected_value(spec, T) if closed_form else None

    rows, main = [], None
    viol = 0
    for g in [mc.grid, *grids]:
        sub = MCConfig(mc.paths, g, mc.seed, mc.workers, mc.bridge, mc.batch_size)
        est = _residual_run(spec, sub, ef)
        l1, l1_se, sq, sq_se = _summarize(est, ef)
        l2 = math.sqrt(sq)
        rows.append(ConvergenceRow(g.n_steps, int(mc.paths), l1, l2, l1_se))
        if "viol" in est:
            viol += int(round(est["viol"].mean * est["viol"].n))
        if main is None:
            main = (est, l1, l1_se, l2, sq_se / (2 * l2) if l2 > 0 else 0.0)
    est, l1, l1_se, l2, l2_se = main
    has_hits = isinstance(spec, RunningMax) and (spec.phi.derivative.support_max or 0) > 0
    return RepReport(
        kind=spec.kind,
        expected_f=float(ef) if ef is not None else est["f"].mean,
        expected_source="closed_form" if ef is not None else "mc",
        mean_f=est["f"].mean,
        stderr_f=est["f"].stderr,
        repr_error_L1=l1,
        stderr_L1=l1_se,
        repr_error_L2=l2,
        stderr_L2=l2_se,
        l1_tol=l1_tol,
        rows=rows,
        post_hit_violations=viol if has_hits else None,
        extra={"paths": int(mc.paths), "seed": int(mc.seed), "bridge": bool(mc.bridge)},
    )


# -- smooth-case projection ----------------------------------------------------

@dataclass
class ProjectionReport:
    s: float
    kernel_values: list[float]
    closed_values: list[float]
    tol: float = PROJECTION_TOL

    @property
    def sup_discrepancy(self) -> float:
        if not self.kernel_values:
            return 0.0
        return float(np.max(np.abs(np.subtract(self.kernel_values, self.closed_values))))

    @property
    def passed(self) -> bool:
        return self.sup_discrepancy <= self.tol

    def to_dict(self) -> dict:
        return {"s": self.s, "kernel_values": self.kernel_values,
                "closed_values": self.closed_values, "sup_discrepancy": self.sup_discrepancy,
                "tol": self.tol, "pass": self.passed}


def discretize_density(dphi: Callable, spacing: float = 1e-3,
                       window: tuple[float, float] = (-10.0, 10.0)) -> SignedMeasure1D:
    """Piecewise-constant measure with the cell averages of ``dphi`` on ``window``."""
    lo, hi = map(float, window)
    if not (hi > lo and spacing > 0):
        raise InvalidArgument("need a nonempty window and a positive spacing")
    cells = int(round((hi - lo) / spacing))
    knots = np.linspace(lo, hi, max(cells, 1) + 1)
    nodes, weights = _leggauss(8)
    half = 0.5 * np.diff(knots)
    x = knots[:-1, None] + half[:, None] * (nodes + 1.0)
    levels = 0.5 * np.sum(weights * np.asarray(dphi(x), dtype=float), axis=-1)
    if not np.all(np.isfinite(levels)):
        raise NumericError("derivative is not finite on the discretization window")
    return SignedMeasure1D([], knots, levels)


def projection_check(direction: NormalizedDirection, dphi: Callable, s: float,
                     probes: Sequence, spacing: float = 1e-3,
                     window: tuple[float, float] = (-10.0, 10.0),
                     tol: float = PROJECTION_TOL, hermite_order: int = 120) -> ProjectionReport:
    """Kernel-built ``H_s`` against ``k(s) E[phi'(x0 + tau Z)]`` for smooth ``phi``.

    ``probes`` are path prefixes ending at ``s`` or values of
    ``x0 = W(I_{]0,s]} k)``. The kernel side discretizes ``phi'`` to a
    piecewise-constant density; the closed side uses Gauss-Hermite quadrature.
    """
    mu = discretize_density(dphi, spacing, window)
    z, wz = np.polynomial.hermite_e.hermegauss(hermite_order)
    wz = wz / math.sqrt(2.0 * math.pi)
    ks = float(direction.value(s))
    tau = float(direction.tail_norm(s))
    kv, cv = [], []
    for p in probes:
        if isinstance(p, PathPrefix):
            if abs(p.s - s) > 1e-12 * max(1.0, abs(s)):
                raise InvalidArgument("probe prefix does not end at s")
            x0 = float(_prefix_wiener(direction.k, p))
        else:
            x0 = float(p)
        kv.append(float(integrate_kernel(mu, lambda x: cyl_kernel(direction, x - x0, s))))
        vals = np.asarray(dphi(x0 + tau * z), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise NumericError("derivative is not finite at the Gauss-Hermite nodes")
        cv.append(ks * float(np.sum(wz * vals)))
    return ProjectionReport(float(s), kv, cv, tol)


# -- integrability bound -------------------------------------------------------

@dataclass
class BoundReport:
    estimate: Estimate
    tv_bound: float
    T: float
    coarse_bound: float
    k_sigma: float = 3.0

    @property
    def bound(self) -> float:
        return math.sqrt(self.T) * self.tv_bound

    @property
    def passed(self) -> bool:
        return bool(self.estimate.mean <= self.bound + self.k_sigma * self.estimate.stderr)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate.mean, "stderr": self.estimate.stderr,
                "paths": self.estimate.n, "tv_bound": self.tv_bound, "bound": self.bound,
                "coarse_bound": self.coarse_bound, "T": self.T, "pass": self.passed}


def xi_weighted_variation(spec: BVFunctionalSpec, T: float) -> float:
    """``int xi d|Dphi|``: the total variation of ``f`` on Wiener space."""
    tv = spec.phi.derivative.abs()
    if isinstance(spec, Cylindrical):
        return float(integrate_kernel(tv, std_normal_density))
    xi = np.vectorize(lambda x: xi_running_max(float(x), T), otypes=[float])
    return float(integrate_kernel(tv, xi))


def integrability_bound_check(spec: BVFunctionalSpec, mc: MCConfig) -> BoundReport:
    """Monte Carlo ``int_0^T E|H_s| ds`` against ``sqrt(T) int xi d|Dphi|``.

    The time integral is a left-point sum on the grid; ``H`` is never
    evaluated at ``T`` where the kernels are singular. ``coarse_bound`` uses
    ``xi <= sqrt(T) m_T`` for the maximum and ``xi <= rho(0)`` otherwise.
    """
    if mc.grid is None:
        raise InvalidArgument("the integrability check needs an explicit grid")
    T = mc.grid.T
    gaps = mc.grid.gaps

    def per_batch(path, stream):
        H = integrand_matrix(spec, path, _record_for(spec, path, mc, stream))
        return {"int_abs_h": np.sum(np.abs(H) * gaps, axis=-1)}

    est = run_paths(mc, per_batch)["int_abs_h"]
    tv = spec.phi.derivative.abs()
    if isinstance(spec, Cylindrical):
        coarse = math.sqrt(T) * float(std_normal_density(0.0)) * tv.total_variation()
    else:
        coarse = T * float(integrate_kernel(tv, lambda x: max_density(x, T)))
    return BoundReport(est, xi_weighted_variation(spec, T), T, coarse)
