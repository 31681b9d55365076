"""One-dimensional BV functions stored through their derivative measures.

A :class:`SignedMeasure1D` is a finite sum of atoms plus a piecewise-constant
density with compact support. A :class:`BVScalarFunction` adds the value at
``-inf``, so that ``phi(x) = base + Dphi(]-inf, x])`` (right-continuous).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgument, NumericError
from .kernels import NormalizedDirection, xi_wiener

GL_ORDER = 16
# cap on kernel evaluations held in memory at once
MAX_NODE_ELEMENTS = 2**22


def _leggauss(order: int):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


@dataclass(frozen=True, eq=False)
class SignedMeasure1D:
    atom_x: np.ndarray
    atom_w: np.ndarray
    knots: np.ndarray
    levels: np.ndarray

    def __init__(self, atoms: Sequence[tuple[float, float]] = (),
                 knots: Sequence[float] = (), levels: Sequence[float] = ()):
        ax = np.array([a[0] for a in atoms], dtype=float)
        aw = np.array([a[1] for a in atoms], dtype=float)
        kn = np.array(knots, dtype=float).ravel()
        lv = np.array(levels, dtype=float).ravel()
        if ax.size and np.unique(ax).size != ax.size:
            raise InvalidArgument("atom locations must be distinct")
        if np.any(aw == 0):
            raise InvalidArgument("atom weights must be nonzero")
        if not (np.all(np.isfinite(ax)) and np.all(np.isfinite(aw))):
            raise InvalidArgument("atoms must be finite")
        if kn.size == 0:
            if lv.size:
                raise InvalidArgument("density levels given without knots")
        else:
            if kn.size < 2 or lv.size != kn.size - 1:
                raise InvalidArgument("density needs len(levels) == len(knots) - 1 >= 1")
            if np.any(np.diff(kn) <= 0):
                raise InvalidArgument("density knots must be strictly increasing")
            if not (np.all(np.isfinite(kn)) and np.all(np.isfinite(lv))):
                raise InvalidArgument("density must be finite")
        order = np.argsort(ax)
        for name, arr in (("atom_x", ax[order]), ("atom_w", aw[order]),
                          ("knots", kn), ("levels", lv)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    # -- structure ----------------------------------------------------------

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.atom_x.tolist(), self.atom_w.tolist()))

    @property
    def support_bound(self) -> float:
        """Smallest ``M`` with the support inside ``[-M, M]``."""
        pts = np.concatenate([self.atom_x, self.knots])
        return float(np.max(np.abs(pts))) if pts.size else 0.0

    @property
    def support_max(self) -> float | None:
        """Right end of the support, or None for the zero measure."""
        pts = list(self.atom_x)
        if self.knots.size:
            nz = np.nonzero(self.levels)[0]
            if nz.size:
                pts.append(self.knots[nz[-1] + 1])
        return float(max(pts)) if pts else None

    @property
    def is_zero(self) -> bool:
        return self.atom_x.size == 0 and not np.any(self.levels)

    def total_variation(self) -> float:
        return total_variation(self)

    def cdf(self, x):
        """``mu(]-inf, x])``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for a, w in zip(self.atom_x, self.atom_w):
            out = out + np.where(x >= a, w, 0.0)
        if self.knots.size:
            for lo, hi, c in zip(self.knots[:-1], self.knots[1:], self.levels):
                out = out + c * np.clip(x - lo, 0.0, hi - lo)
        return out

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if not self.knots.size:
            return np.zeros(x.shape)
        j = np.searchsorted(self.knots, x, side="right") - 1
        inside = (j >= 0) & (j < self.levels.size)
        return np.where(inside, self.levels[np.clip(j, 0, self.levels.size - 1)], 0.0)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other: "SignedMeasure1D") -> "SignedMeasure1D":
        atoms: dict[float, float] = {}
        for x, w in self.atoms + other.atoms:
            atoms[x] = atoms.get(x, 0.0) + w
        knots = np.union1d(self.knots, other.knots)
        if knots.size:
            mid = 0.5 * (knots[1:] + knots[:-1])
            levels = self.density(mid) + other.density(mid)
        else:
            levels = np.array([])
        return SignedMeasure1D([(x, w) for x, w in atoms.items() if w != 0],
                               knots, levels)

    def __mul__(self, c: float) -> "SignedMeasure1D":
        c = float(c)
        if c == 0:
            return SignedMeasure1D()
        return SignedMeasure1D([(x, c * w) for x, w in self.atoms],
                               self.knots, c * self.levels)

    __rmul__ = __mul__

    def __neg__(self) -> "SignedMeasure1D":
        return self * -1.0

    def abs(self) -> "SignedMeasure1D":
        """The variation measure ``|mu|``."""
        return SignedMeasure1D([(x, abs(w)) for x, w in self.atoms],
                               self.knots, np.abs(self.levels))

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d: dict = {"atoms": [{"x": x, "w": w} for x, w in self.atoms]}
        if self.knots.size:
            d["density"] = {"knots": self.knots.tolist(), "levels": self.levels.tolist()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SignedMeasure1D":
        try:
            atoms = [(float(a["x"]), float(a["w"])) for a in d.get("atoms", [])]
            dens = d.get("density") or {}
            return cls(atoms, dens.get("knots", []), dens.get("levels", []))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidArgument):
                raise
            raise InvalidArgument(f"malformed measure spec: {exc}") from None


@dataclass(frozen=True, eq=False)
class BVScalarFunction:
    base: float
    derivative: SignedMeasure1D

    @classmethod
    def heaviside(cls, at: float = 0.0, height: float = 1.0, base: float = 0.0):
        """``base + height * I_{x >= at}``."""
        return cls(base, SignedMeasure1D([(at, height)]))

    @classmethod
    def ramp(cls, a: float = 0.0, b: float = 1.0, height: float | None = None,
             base: float = 0.0):
        """Linear from ``base`` at ``a`` to ``base + height`` at ``b``.

        Default height ``b - a`` means unit density on ``[a, b]``.
        """
        height = (b - a) if height is None else height
        return cls(base, SignedMeasure1D([], [a, b], [height / (b - a)]))

    @classmethod
    def constant(cls, c: float):
        return cls(c, SignedMeasure1D())

    def __call__(self, x):
        return eval_phi(self, x)

    def to_dict(self) -> dict:
        return {"base": self.base, **self.derivative.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "BVScalarFunction":
        if not isinstance(d, dict):
            raise InvalidArgument("measure spec must be a JSON object")
        try:
            base = float(d.get("base", 0.0))
        except (TypeError, ValueError):
            raise InvalidArgument("'base' must be a number") from None
        return cls(base, SignedMeasure1D.from_dict(d))


def eval_phi(phi: BVScalarFunction, x):
    """``base + sum_{x_i <= x} a_i + int_{-inf}^x density``."""
    return phi.base + phi.derivative.cdf(x)


def total_variation(mu: SignedMeasure1D) -> float:
    """``sum |a_i| + int |density|``, exact."""
    tv = float(np.sum(np.abs(mu.atom_w)))
    if mu.knots.size:
        tv += float(np.sum(np.abs(mu.levels) * np.diff(mu.knots)))
    return tv


def integrate_kernel(mu: SignedMeasure1D, K: Callable, lower=None,
                     order: int = GL_ORDER):
    """``int K(x) mu(dx)``, optionally over ``]lower, inf[`` only.

    Atoms are summed exactly; each density piece gets ``order``-point
    Gauss-Legendre quadrature. ``K`` receives an array of abscissae and must
    broadcast it against its own batch arrays (numpy rules, trailing axes), so
    one call can serve a whole batch of paths; ``lower`` may be such a batch
    array too.
    """
    total = 0.0
    for a, w in zip(mu.atom_x, mu.atom_w):
        val = K(np.float64(a))
        if lower is not None:
            val = np.where(a > lower, val, 0.0)
        total = total + w * val
    nz = np.nonzero(mu.levels)[0] if mu.knots.size else np.array([], dtype=int)
    if nz.size:
        nodes, weights = _leggauss(order)
        lo_all, hi_all, c_all = mu.knots[nz], mu.knots[nz + 1], mu.levels[nz]
        probe = np.asarray(K(np.float64(lo_all[0])))
        shape = np.broadcast_shapes(probe.shape, np.shape(lower) if lower is not None else ())
        pad = (None,) * len(shape)
        chunk = max(1, MAX_NODE_ELEMENTS // max(1, int(np.prod(shape, dtype=np.int64))))
        z = (nodes + 1.0)[(slice(None),) + pad]
        wz = weights[(slice(None),) + pad]
        per = max(1, chunk // order)
        for i in range(0, nz.size, per):
            lo, hi, c = lo_all[i:i + per], hi_all[i:i + per], c_all[i:i + per]
            if lower is None:
                a = lo[(slice(None),) + pad]
                half = (0.5 * (hi - lo))[(slice(None),) + pad]
            else:
                a = np.maximum(lo[(slice(None),) + pad], lower)
                half = 0.5 * np.maximum(hi[(slice(None),) + pad] - a, 0.0)
            # (pieces, order, *shape)
            x = a[:, None] + half[:, None] * z[None]
            vals = np.asarray(K(x))
            cw = (c[(slice(None),) + pad] * half)[:, None] * wz[None]
            total = total + np.sum(cw * vals, axis=(0, 1))
    total = np.asarray(total, dtype=float)
    if not np.all(np.isfinite(total)):
        raise NumericError("kernel is not finite on the support of the measure")
    return total if total.ndim else float(total)


@dataclass(frozen=True)
class LevelRamp:
    """``t -> (n (t - x) ^ 1) v 0``: a Lipschitz approximant of ``I_{t > x}``."""
    x: float
    n: int

    def __call__(self, t):
        return np.clip(self.n * (np.asarray(t, dtype=float) - self.x), 0.0, 1.0)

    def derivative(self, t):
        """``n`` on ``]x, x + 1/n[``, else 0."""
        t = np.asarray(t, dtype=float)
        return np.where((t > self.x) & (t < self.x + 1.0 / self.n), float(self.n), 0.0)


def mollify_level(x: float, n: int) -> LevelRamp:
    if int(n) != n or n < 1:
        raise InvalidArgument("n must be a positive integer")
    return LevelRamp(float(x), int(n))


def mollified_derivative(phi: BVScalarFunction, n: int) -> Callable:
    """Derivative of ``phi_n(t) = n int_{t-1/n}^t phi``: ``n (phi(t) - phi(t - 1/n))``.

    This is ``Dphi`` convolved with the uniform density on ``[0, 1/n]``; for
    ``phi = I_{. > x}`` it reduces to :func:`mollify_level`.
    """
    def dphi_n(t):
        t = np.asarray(t, dtype=float)
        return n * (eval_phi(phi, t) - eval_phi(phi, t - 1.0 / n))
    return dphi_n


def tv_estimate_level_set(direction: NormalizedDirection, x: float,
                          n_list: Sequence[int], mode="quadrature") -> list:
    """``E |grad (phi^x_n o g)|_2`` for ``g = W(k)``, for each ``n`` in ``n_list``.

    ``mode="quadrature"`` returns ``n int_x^{x+1/n} xi`` (as Estimates with zero
    stderr). Passing an :class:`~bvwiener.montecarlo.MCConfig` instead runs the
    Monte Carlo estimate on sampled paths. The sequence approaches ``xi(x)`` as
    ``n`` grows; no extrapolation is attempted.
    """
    from .montecarlo import Estimate, MCConfig, run_paths
    from .grid_paths import wiener_integral

    n_list = [int(n) for n in n_list]
    if not n_list or any(n < 1 for n in n_list):
        raise InvalidArgument("n_list must hold positive integers")
    if isinstance(mode, str):
        if mode != "quadrature":
            raise InvalidArgument(f"unknown mode {mode!r}")
        nodes, weights = _leggauss(GL_ORDER)
        out = []
        for n in n_list:
            half = 0.5 / n
            t = x + half * (nodes + 1.0)
            out.append(Estimate(float(n * half * np.sum(weights * xi_wiener(direction, t))), 0.0,
                                0))
        return out
    if not isinstance(mode, MCConfig):
        raise InvalidArgument("mode must be 'quadrature' or an MCConfig")
    mc = mode
    knorm = float(direction.k.norm())
    ramps = [mollify_level(x, n) for n in n_list]

    def per_batch(path, stream):
        g = wiener_integral(path, direction.k)
        return {f"n{r.n}": np.abs(r.derivative(g)) * knorm for r in ramps}

    est = run_paths(mc.with_grid_default(direction.k.breakpoints), per_batch)
    return [est[f"n{n}"] for n in n_list]
