"""Built-in test cases shared by the command line and the test suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .functional import CylindricalFunctional, Direction
from .kernels import NormalizedDirection
from .steps import StepFunction


@dataclass(frozen=True, eq=False)
class IBPTriple:
    name: str
    f: CylindricalFunctional
    g: CylindricalFunctional
    h: Direction


def _sech2(z):
    return 1.0 / np.cosh(z) ** 2


def _lin(times, coeffs, psi, dpsi, bound=math.inf) -> CylindricalFunctional:
    """``psi(sum_i coeffs_i Delta_i W)`` over consecutive ``times``."""
    return CylindricalFunctional.of_wiener(StepFunction(times, coeffs), psi, dpsi, bound)


def ibp_triples(T: float = 1.0) -> list[IBPTriple]:
    """Five fixed bounded smooth triples ``(f, g, h)`` on ``[0, T]``."""
    t = lambda *fr: [T * x for x in fr]  # noqa: E731
    return [
        IBPTriple("sin-cos",
                  _lin(t(0, 1), [1.0], np.sin, np.cos, 1.0),
                  _lin(t(0, 0.5), [1.0], np.cos, lambda z: -np.sin(z), 1.0),
                  Direction(StepFunction(t(0, 1), [1.0]))),
        IBPTriple("tanh-gauss",
                  _lin(t(0, 0.3, 1), [1.0, -0.5], np.tanh, _sech2, 1.0),
                  _lin(t(0, 1), [1.0], lambda z: np.exp(-z * z), lambda z: -2 * z * np.exp(-z * z), 1.0),
                  Direction(StepFunction(t(0, 0.5, 1), [1.0, -0.5]))),
        IBPTriple("lorentz-sin",
                  _lin(t(0, 0.5), [1.0], lambda z: 1 / (1 + z * z), lambda z: -2 * z / (1 + z * z) ** 2, 1.0),
                  _lin(t(0.25, 1), [1.0], np.sin, np.cos, 1.0),
                  Direction(StepFunction(t(0.25, 0.75), [2.0]))),
        IBPTriple("arctan-one",
                  _lin(t(0, 0.4, 0.8), [2.0, 1.0], np.arctan, lambda z: 1 / (1 + z * z), math.pi / 2),
                  CylindricalFunctional.constant(1.0, T),
                  Direction(StepFunction(t(0, 1), [1.0]))),
        IBPTriple("cos-tanh",
                  _lin(t(0, 0.2, 1), [2.0, 1.0], np.cos, lambda z: -np.sin(z), 1.0),
                  _lin(t(0, 0.7), [1.0], np.tanh, _sech2, 1.0),
                  Direction(StepFunction(t(0, 0.4, 1), [0.5, 1.5]))),
    ]


_PSI = [
    (np.sin, np.cos),
    (np.cos, lambda z: -np.sin(z)),
    (np.tanh, _sech2),
    (np.arctan, lambda z: 1 / (1 + z * z)),
    (lambda z: np.exp(-0.5 * z * z), lambda z: -z * np.exp(-0.5 * z * z)),
]


def _random_step(rng: np.random.Generator, T: float, pieces: int) -> StepFunction:
    inner = np.sort(rng.choice(np.arange(1, 8), size=pieces - 1, replace=False)) * T / 8
    return StepFunction(np.concatenate([[0.0], inner, [T]]), rng.normal(size=pieces))


def random_triple(rng: np.random.Generator, T: float = 1.0) -> IBPTriple:
    """A random bounded smooth triple on breakpoints from the eighths of ``[0, T]``."""
    fs = []
    for _ in range(2):
        psi, dpsi = _PSI[int(rng.integers(len(_PSI)))]
        fs.append(CylindricalFunctional.of_wiener(
            _random_step(rng, T, int(rng.integers(1, 4))), psi, dpsi, 1.0))
    h = Direction(_random_step(rng, T, int(rng.integers(1, 4))))
    return IBPTriple("random", fs[0], fs[1], h)


def unit_direction(T: float = 1.0) -> NormalizedDirection:
    """``k = I_{]0,T]} / sqrt(T)``."""
    return NormalizedDirection.indicator(T)


def orthogonal_direction(T: float = 1.0) -> Direction:
    """``h' = I_{]0,T/2]} - I_{]T/2,T]}``, orthogonal to :func:`unit_direction`."""
    return Direction(StepFunction([0.0, T / 2, T], [1.0, -1.0]))


def cos_terminal(T: float = 1.0) -> CylindricalFunctional:
    """``u = cos(W_T)``."""
    return CylindricalFunctional.of_increment(0.0, T, np.cos, lambda z: -np.sin(z), 1.0)
