"""Scalar fields (loads and exact solutions) and the builtin load catalogue."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

Vectorized = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScalarField:
    """A function of (x1, x2) evaluated on numpy arrays.

    ``norm`` and ``h1_seminorm`` are closed-form ``||f||`` and ``|f|_1`` over
    the unit square when known; ``exact_solution`` is the solution of the
    homogeneous Dirichlet Poisson problem on the unit square with this load.
    """

    value: Vectorized
    gradient: Optional[Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]] = None
    norm: Optional[float] = None
    h1_seminorm: Optional[float] = None
    exact_solution: Optional["ScalarField"] = None
    polynomial_degree: Optional[int] = None
    label: str = ""

    def __call__(self, x1, x2):
        return np.broadcast_to(self.value(x1, x2), np.broadcast(x1, x2).shape)

    def grad(self, x1, x2) -> np.ndarray:
        """Gradient stacked on a trailing axis of length 2."""
        if self.gradient is None:
            raise ValueError(f"field {self.label!r} has no gradient")
        shape = np.broadcast(x1, x2).shape
        g1, g2 = self.gradient(x1, x2)
        return np.stack([np.broadcast_to(g1, shape), np.broadcast_to(g2, shape)], axis=-1)


def constant(c: float) -> ScalarField:
    c = float(c)
    exact = None
    if c == 0.0:
        exact = ScalarField(lambda x, y: 0.0 * x, lambda x, y: (0.0 * x, 0.0 * y), 0.0, 0.0, None, 0, "0")
    return ScalarField(
        lambda x, y: np.full(np.broadcast(x, y).shape, c),
        lambda x, y: (0.0 * x, 0.0 * y),
        norm=abs(c),
        h1_seminorm=0.0,
        exact_solution=exact,
        polynomial_degree=0,
        label=f"const:{c:.17g}",
    )


def linear(a0: float, a1: float, a2: float) -> ScalarField:
    """a0 + a1*x1 + a2*x2 (no unit-square norms attached)."""
    return ScalarField(
        lambda x, y: a0 + a1 * x + a2 * y,
        lambda x, y: (np.full(np.shape(x), a1, dtype=float), np.full(np.shape(y), a2, dtype=float)),
        polynomial_degree=1,
        label=f"linear:{a0},{a1},{a2}",
    )


def sinsin() -> ScalarField:
    """f = sin(pi x1) sin(pi x2) with u = f / (2 pi^2)."""
    pi = math.pi
    u = ScalarField(
        lambda x, y: np.sin(pi * x) * np.sin(pi * y) / (2 * pi**2),
        lambda x, y: (
            np.cos(pi * x) * np.sin(pi * y) / (2 * pi),
            np.sin(pi * x) * np.cos(pi * y) / (2 * pi),
        ),
        norm=1.0 / (4 * pi**2),
        h1_seminorm=1.0 / (2 * math.sqrt(2) * pi),
        label="exact:sinsin/(2pi^2)",
    )
    return ScalarField(
        lambda x, y: np.sin(pi * x) * np.sin(pi * y),
        lambda x, y: (pi * np.cos(pi * x) * np.sin(pi * y), pi * np.sin(pi * x) * np.cos(pi * y)),
        norm=0.5,
        h1_seminorm=pi / math.sqrt(2),
        exact_solution=u,
        label="sinsin",
    )


_POLY_EXPONENTS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def _square_moment(a: int, b: int) -> float:
    return 1.0 / ((a + 1) * (b + 1))


def _poly_gram(terms) -> float:
    total = 0.0
    for ci, (ai, bi) in terms:
        for cj, (aj, bj) in terms:
            total += ci * cj * _square_moment(ai + aj, bi + bj)
    return total


def quadratic(coeffs) -> ScalarField:
    """c00 + c10 x + c01 y + c20 x^2 + c11 x y + c02 y^2, with exact unit-square norms."""
    c = [float(v) for v in coeffs]
    if len(c) != 6:
        raise ValueError("quadratic load needs 6 coefficients: c00,c10,c01,c20,c11,c02")
    terms = list(zip(c, _POLY_EXPONENTS))
    dx = [(ci * a, (a - 1, b)) for ci, (a, b) in terms if a > 0]
    dy = [(ci * b, (a, b - 1)) for ci, (a, b) in terms if b > 0]

    def ev(ts, x, y):
        out = np.zeros(np.broadcast(x, y).shape)
        for ci, (a, b) in ts:
            out = out + ci * np.power(x, a) * np.power(y, b)
        return out

    return ScalarField(
        lambda x, y: ev(terms, x, y),
        lambda x, y: (ev(dx, x, y), ev(dy, x, y)),
        norm=math.sqrt(max(_poly_gram(terms), 0.0)),
        h1_seminorm=math.sqrt(max(_poly_gram(dx) + _poly_gram(dy), 0.0)),
        polynomial_degree=max((a + b for ci, (a, b) in terms if ci != 0.0), default=0),
        label="poly:" + ",".join(f"{v:.17g}" for v in c),
    )


def parse_builtin(spec: str) -> ScalarField:
    """Parse ``builtin:sinsin``, ``builtin:const:C`` or ``builtin:poly:c00,c10,c01,c20,c11,c02``."""
    parts = spec.split(":", 2)
    if parts[0] != "builtin" or len(parts) < 2:
        raise ValueError(f"unknown load spec {spec!r}")
    kind = parts[1]
    if kind == "sinsin" and len(parts) == 2:
        return sinsin()
    if kind == "const" and len(parts) == 3:
        return constant(float(parts[2]))
    if kind == "poly" and len(parts) == 3:
        return quadratic(parts[2].split(","))
    raise ValueError(f"unknown load spec {spec!r}")
