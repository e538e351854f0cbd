"""Quadrature rules on triangles (barycentric) and on edges.

Weights are normalised to sum to one, so an integral over a triangle is
``area * sum(w * f(x_q))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss


@dataclass(frozen=True)
class TriangleRule:
    bary: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def size(self) -> int:
        return len(self.weights)


def _orbit3(a: float) -> list[tuple[float, float, float]]:
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


def _midpoint_rule() -> TriangleRule:
    bary = np.array([(0.0, 0.5, 0.5), (0.5, 0.0, 0.5), (0.5, 0.5, 0.0)])
    return TriangleRule(bary, np.full(3, 1.0 / 3.0), 2)


def _radon7() -> TriangleRule:
    s = math.sqrt(15.0)
    a1, a2 = (6.0 - s) / 21.0, (6.0 + s) / 21.0
    w1, w2 = (155.0 - s) / 1200.0, (155.0 + s) / 1200.0
    bary = [(1 / 3, 1 / 3, 1 / 3)] + _orbit3(a1) + _orbit3(a2)
    weights = [9.0 / 40.0] + [w1] * 3 + [w2] * 3
    return TriangleRule(np.array(bary), np.array(weights), 5)


# edge-midpoint rule, exact for quadratics
MIDPOINT3 = _midpoint_rule()
# 7-point Gauss rule, exact for quintics
GAUSS7 = _radon7()


def collapsed_gauss(m: int) -> TriangleRule:
    """m*m point Duffy-collapsed Gauss-Legendre rule, exact to degree 2m - 2."""
    t, w = leggauss(m)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    s, r = np.meshgrid(t, t, indexing="ij")
    ws, wr = np.meshgrid(w, w, indexing="ij")
    l1 = s
    l2 = (1.0 - s) * r
    bary = np.column_stack([(1.0 - l1 - l2).ravel(), l1.ravel(), l2.ravel()])
    weights = 2.0 * (ws * wr * (1.0 - s)).ravel()
    return TriangleRule(bary, weights, 2 * m - 2)


def rule_for_degree(degree: int) -> TriangleRule:
    if degree <= 2:
        return MIDPOINT3
    if degree <= 5:
        return GAUSS7
    return collapsed_gauss(degree // 2 + 1)


def edge_gauss(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on [0, 1] with weights summing to one."""
    t, w = leggauss(m)
    return 0.5 * (t + 1.0), 0.5 * w
