"""Gauss-Legendre rules applied span by span."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "QuadratureRule",
    "gauss_legendre",
    "integrate_element",
    "integrate_rectangle",
    "composite_nodes",
    "default_order",
]


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return self.nodes.size

    def mapped(self, a: float, b: float):
        """Nodes and weights transferred to ``[a, b]``."""
        half = 0.5 * (b - a)
        return 0.5 * (a + b) + half * self.nodes, half * self.weights


@lru_cache(maxsize=64)
def gauss_legendre(q: int) -> QuadratureRule:
    if q < 1:
        raise ValueError(f"need at least one quadrature point, got {q}")
    x, w = np.polynomial.legendre.leggauss(int(q))
    x.flags.writeable = False
    w.flags.writeable = False
    return QuadratureRule(x, w)


def default_order(degree: int) -> int:
    return max(degree + 1, 3)


def integrate_element(f, span, q: int) -> float:
    """Approximate ``int_a^b f`` with a ``q``-point Gauss-Legendre rule.

    ``f`` must accept an array of abscissae.
    """
    a, b = span
    x, w = gauss_legendre(q).mapped(a, b)
    return float(np.dot(w, f(x)))


def integrate_rectangle(f, span_s, span_v, q: int) -> float:
    """Tensor-product Gauss rule on ``[a_s, b_s] x [a_v, b_v]``.

    ``f(s, v)`` is called with broadcastable 2-D arrays.
    """
    s, ws = gauss_legendre(q).mapped(*span_s)
    v, wv = gauss_legendre(q).mapped(*span_v)
    vals = f(s[:, None], v[None, :])
    return float(ws @ np.broadcast_to(vals, (s.size, v.size)) @ wv)


def composite_nodes(breakpoints, q: int):
    """Concatenated nodes and weights of a ``q``-point rule on every
    nonempty interval between consecutive ``breakpoints``."""
    bp = np.asarray(breakpoints, dtype=float)
    keep = bp[1:] > bp[:-1]
    a, b = bp[:-1][keep], bp[1:][keep]
    rule = gauss_legendre(q)
    half = 0.5 * (b - a)
    x = (0.5 * (a + b))[:, None] + half[:, None] * rule.nodes[None, :]
    w = half[:, None] * rule.weights[None, :]
    return x.ravel(), w.ravel()
