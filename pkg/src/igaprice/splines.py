"""B-spline and NURBS bases and curves in one parametric dimension.

Evaluation follows the Cox-de Boor recursion restricted to the single
active knot span, so every point costs O(p^2) regardless of the number of
basis functions. All routines are vectorised over the evaluation points.
"""
from __future__ import annotations

import json
from typing import Iterable

import numpy as np

__all__ = [
    "KnotVector",
    "NurbsBasis1D",
    "NurbsCurve",
    "eval_bspline_basis",
    "eval_bspline_derivs",
    "eval_nurbs_basis",
    "eval_curve",
    "param_to_physical",
    "make_geometry",
    "open_knot_vector",
]


class KnotVector:
    """Nondecreasing knot sequence together with a polynomial degree.

    Parameters
    ----------
    knots : array_like
        Knot values ``c_1 <= ... <= c_m``.
    degree : int
        Polynomial degree ``p``; the number of basis functions is
        ``n = m - p - 1``.
    """

    def __init__(self, knots: Iterable[float], degree: int):
        knots = np.array(knots, dtype=float).ravel()
        degree = int(degree)
        if degree < 0:
            raise ValueError(f"degree must be nonnegative, got {degree}")
        if knots.size < 2 or not np.all(np.isfinite(knots)):
            raise ValueError("knot vector needs at least two finite values")
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be nondecreasing")
        n = knots.size - degree - 1
        if n < degree + 1:
            raise ValueError(
                f"{knots.size} knots give n={n} basis functions; need n >= p+1 = {degree + 1}"
            )
        values, counts = np.unique(knots, return_counts=True)
        if np.any(counts > degree + 1):
            bad = values[counts > degree + 1]
            raise ValueError(f"knot multiplicity exceeds p+1 at {bad.tolist()}")
        if knots[0] == knots[-1]:
            raise ValueError("knot vector spans an empty parameter interval")
        knots.flags.writeable = False
        self.knots = knots
        self.degree = degree
        # padded copy lets the span recursion run near the ends of non-open vectors
        self._padded = np.concatenate(
            [np.full(degree, knots[0]), knots, np.full(degree, knots[-1])]
        )
        self._last_span = int(np.flatnonzero(knots[:-1] < knots[-1])[-1])

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return self.knots.size - self.degree - 1

    @property
    def m(self) -> int:
        return self.knots.size

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def is_open(self) -> bool:
        p = self.degree
        k = self.knots
        return bool(
            np.all(k[: p + 1] == k[0])
            and np.all(k[-p - 1 :] == k[-1])
            and k[p + 1] > k[0]
            and k[-p - 2] < k[-1]
        )

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knot values."""
        return np.unique(self.knots)

    @property
    def spans(self) -> np.ndarray:
        """Nonzero-length knot spans as an ``(n_spans, 2)`` array."""
        bp = self.breakpoints
        return np.column_stack([bp[:-1], bp[1:]])

    def multiplicity(self, value: float) -> int:
        return int(np.count_nonzero(self.knots == value))

    def greville(self) -> np.ndarray:
        """Greville abscissae (averages of ``p`` consecutive knots)."""
        p, k = self.degree, self.knots
        if p == 0:
            return 0.5 * (k[:-1] + k[1:])
        c = np.cumsum(np.concatenate([[0.0], k]))
        return (c[p + 1 : p + 1 + self.n] - c[1 : 1 + self.n]) / p

    def find_span(self, xi) -> np.ndarray:
        """Index ``k`` with ``c_k <= xi < c_{k+1}`` (0-based, nonzero-length span).

        The right end of the domain maps to the last nonempty span.
        """
        xi = np.asarray(xi, dtype=float)
        self.check_domain(xi)
        k = np.searchsorted(self.knots, xi, side="right") - 1
        return np.minimum(k, self._last_span)

    def check_domain(self, xi) -> None:
        a, b = self.domain
        xi = np.asarray(xi)
        if np.any(xi < a) or np.any(xi > b) or np.any(np.isnan(xi)):
            raise ValueError(f"parameter value outside [{a}, {b}]")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, KnotVector)
            and self.degree == other.degree
            and np.array_equal(self.knots, other.knots)
        )

    def __hash__(self):
        return hash((self.degree, self.knots.tobytes()))

    def __repr__(self) -> str:
        return f"KnotVector(degree={self.degree}, knots={self.knots.tolist()})"


def open_knot_vector(a, b, n_elements, degree, repeated=None) -> KnotVector:
    """Open knot vector with ``n_elements`` uniform spans on ``[a, b]``.

    ``repeated`` maps interior knot values to their multiplicity. A value that
    is not already a uniform breakpoint is inserted, which makes the vector
    non-uniform.
    """
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    if not b > a:
        raise ValueError("need b > a")
    interior = list(np.linspace(a, b, int(n_elements) + 1)[1:-1])
    mult = {float(x): 1 for x in interior}
    tol = 1e-12 * (b - a)
    for value, count in (repeated or {}).items():
        value = float(value)
        if not a < value < b:
            raise ValueError(f"repeated knot {value} not inside ({a}, {b})")
        if not 1 <= count <= degree + 1:
            raise ValueError(f"multiplicity {count} not in [1, {degree + 1}]")
        near = [x for x in mult if abs(x - value) <= tol]
        for x in near:
            del mult[x]
        mult[value] = int(count)
    inner = [x for x in sorted(mult) for _ in range(mult[x])]
    knots = [a] * (degree + 1) + inner + [b] * (degree + 1)
    return KnotVector(knots, degree)


def _span_values(kv: KnotVector, span, xi, with_derivs=False):
    """Nonzero B-spline values on each point's span.

    Returns ``(first, N)`` or ``(first, N, dN)`` where ``N[:, r]`` is
    ``N_{first + r, p}``; ``first`` may be negative for non-open vectors.
    """
    p = kv.degree
    kp = kv._padded
    s = span + p  # index into padded knots
    npts = xi.shape[0]
    N = np.zeros((npts, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((npts, p + 1))
    right = np.zeros((npts, p + 1))
    lower = None
    for j in range(1, p + 1):
        if j == p:
            lower = N[:, :p].copy()
        left[:, j] = xi - kp[s + 1 - j]
        right[:, j] = kp[s + j] - xi
        saved = np.zeros(npts)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    first = span - p
    if not with_derivs:
        return first, N
    dN = np.zeros((npts, p + 1))
    if p > 0:
        for r in range(p + 1):
            i = s - p + r  # padded index of N_{first + r}
            if r >= 1:
                den = kp[i + p] - kp[i]
                dN[:, r] += np.where(den > 0, p * lower[:, r - 1] / np.where(den > 0, den, 1.0), 0.0)
            if r <= p - 1:
                den = kp[i + p + 1] - kp[i + 1]
                dN[:, r] -= np.where(den > 0, p * lower[:, r] / np.where(den > 0, den, 1.0), 0.0)
    return first, N, dN


def _scatter(kv: KnotVector, first, local) -> np.ndarray:
    npts, width = local.shape
    out = np.zeros((npts, kv.n + 2 * kv.degree))
    cols = first[:, None] + kv.degree + np.arange(width)[None, :]
    np.put_along_axis(out, cols, local, axis=1)
    return out[:, kv.degree : kv.degree + kv.n]


def _as_points(xi):
    arr = np.asarray(xi, dtype=float)
    return arr.reshape(-1), arr.ndim == 0


def local_bspline(kv: KnotVector, xi, with_derivs=False):
    """Span-local B-spline values, see :func:`_span_values`."""
    pts, _ = _as_points(xi)
    span = kv.find_span(pts)
    return _span_values(kv, span, pts, with_derivs)


def eval_bspline_basis(kv: KnotVector, xi) -> np.ndarray:
    """All ``n`` B-spline basis values ``N_{i,p}(xi)``.

    Returns a vector for scalar ``xi`` and an ``(npts, n)`` array otherwise.
    """
    pts, scalar = _as_points(xi)
    first, N = local_bspline(kv, pts)
    out = _scatter(kv, first, N)
    return out[0] if scalar else out


def eval_bspline_derivs(kv: KnotVector, xi) -> np.ndarray:
    """First derivatives ``N'_{i,p}(xi)`` of all basis functions."""
    pts, scalar = _as_points(xi)
    first, _, dN = local_bspline(kv, pts, with_derivs=True)
    out = _scatter(kv, first, dN)
    return out[0] if scalar else out


class NurbsBasis1D:
    """Rational basis ``R_i = w_i N_i / sum_j w_j N_j`` over a knot vector.

    With ``weights=None`` all weights are one and the basis is the plain
    B-spline basis.
    """

    def __init__(self, knot_vector: KnotVector, weights=None):
        if weights is None:
            weights = np.ones(knot_vector.n)
        weights = np.array(weights, dtype=float).ravel()
        if weights.shape != (knot_vector.n,):
            raise ValueError(
                f"expected {knot_vector.n} weights, got {weights.size}"
            )
        if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
            raise ValueError("NURBS weights must be finite and strictly positive")
        weights.flags.writeable = False
        self.knot_vector = knot_vector
        self.weights = weights
        self.is_polynomial = bool(np.all(weights == weights[0]))

    @property
    def n(self) -> int:
        return self.knot_vector.n

    @property
    def degree(self) -> int:
        return self.knot_vector.degree

    @property
    def domain(self):
        return self.knot_vector.domain

    def local(self, xi, with_derivs=True):
        """Span-local values: ``(first, R, dR)`` with ``R[:, r] = R_{first+r}``."""
        kv = self.knot_vector
        pts, _ = _as_points(xi)
        first, N, dN = local_bspline(kv, pts, with_derivs=True)
        if self.is_polynomial:
            return (first, N, dN) if with_derivs else (first, N)
        p = kv.degree
        idx = first[:, None] + np.arange(p + 1)[None, :]
        # padded functions of non-open vectors are not part of the basis
        w = np.where((idx >= 0) & (idx < kv.n), self.weights[np.clip(idx, 0, kv.n - 1)], 0.0)
        wN = w * N
        W = wN.sum(axis=1, keepdims=True)
        R = wN / W
        if not with_derivs:
            return first, R
        wdN = w * dN
        dW = wdN.sum(axis=1, keepdims=True)
        dR = wdN / W - R * dW / W
        return first, R, dR

    def __call__(self, xi):
        return eval_nurbs_basis(self, xi)[0]

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "knots": self.knot_vector.knots.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NurbsBasis1D":
        kv = KnotVector(data["knots"], data["degree"])
        return cls(kv, data.get("weights"))


def eval_nurbs_basis(basis: NurbsBasis1D, xi):
    """Values and first derivatives of all ``n`` NURBS basis functions."""
    pts, scalar = _as_points(xi)
    first, R, dR = basis.local(pts)
    vals = _scatter(basis.knot_vector, first, R)
    ders = _scatter(basis.knot_vector, first, dR)
    if scalar:
        return vals[0], ders[0]
    return vals, ders


class NurbsCurve:
    """Curve ``C(xi) = sum_i R_i(xi) P_i`` with control points in R^d."""

    def __init__(self, basis: NurbsBasis1D, control_points):
        pts = np.array(control_points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] != basis.n:
            raise ValueError(
                f"{pts.shape[0]} control points for {basis.n} basis functions"
            )
        pts.flags.writeable = False
        self.basis = basis
        self.control_points = pts

    @property
    def dim(self) -> int:
        return self.control_points.shape[1]

    def to_dict(self) -> dict:
        d = self.basis.to_dict()
        d["points"] = self.control_points.tolist()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "NurbsCurve":
        return cls(NurbsBasis1D.from_dict(data), data["points"])

    @classmethod
    def from_json(cls, text: str) -> "NurbsCurve":
        return cls.from_dict(json.loads(text))


def eval_curve(curve: NurbsCurve, xi) -> np.ndarray:
    """Point(s) on the curve; shape ``(d,)`` for scalar ``xi``."""
    pts, scalar = _as_points(xi)
    first, R = curve.basis.local(pts, with_derivs=False)
    p = curve.basis.degree
    idx = first[:, None] + np.arange(p + 1)[None, :]
    valid = (idx >= 0) & (idx < curve.basis.n)
    P = curve.control_points[np.clip(idx, 0, curve.basis.n - 1)]
    out = np.einsum("ij,ijk->ik", np.where(valid, R, 0.0), P)
    return out[0] if scalar else out


def make_geometry(basis: NurbsBasis1D, a: float, b: float) -> NurbsCurve:
    """Scalar geometry map onto ``[a, b]`` with control abscissae at the
    (affinely rescaled) Greville points of ``basis``."""
    g = basis.knot_vector.greville()
    c1, cm = basis.domain
    x = a + (b - a) * (g - c1) / (cm - c1)
    return _checked_geometry(NurbsCurve(basis, x[:, None]))


def _checked_geometry(curve: NurbsCurve) -> NurbsCurve:
    x = curve.control_points[:, 0]
    if np.any(np.diff(x) <= 0):
        raise ValueError("geometry control abscissae must be strictly increasing")
    return curve


def param_to_physical(curve: NurbsCurve, xi):
    """Physical coordinate ``x(xi)`` and Jacobian ``dx/dxi`` of a 1-D geometry.

    Only the first coordinate of the control points is used.
    """
    _checked_geometry(curve)
    pts, scalar = _as_points(xi)
    first, R, dR = curve.basis.local(pts)
    p = curve.basis.degree
    idx = first[:, None] + np.arange(p + 1)[None, :]
    valid = (idx >= 0) & (idx < curve.basis.n)
    xc = curve.control_points[np.clip(idx, 0, curve.basis.n - 1), 0]
    x = np.sum(np.where(valid, R, 0.0) * xc, axis=1)
    jac = np.sum(np.where(valid, dR, 0.0) * xc, axis=1)
    if scalar:
        return float(x[0]), float(jac[0])
    return x, jac
