"""L2 fitting of B-spline and NURBS curves in parameter space."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize

from ._assembly import sample_basis
from .splines import KnotVector, NurbsBasis1D, eval_nurbs_basis

__all__ = ["FitResult", "fit_bspline", "fit_nurbs", "fit_points", "fit_exact_nonsmooth", "mean_l2_error"]

log = logging.getLogger(__name__)

LOG_W_BOUNDS = (np.log(1e-8), np.log(1e8))


@dataclass(frozen=True)
class FitResult:
    coefficients: np.ndarray
    weights: np.ndarray
    mean_l2_error: float
    iterations: int = 0
    knot_vector: KnotVector | None = field(default=None, repr=False, compare=False)

    @property
    def basis(self) -> NurbsBasis1D:
        return NurbsBasis1D(self.knot_vector, self.weights)

    def __call__(self, xi):
        return eval_nurbs_basis(self.basis, xi)[0] @ self.coefficients

    def to_dict(self) -> dict:
        return {
            "degree": self.knot_vector.degree if self.knot_vector is not None else None,
            "knots": None if self.knot_vector is None else self.knot_vector.knots.tolist(),
            "coefficients": self.coefficients.tolist(),
            "weights": self.weights.tolist(),
            "mean_l2_error": self.mean_l2_error,
            "iterations": self.iterations,
        }


class _Sampler:
    """Target and B-spline values frozen at the error-quadrature nodes."""

    def __init__(self, kv: KnotVector, N, w, fx, length):
        self.kv = kv
        self.N = N
        self.w = w
        self.fx = fx
        self.length = length

    @classmethod
    def from_function(cls, kv: KnotVector, f, q: int):
        sb = sample_basis(NurbsBasis1D(kv), q)
        a, b = kv.domain
        return cls(kv, sb.dense(), sb.w, np.asarray(f(sb.x), dtype=float), b - a)

    @classmethod
    def from_points(cls, kv: KnotVector, x, y):
        """Discrete least squares; the error becomes the mean squared residual."""
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError("x and y must have the same length")
        kv.check_domain(x)
        N, _ = eval_nurbs_basis(NurbsBasis1D(kv), x)
        return cls(kv, np.atleast_2d(N), np.ones_like(x), y, float(x.size))

    def rational(self, weights):
        wN = self.N * weights[None, :]
        return wN / wN.sum(axis=1, keepdims=True)

    def solve(self, R):
        G = (R * self.w[:, None]).T @ R
        rhs = R.T @ (self.w * self.fx)
        try:
            coef = cho_solve(cho_factor(G), rhs)
        except LinAlgError as exc:
            raise RuntimeError("singular Gram matrix in L2 fit") from exc
        res = self.fx - R @ coef
        return coef, float(self.w @ res**2) / self.length


def mean_l2_error(f, g, domain, q: int = 8, breakpoints=None) -> float:
    """``(1/(b-a)) int_a^b (f - g)^2`` by composite Gauss-Legendre."""
    from .quadrature import composite_nodes

    a, b = domain
    bp = np.linspace(a, b, 65) if breakpoints is None else breakpoints
    x, w = composite_nodes(bp, q)
    return float(w @ (f(x) - g(x)) ** 2) / (b - a)


def fit_bspline(kv: KnotVector, f, q: int | None = None) -> FitResult:
    """Best L2 approximation of ``f`` by a B-spline over ``kv``.

    ``q`` is the number of Gauss points per knot span used both for the
    normal equations and for the error integral (default ``p + 3``).
    """
    q = kv.degree + 3 if q is None else q
    smp = _Sampler.from_function(kv, f, q)
    coef, err = smp.solve(smp.N)
    return FitResult(coef, np.ones(kv.n), err, 0, kv)


def fit_nurbs(
    kv: KnotVector,
    f,
    w0=None,
    q: int | None = None,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> FitResult:
    """L2 NURBS fit with optimised weights.

    For fixed weights the coefficients solve the weighted Gram system; the
    weights are then improved by bounded quasi-Newton steps on their
    logarithms. The returned weights are scaled to ``max(w) = 1``.
    """
    q = kv.degree + 3 if q is None else q
    return _optimise_weights(_Sampler.from_function(kv, f, q), w0, tol, max_iter)


def fit_points(kv: KnotVector, x, y, rational: bool = False, w0=None, tol: float = 1e-12, max_iter: int = 500) -> FitResult:
    """Least-squares fit to samples ``(x, y)``; ``mean_l2_error`` is the mean squared residual."""
    smp = _Sampler.from_points(kv, x, y)
    if rational:
        return _optimise_weights(smp, w0, tol, max_iter)
    coef, err = smp.solve(smp.N)
    return FitResult(coef, np.ones(kv.n), err, 0, kv)


def _optimise_weights(smp: _Sampler, w0, tol, max_iter) -> FitResult:
    kv = smp.kv
    w0 = np.ones(kv.n) if w0 is None else np.asarray(w0, dtype=float)
    if w0.shape != (kv.n,) or not np.all(w0 > 0):
        raise ValueError("initial weights must be n strictly positive values")
    lo, hi = LOG_W_BOUNDS

    def objective(logw):
        return smp.solve(smp.rational(np.exp(logw)))[1]

    x0 = np.clip(np.log(w0), lo, hi)
    start = objective(x0)
    scale = max(start, 1e-300)
    res = minimize(
        lambda z: objective(z) / scale,
        x0,
        method="L-BFGS-B",
        bounds=[(lo, hi)] * kv.n,
        options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-14, "eps": 1e-7},
    )
    best = res.x if res.fun * scale <= start else x0
    w = np.exp(best)
    w = w / w.max()
    coef, err = smp.solve(smp.rational(w))
    log.debug("nurbs fit: %s -> %s in %d iterations", start, err, res.nit)
    return FitResult(coef, w, err, int(res.nit), kv)


def fit_exact_nonsmooth(kv: KnotVector, f, kinks, q: int | None = None) -> FitResult:
    """B-spline fit of a piecewise polynomial with continuity defects at
    ``kinks``; every kink must be a knot of ``kv``."""
    kinks = np.atleast_1d(np.asarray(kinks, dtype=float))
    for k in kinks:
        if kv.multiplicity(k) == 0:
            raise ValueError(f"kink at {k} is not a knot of the basis")
    return fit_bspline(kv, f, q)
