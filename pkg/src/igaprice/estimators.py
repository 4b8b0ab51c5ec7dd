"""scikit-learn style wrappers around the fitting and pricing routines.

``SplineRegressor`` fits a B-spline or NURBS curve to samples ``(X, y)``.
The pricers treat ``fit`` as "solve the PIDE" (no training data needed)
and ``predict`` as evaluation of the solution at ``X``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .fem1d import Discretization1D, price_put_1d
from .fem2d import Discretization2D, price_put_2d
from .fitting import fit_points
from .models import ConstantVol, FractionalVol, JumpSpec, ModelSpec
from .splines import open_knot_vector

__all__ = ["SplineRegressor", "MertonFEMPricer", "SVJDFEMPricer"]


def _column(X):
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected a single feature, got {X.shape[1]}")
        X = X[:, 0]
    return X


class SplineRegressor(RegressorMixin, BaseEstimator):
    """Least-squares spline curve ``y ~ f(x)`` on ``[x_min, x_max]``.

    Parameters
    ----------
    degree : int
    n_elements : int
        Number of uniform knot spans.
    domain : tuple or None
        Parameter interval; defaults to the range of the training inputs.
    repeated_knots : dict or None
        ``{location: multiplicity}`` for knots inserted with lowered continuity.
    rational : bool
        Optimise NURBS weights as well as control values.
    """

    def __init__(self, degree=3, n_elements=10, domain=None, repeated_knots=None, rational=False, max_iter=500):
        self.degree = degree
        self.n_elements = n_elements
        self.domain = domain
        self.repeated_knots = repeated_knots
        self.rational = rational
        self.max_iter = max_iter

    def fit(self, X, y):
        x = _column(X)
        y = check_array(y, ensure_2d=False, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError("X and y have inconsistent lengths")
        a, b = self.domain if self.domain is not None else (x.min(), x.max())
        if not b > a:
            raise ValueError("empty fitting domain")
        kv = open_knot_vector(a, b, self.n_elements, self.degree, self.repeated_knots or {})
        if x.size < kv.n:
            raise ValueError(f"need at least {kv.n} samples, got {x.size}")
        self.result_ = fit_points(kv, x, y, rational=self.rational, max_iter=self.max_iter)
        self.knot_vector_ = kv
        self.coef_ = self.result_.coefficients
        self.weights_ = self.result_.weights
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return self.result_(_column(X))


class MertonFEMPricer(RegressorMixin, BaseEstimator):
    """Galerkin put/call pricer for the Merton (or Black-Scholes) model."""

    def __init__(self, r=0.048, K=100.0, T=1.0, sigma=0.197, lam=0.19, mu_J=-0.055, sigma_J=1.1,
                 s_max=300.0, n_s=9, degree=3, strike_knot_multiplicity=None, n_tau=100, omega=1.0,
                 kind="put"):
        self.r = r
        self.K = K
        self.T = T
        self.sigma = sigma
        self.lam = lam
        self.mu_J = mu_J
        self.sigma_J = sigma_J
        self.s_max = s_max
        self.n_s = n_s
        self.degree = degree
        self.strike_knot_multiplicity = strike_knot_multiplicity
        self.n_tau = n_tau
        self.omega = omega
        self.kind = kind

    def model(self) -> ModelSpec:
        return ModelSpec(r=self.r, K=self.K, T=self.T, vol=ConstantVol(self.sigma),
                         jumps=JumpSpec(self.lam, self.mu_J, self.sigma_J))

    def fit(self, X=None, y=None):
        if self.kind not in ("put", "call"):
            raise ValueError("kind must be 'put' or 'call'")
        disc = Discretization1D(s_max=self.s_max, n_s=self.n_s, degree=self.degree,
                                strike_knot_multiplicity=self.strike_knot_multiplicity,
                                n_tau=self.n_tau, omega=self.omega)
        self.solution_ = price_put_1d(self.model(), disc, with_jumps=self.lam > 0)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        s = _column(X)
        sol = self.solution_
        return sol.put(s) if self.kind == "put" else sol.call(s)


class SVJDFEMPricer(RegressorMixin, BaseEstimator):
    """Tensor-product Galerkin pricer for the fractional SVJD model.

    ``predict`` takes an ``(n, 2)`` array of ``(s, v)`` points.
    """

    def __init__(self, r=0.0529, K=100.0, T=1.0, kappa=0.5, theta=0.19, sigma=0.51, rho=0.24, eps=0.003,
                 H=0.6, lam=0.074, mu_J=-0.1, sigma_J=0.4, s_max=300.0, v_max=3.0, n_s=18, n_v=None,
                 degree=2, n_tau=100, omega=1.0, kind="put"):
        self.r = r
        self.K = K
        self.T = T
        self.kappa = kappa
        self.theta = theta
        self.sigma = sigma
        self.rho = rho
        self.eps = eps
        self.H = H
        self.lam = lam
        self.mu_J = mu_J
        self.sigma_J = sigma_J
        self.s_max = s_max
        self.v_max = v_max
        self.n_s = n_s
        self.n_v = n_v
        self.degree = degree
        self.n_tau = n_tau
        self.omega = omega
        self.kind = kind

    def model(self) -> ModelSpec:
        vol = FractionalVol(self.kappa, self.theta, self.sigma, self.rho, self.eps, self.H)
        return ModelSpec(r=self.r, K=self.K, T=self.T, vol=vol, jumps=JumpSpec(self.lam, self.mu_J, self.sigma_J))

    def fit(self, X=None, y=None):
        if self.kind not in ("put", "call"):
            raise ValueError("kind must be 'put' or 'call'")
        disc = Discretization2D(s_max=self.s_max, v_max=self.v_max, n_s=self.n_s, n_v=self.n_v,
                                degree=self.degree, n_tau=self.n_tau, omega=self.omega)
        self.solution_ = price_put_2d(self.model(), disc)
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError("expected columns (s, v)")
        sol = self.solution_
        if self.kind == "put":
            return sol.put(X[:, 0], X[:, 1])
        return sol.call(X[:, 0], X[:, 1])
