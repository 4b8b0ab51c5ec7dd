"""Isogeometric (B-spline/NURBS) Galerkin pricing of jump-diffusion options."""
from .estimators import MertonFEMPricer, SplineRegressor, SVJDFEMPricer
from .fem1d import Discretization1D, price_put_1d
from .fem2d import Discretization2D, price_put_2d
from .fitting import fit_bspline, fit_exact_nonsmooth, fit_nurbs, fit_points
from .models import ModelSpec, effective_bates, model_from_config, preset
from .reference import bs_put, heston_bates_put, mc_fsvjd_put, mc_merton_put, merton_put
from .splines import KnotVector, NurbsBasis1D, NurbsCurve, open_knot_vector

__version__ = "0.1.0"

__all__ = [
    "KnotVector", "NurbsBasis1D", "NurbsCurve", "open_knot_vector",
    "fit_bspline", "fit_nurbs", "fit_points", "fit_exact_nonsmooth",
    "ModelSpec", "preset", "model_from_config", "effective_bates",
    "bs_put", "merton_put", "heston_bates_put", "mc_merton_put", "mc_fsvjd_put",
    "Discretization1D", "price_put_1d", "Discretization2D", "price_put_2d",
    "SplineRegressor", "MertonFEMPricer", "SVJDFEMPricer",
]
