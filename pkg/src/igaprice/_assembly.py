"""Shared 1-D Galerkin building blocks: quadrature-sampled bases, Gram-type
matrices and load vectors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import composite_nodes
from .splines import NurbsBasis1D


@dataclass(frozen=True)
class SampledBasis:
    """Basis values at the composite quadrature nodes of every knot span."""

    n: int
    x: np.ndarray  # (npts,)
    w: np.ndarray  # (npts,)
    cols: np.ndarray  # (npts, p+1) global function indices, -1 if not a basis function
    vals: np.ndarray  # (npts, p+1)
    ders: np.ndarray  # (npts, p+1)

    def dense(self, deriv: bool = False) -> np.ndarray:
        """``(npts, n)`` matrix of values (or derivatives)."""
        src = self.ders if deriv else self.vals
        out = np.zeros((self.x.size, self.n + 1))
        cols = np.where(self.cols < 0, self.n, self.cols)
        np.put_along_axis(out, cols, src, axis=1)
        return out[:, : self.n]


def sample_basis(basis: NurbsBasis1D, q: int, breakpoints=None) -> SampledBasis:
    bp = basis.knot_vector.breakpoints if breakpoints is None else breakpoints
    x, w = composite_nodes(bp, q)
    first, R, dR = basis.local(x)
    cols = first[:, None] + np.arange(basis.degree + 1)[None, :]
    valid = (cols >= 0) & (cols < basis.n)
    cols = np.where(valid, cols, -1)
    R = np.where(valid, R, 0.0)
    dR = np.where(valid, dR, 0.0)
    return SampledBasis(basis.n, x, w, cols, R, dR)


def bilinear(sb: SampledBasis, coeff=None, test_deriv=False, trial_deriv=False) -> np.ndarray:
    """Matrix ``B[i, j] = int coeff * D psi_j * D psi_i`` over the sampled domain.

    ``coeff`` is a callable of ``x``, an array matching ``sb.x``, or None for 1.
    """
    if coeff is None:
        c = sb.w
    elif callable(coeff):
        c = sb.w * np.asarray(coeff(sb.x), dtype=float)
    else:
        c = sb.w * np.asarray(coeff, dtype=float)
    test = sb.dense(test_deriv)
    trial = sb.dense(trial_deriv)
    return (test * c[:, None]).T @ trial


def load_vector(sb: SampledBasis, f) -> np.ndarray:
    """``b[i] = int f psi_i``."""
    fx = f(sb.x) if callable(f) else np.asarray(f, dtype=float)
    return sb.dense().T @ (sb.w * fx)
