"""Tensor-product Galerkin solver for the two-dimensional SVJD pricing PIDE.

The equation is written as

    f_tau - div(P grad f) + Q . grad f + r f + J(f) = 0

on ``(0, s_max) x (0, v_max)``. Every coefficient of ``P`` and ``Q`` is a
product of a function of ``s`` and a function of ``v``, so each matrix is a
sum of Kronecker products of one-dimensional integrals. Basis functions are
ordered with the ``s`` index running fastest, ``i = i_s + N_s * i_v``, hence
``M = kron(M_v, M_s)``.

Boundary conditions: ``f = K exp(-r tau)`` on ``s = 0`` (imposed through the
L2 projection of the edge data), homogeneous conormal derivative on the
other three edges.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, lu_factor, lu_solve

from ._assembly import bilinear, load_vector, sample_basis
from .fem1d import SolverError, jump_prime, put_payoff
from .models import V_FLOOR, FractionalVol, ModelSpec, beta, pq_coefficients
from .quadrature import default_order
from .splines import NurbsBasis1D, eval_nurbs_basis, open_knot_vector

__all__ = [
    "Discretization2D",
    "TensorBasis2D",
    "FemSystem2D",
    "PriceResult2D",
    "make_tensor_basis",
    "assemble_2d",
    "project_dirichlet",
    "project_initial_2d",
    "price_put_2d",
]


@dataclass(frozen=True)
class Discretization2D:
    s_max: float = 300.0
    v_max: float = 3.0
    n_s: int = 18
    n_v: int | None = None
    degree: int = 2
    degree_v: int | None = None
    strike_knot_multiplicity: int | None = None
    n_tau: int = 100
    omega: float = 1.0
    q: int | None = None
    q_jump: int = 8

    def __post_init__(self):
        if self.n_s < 1 or (self.n_v is not None and self.n_v < 1) or self.n_tau < 1:
            raise ValueError("element and step counts must be positive")
        if self.degree < 1 or (self.degree_v is not None and self.degree_v < 0):
            raise ValueError("need degree >= 1 in s")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")

    @property
    def nv(self) -> int:
        return self.n_s if self.n_v is None else int(self.n_v)

    @property
    def pv(self) -> int:
        return self.degree if self.degree_v is None else int(self.degree_v)

    @property
    def multiplicity(self) -> int:
        m = self.strike_knot_multiplicity
        return self.degree if m is None else int(m)


@dataclass(frozen=True)
class TensorBasis2D:
    """``psi_{i_s + N_s i_v}(s, v) = psi^s_{i_s}(s) psi^v_{i_v}(v)``."""

    basis_s: NurbsBasis1D
    basis_v: NurbsBasis1D

    @property
    def N1(self) -> int:
        return self.basis_s.n

    @property
    def N2(self) -> int:
        return self.basis_v.n

    @property
    def N(self) -> int:
        return self.N1 * self.N2

    def index(self, i_s, i_v):
        return np.asarray(i_s) + self.N1 * np.asarray(i_v)

    def split(self, i):
        i = np.asarray(i)
        return i % self.N1, i // self.N1

    def values(self, s, v) -> np.ndarray:
        """``(npts, N)`` matrix of 2-D basis values at paired points."""
        bs, _ = eval_nurbs_basis(self.basis_s, np.atleast_1d(s))
        bv, _ = eval_nurbs_basis(self.basis_v, np.atleast_1d(v))
        return (bv[:, :, None] * bs[:, None, :]).reshape(bs.shape[0], -1)


def make_tensor_basis(disc: Discretization2D, K: float) -> TensorBasis2D:
    if not 0 < K < disc.s_max:
        raise ValueError("strike must lie inside (0, s_max)")
    kv_s = open_knot_vector(0.0, disc.s_max, disc.n_s, disc.degree, {K: disc.multiplicity})
    kv_v = open_knot_vector(0.0, disc.v_max, disc.nv, disc.pv)
    return TensorBasis2D(NurbsBasis1D(kv_s), NurbsBasis1D(kv_v))


@dataclass
class FemSystem2D:
    basis: TensorBasis2D
    M: np.ndarray
    A: np.ndarray
    J: np.ndarray
    A_psi: np.ndarray | None
    dirichlet_set: np.ndarray
    M_D: np.ndarray
    edge_load: np.ndarray  # int psi_j|_{s=0} dv
    model: ModelSpec
    factors: dict = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return self.M.shape[0]

    @property
    def free(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.N), self.dirichlet_set)

    def operator(self, tau: float) -> np.ndarray:
        op = self.A + self.J
        if self.A_psi is not None:
            op = op + self.model.psi_profile(tau) * self.A_psi
        return op


def _v_coefficients(model: ModelSpec, v, tau=0.0):
    """Functions of ``v`` multiplying each term of the bilinear form."""
    vol = model.vol
    p, q, dq = pq_coefficients(vol, v, tau, None)
    rho = vol.rho
    sq = np.sqrt(v)
    sq_floor = np.sqrt(np.maximum(v, V_FLOOR))
    lb = model.jumps.lam * beta(model.jumps)
    return {
        "mixed": 0.5 * rho * q * sq,
        "vv": 0.5 * q * q,
        "conv_s": -(model.r - lb) + v + 0.5 * rho * dq * sq + 0.25 * rho * q / sq_floor,
        "conv_v": -p + 0.5 * rho * q * sq + q * dq,
    }


def assemble_2d(model: ModelSpec, tb: TensorBasis2D, q: int | None = None, q_jump: int = 8) -> FemSystem2D:
    """Mass, stiffness and jump matrices as sums of Kronecker products."""
    if not isinstance(model.vol, FractionalVol):
        raise TypeError("the 2-D solver needs a stochastic-volatility model")
    qs = default_order(tb.basis_s.degree) if q is None else q
    qv = max(default_order(tb.basis_v.degree) + 1, 4) if q is None else q
    ss = sample_basis(tb.basis_s, qs)
    sv = sample_basis(tb.basis_v, qv)
    x, v = ss.x, sv.x

    Ms = bilinear(ss)
    S2 = bilinear(ss, 0.5 * x * x, test_deriv=True, trial_deriv=True)
    S_trial = bilinear(ss, x, trial_deriv=True)  # int s psi_j' psi_i
    S_test = S_trial.T  # int s psi_j psi_i'
    Mv = bilinear(sv)
    c = _v_coefficients(model, v)
    kron = np.kron
    A = kron(bilinear(sv, v), S2)
    A += kron(bilinear(sv, c["mixed"], test_deriv=True), S_trial)
    A += kron(bilinear(sv, c["mixed"], trial_deriv=True), S_test)
    A += kron(bilinear(sv, c["vv"], test_deriv=True, trial_deriv=True), Ms)
    A += kron(bilinear(sv, c["conv_s"]), S_trial)
    A += kron(bilinear(sv, c["conv_v"], trial_deriv=True), Ms)
    A += model.r * kron(Mv, Ms)
    M = kron(Mv, Ms)

    A_psi = None
    vol = model.vol
    if model.has_psi and vol.H != 0.5:
        # p(v) gains psi(tau) (H - 1/2) sigma sqrt(v); Q_v carries -p(v)
        A_psi = kron(bilinear(sv, -(vol.H - 0.5) * vol.sigma * np.sqrt(v), trial_deriv=True), Ms)

    if model.jumps.lam > 0:
        Jp = jump_prime(tb.basis_s, model.jumps, qs, q_jump)
        J = model.jumps.lam * (M - kron(Mv, Jp))
    else:
        J = np.zeros_like(M)

    edge_s, _ = eval_nurbs_basis(tb.basis_s, 0.0)
    nz = np.flatnonzero(edge_s)
    if nz.size != 1:
        raise ValueError("s-basis must have exactly one function nonzero at s = 0")
    i_s = int(nz[0])
    dset = tb.index(i_s, np.arange(tb.N2))
    M_D = edge_s[i_s] ** 2 * Mv
    edge_load = edge_s[i_s] * load_vector(sv, np.ones_like(v))
    return FemSystem2D(tb, M, A, J, A_psi, dset, M_D, edge_load, model)


def project_dirichlet(system: FemSystem2D, tau: float) -> np.ndarray:
    """Coefficients of the ``s = 0`` edge functions: solves ``M_D f_D = c(tau)``."""
    m = system.model
    c = m.K * math.exp(-m.r * tau) * system.edge_load
    try:
        return np.linalg.solve(system.M_D, c)
    except np.linalg.LinAlgError as exc:
        raise ValueError("edge mass matrix is singular; invalid v-basis") from exc


def project_initial_2d(tb: TensorBasis2D, payoff, q: int | None = None) -> np.ndarray:
    """L2 projection of a payoff that depends on ``s`` only.

    ``Phi = kron(int psi^v, int psi^s payoff)`` and ``M = kron(M_v, M_s)``,
    so the solve factorises into two one-dimensional solves.
    """
    qs = (default_order(tb.basis_s.degree) if q is None else q) + 2
    ss = sample_basis(tb.basis_s, qs)
    sv = sample_basis(tb.basis_v, qs)
    Ms, Mv = bilinear(ss), bilinear(sv)
    phi_s = load_vector(ss, payoff)
    phi_v = load_vector(sv, np.ones_like(sv.x))
    coef_s = np.linalg.solve(Ms, phi_s)
    coef_v = np.linalg.solve(Mv, phi_v)
    return np.kron(coef_v, coef_s)


@dataclass(frozen=True)
class PriceResult2D:
    basis: TensorBasis2D
    taus: np.ndarray
    coefficients: np.ndarray  # (n_tau + 1, N)
    K: float
    r: float

    def _step(self, tau):
        if tau is None:
            return len(self.taus) - 1
        idx = int(np.argmin(np.abs(self.taus - tau)))
        if not math.isclose(self.taus[idx], tau, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"tau={tau} is not on the time grid")
        return idx

    def _grid(self, i):
        return self.coefficients[i].reshape(self.basis.N2, self.basis.N1)

    def put(self, s, v, tau=None):
        """Put price at paired points ``(s, v)``; ``v = 0`` is allowed."""
        i = self._step(tau)
        s, v = np.broadcast_arrays(np.asarray(s, float), np.asarray(v, float))
        bs, _ = eval_nurbs_basis(self.basis.basis_s, s.ravel())
        bv, _ = eval_nurbs_basis(self.basis.basis_v, v.ravel())
        out = np.einsum("ki,ij,kj->k", bv, self._grid(i), bs)
        return out.reshape(s.shape) if s.ndim else float(out[0])

    def surface(self, s_grid, v_grid, tau=None):
        """Prices on the grid ``v_grid x s_grid`` (rows follow ``v``)."""
        i = self._step(tau)
        bs, _ = eval_nurbs_basis(self.basis.basis_s, np.atleast_1d(s_grid))
        bv, _ = eval_nurbs_basis(self.basis.basis_v, np.atleast_1d(v_grid))
        return bv @ self._grid(i) @ bs.T

    def call(self, s, v, tau=None):
        i = self._step(tau)
        s = np.asarray(s, dtype=float)
        return self.put(s, v, self.taus[i]) + s - self.K * math.exp(-self.r * self.taus[i])

    __call__ = put


def price_put_2d(model: ModelSpec, disc: Discretization2D | None = None) -> PriceResult2D:
    """Implicit theta-scheme run of the 2-D put problem."""
    disc = Discretization2D() if disc is None else disc
    tb = make_tensor_basis(disc, model.K)
    system = assemble_2d(model, tb, disc.q, disc.q_jump)
    d_tau = model.T / disc.n_tau
    taus = np.arange(disc.n_tau + 1) * d_tau
    coeffs = np.empty((disc.n_tau + 1, tb.N))
    coeffs[0] = project_initial_2d(tb, put_payoff(model.K), disc.q)
    D = system.dirichlet_set
    free = system.free
    w = disc.omega
    lu = None
    for i in range(1, disc.n_tau + 1):
        tau = taus[i]
        if lu is None or system.A_psi is not None:
            L_op = system.operator(tau)
            L = system.M + d_tau * w * L_op
            try:
                lu = lu_factor(L[np.ix_(free, free)], check_finite=True)
            except (LinAlgError, ValueError) as exc:
                raise SolverError(f"theta-scheme solve failed at step {i}") from exc
            if np.any(np.diag(lu[0]) == 0):
                raise SolverError(f"singular theta-scheme matrix at step {i}")
        prev = coeffs[i - 1]
        rhs = system.M[free] @ prev
        if w < 1.0:
            rhs -= (1.0 - w) * d_tau * (system.operator(taus[i - 1])[free] @ prev)
        fD = project_dirichlet(system, tau)
        rhs -= L[np.ix_(free, D)] @ fD
        out = np.empty(tb.N)
        out[D] = fD
        out[free] = lu_solve(lu, rhs)
        if not np.all(np.isfinite(out)):
            raise SolverError(f"non-finite coefficients at step {i}")
        coeffs[i] = out
    return PriceResult2D(tb, taus, coeffs, model.K, model.r)
