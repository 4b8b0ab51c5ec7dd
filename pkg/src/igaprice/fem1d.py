"""Galerkin solver for the localised one-dimensional Merton pricing PIDE.

On ``(0, s_max)`` the put price solves

    f_tau - (P f_s)_s + Q f_s + R f + J(f) = 0,
    P = sigma^2 s^2 / 2,  Q = (lambda*beta - r + sigma^2) s,  R = r,

with ``f(tau, 0) = K exp(-r tau)``, a homogeneous Neumann condition at
``s_max`` and the payoff ``(K - s)^+`` at ``tau = 0``. The semi-discrete
system ``M f' + (A + J) f = 0`` is advanced by the theta scheme with the
Dirichlet coefficient eliminated.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, lu_factor, lu_solve

from ._assembly import SampledBasis, bilinear, load_vector, sample_basis
from .models import JumpSpec, ModelSpec, beta
from .quadrature import composite_nodes, default_order, gauss_legendre
from .splines import NurbsBasis1D, eval_nurbs_basis, open_knot_vector

__all__ = [
    "Discretization1D",
    "FemSystem1D",
    "PriceResult1D",
    "SolverError",
    "make_basis",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_jump",
    "jump_prime",
    "project_initial",
    "build_system",
    "step_theta",
    "price_put_1d",
    "price_call_1d",
    "mean_l2_metric",
]

log = logging.getLogger(__name__)

# half-width, in standard deviations, of the log-normal kernel window
KERNEL_WIDTH = 8.5


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Discretization1D:
    s_max: float = 300.0
    n_s: int = 9
    degree: int = 3
    strike_knot_multiplicity: int | None = None
    n_tau: int = 100
    omega: float = 1.0
    q: int | None = None
    q_jump: int = 8

    def __post_init__(self):
        if self.n_s < 1 or self.n_tau < 1:
            raise ValueError("n_s and n_tau must be positive")
        if self.degree < 1:
            raise ValueError("the solver needs degree >= 1")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")
        m = self.multiplicity
        if not 1 <= m <= self.degree + 1:
            raise ValueError(f"strike multiplicity {m} not in [1, {self.degree + 1}]")

    @property
    def multiplicity(self) -> int:
        m = self.strike_knot_multiplicity
        return self.degree if m is None else int(m)

    @property
    def quad_order(self) -> int:
        return default_order(self.degree) if self.q is None else int(self.q)


def make_basis(disc: Discretization1D, K: float) -> NurbsBasis1D:
    """Open uniform B-spline basis on ``[0, s_max]`` with the strike knot repeated."""
    if not 0 < K < disc.s_max:
        raise ValueError("strike must lie inside (0, s_max)")
    kv = open_knot_vector(0.0, disc.s_max, disc.n_s, disc.degree, {K: disc.multiplicity})
    return NurbsBasis1D(kv)


def _sampled(basis: NurbsBasis1D, q) -> SampledBasis:
    return sample_basis(basis, default_order(basis.degree) if q is None else q)


def assemble_mass(basis: NurbsBasis1D, q: int | None = None) -> np.ndarray:
    """``M[i, j] = int psi_j psi_i ds``."""
    return bilinear(_sampled(basis, q))


def assemble_stiffness(basis: NurbsBasis1D, model: ModelSpec, q: int | None = None) -> np.ndarray:
    """Diffusion, convection and reaction part of the operator."""
    if not model.is_constant_vol:
        raise TypeError("the 1-D solver handles constant-volatility models only; use fem2d")
    sb = _sampled(basis, q)
    sig2 = model.vol.sigma**2
    r = model.r
    lb = model.jumps.lam * beta(model.jumps)
    A = bilinear(sb, 0.5 * sig2 * sb.x**2, test_deriv=True, trial_deriv=True)
    A += bilinear(sb, (lb - r + sig2) * sb.x, trial_deriv=True)
    A += r * bilinear(sb)
    return A


def _kernel_window(s, jumps: JumpSpec, s_max):
    m = np.log(s) + jumps.mu_J
    lo = m - KERNEL_WIDTH * jumps.sigma_J
    hi = np.minimum(m + KERNEL_WIDTH * jumps.sigma_J, math.log(s_max))
    return m, lo, hi


def _inner_integrals(basis: NurbsBasis1D, s, jumps: JumpSpec, s_max, q_inner):
    """``I[k, j] = int_0^s_max psi_j(x) phi(x / s_k) / s_k dx`` for each node ``s_k``.

    Integrated in ``u = log x`` where the kernel is a Gaussian of width
    ``sigma_J``; pieces break at the knots and are no longer than
    ``sigma_J / 2``.
    """
    n = basis.n
    out = np.zeros((s.size, n))
    if jumps.sigma_J == 0:
        x = s * math.exp(jumps.mu_J)
        inside = x <= s_max
        vals, _ = eval_nurbs_basis(basis, np.minimum(x, s_max))
        out[inside] = vals[inside]
        return out
    sd = jumps.sigma_J
    logk = np.log(basis.knot_vector.breakpoints[1:])
    rule = gauss_legendre(q_inner)
    m, lo, hi = _kernel_window(s, jumps, s_max)
    all_u, all_w, rows = [], [], []
    for k in range(s.size):
        if hi[k] <= lo[k]:
            continue
        cuts = logk[(logk > lo[k]) & (logk < hi[k])]
        edges = np.concatenate([[lo[k]], cuts, [hi[k]]])
        pieces = np.maximum(1, np.ceil(np.diff(edges) / (0.5 * sd)).astype(int))
        fine = np.concatenate(
            [np.linspace(a, b, c + 1)[:-1] for a, b, c in zip(edges[:-1], edges[1:], pieces)]
            + [[edges[-1]]]
        )
        a, b = fine[:-1], fine[1:]
        half = 0.5 * (b - a)
        u = (0.5 * (a + b))[:, None] + half[:, None] * rule.nodes[None, :]
        w = half[:, None] * rule.weights[None, :]
        z = (u - m[k]) / sd
        w = w * np.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))
        all_u.append(u.ravel())
        all_w.append(w.ravel())
        rows.append(np.full(u.size, k))
    if not all_u:
        return out
    u = np.concatenate(all_u)
    w = np.concatenate(all_w)
    rows = np.concatenate(rows)
    x = np.minimum(np.exp(u), s_max)
    first, R = basis.local(x, with_derivs=False)
    cols = first[:, None] + np.arange(basis.degree + 1)[None, :]
    valid = (cols >= 0) & (cols < n)
    contrib = np.where(valid, R, 0.0) * w[:, None]
    np.add.at(out, (np.broadcast_to(rows[:, None], cols.shape)[valid], cols[valid]), contrib[valid])
    return out


def jump_prime(
    basis: NurbsBasis1D, jumps: JumpSpec, q: int | None = None, q_inner: int = 8
) -> np.ndarray:
    """``J'[i, j] = int int psi_j(x) psi_i(s) phi(x/s) / s dx ds`` over ``[0, s_max]^2``."""
    s_max = basis.domain[1]
    sb = _sampled(basis, q)
    inner = _inner_integrals(basis, sb.x, jumps, s_max, q_inner)
    return (sb.dense() * sb.w[:, None]).T @ inner


def assemble_jump(
    basis: NurbsBasis1D, jumps: JumpSpec, q: int | None = None, q_inner: int = 8
) -> np.ndarray:
    """Jump matrix ``J = lambda (M - J')``."""
    n = basis.n
    if jumps.lam == 0:
        return np.zeros((n, n))
    return jumps.lam * (assemble_mass(basis, q) - jump_prime(basis, jumps, q, q_inner))


def put_payoff(K):
    return lambda s: np.maximum(K - np.asarray(s, dtype=float), 0.0)


def project_initial(basis: NurbsBasis1D, payoff, q: int | None = None, mass=None) -> np.ndarray:
    """L2 projection of the payoff: solves ``M f(0) = Phi``.

    Quadrature runs span by span, so payoffs whose kinks sit on knots are
    integrated exactly.
    """
    sb = sample_basis(basis, (default_order(basis.degree) if q is None else q) + 2)
    M = bilinear(sb) if mass is None else mass
    phi = load_vector(sb, payoff)
    try:
        return np.linalg.solve(M, phi)
    except np.linalg.LinAlgError as exc:
        raise SolverError("singular mass matrix in initial projection") from exc


@dataclass
class FemSystem1D:
    basis: NurbsBasis1D
    M: np.ndarray
    A: np.ndarray
    J: np.ndarray
    dirichlet: Callable[[float], float]
    dirichlet_index: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return self.M.shape[0]

    def operator(self) -> np.ndarray:
        return self.A + self.J

    def factor(self, omega: float, d_tau: float):
        """LU factors of the interior block of ``M + d_tau omega (A + J)``."""
        key = (float(omega), float(d_tau))
        if key not in self._cache:
            L = self.M + d_tau * omega * self.operator()
            free = self.free
            block = L[np.ix_(free, free)]
            try:
                with np.errstate(all="raise"):
                    lu = lu_factor(block, check_finite=True)
            except (LinAlgError, FloatingPointError, ValueError) as exc:
                raise SolverError(
                    f"theta-scheme matrix is singular (cond ~ {np.linalg.cond(block):.3e})"
                ) from exc
            if np.any(np.diag(lu[0]) == 0):
                raise SolverError(
                    f"theta-scheme matrix is singular (cond ~ {np.linalg.cond(block):.3e})"
                )
            self._cache[key] = (L, lu)
        return self._cache[key]

    @property
    def free(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.N), [self.dirichlet_index])


def build_system(model: ModelSpec, basis: NurbsBasis1D, q=None, q_inner=8, with_jumps=True) -> FemSystem1D:
    M = assemble_mass(basis, q)
    A = assemble_stiffness(basis, model, q)
    if with_jumps and model.jumps.lam > 0:
        J = model.jumps.lam * (M - jump_prime(basis, model.jumps, q, q_inner))
    else:
        J = np.zeros_like(M)
    K, r = model.K, model.r
    return FemSystem1D(basis, M, A, J, lambda tau: K * math.exp(-r * tau))


def step_theta(sys: FemSystem1D, f_prev, tau_i: float, omega: float, d_tau: float) -> np.ndarray:
    """One theta-scheme step with the Dirichlet coefficient prescribed.

    Solves the interior rows of
    ``(M + d_tau w (A+J)) f_i = (M - (1-w) d_tau (A+J)) f_{i-1}``.
    """
    f_prev = np.asarray(f_prev, dtype=float)
    if f_prev.shape != (sys.N,):
        raise ValueError(f"expected coefficient vector of length {sys.N}")
    L, lu = sys.factor(omega, d_tau)
    d = sys.dirichlet_index
    free = sys.free
    fd = sys.dirichlet(tau_i)
    rhs = sys.M[free] @ f_prev
    if omega < 1.0:
        rhs -= (1.0 - omega) * d_tau * (sys.operator()[free] @ f_prev)
    rhs -= L[free, d] * fd
    out = np.empty(sys.N)
    out[d] = fd
    out[free] = lu_solve(lu, rhs)
    return out


@dataclass(frozen=True)
class PriceResult1D:
    basis: NurbsBasis1D
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

    def put(self, s, tau=None):
        """Put price at time to maturity ``tau`` (default: the last step)."""
        i = self._step(tau)
        vals, _ = eval_nurbs_basis(self.basis, s)
        return vals @ self.coefficients[i]

    def call(self, s, tau=None):
        i = self._step(tau)
        s = np.asarray(s, dtype=float)
        return self.put(s, self.taus[i]) + s - self.K * math.exp(-self.r * self.taus[i])

    __call__ = put


def price_put_1d(
    model: ModelSpec, disc: Discretization1D | None = None, with_jumps: bool = True
) -> PriceResult1D:
    """Put prices on the whole time grid for a constant-volatility model."""
    disc = Discretization1D() if disc is None else disc
    if not model.is_constant_vol:
        raise TypeError("the 1-D solver handles constant-volatility models only; use fem2d")
    basis = make_basis(disc, model.K)
    system = build_system(model, basis, disc.quad_order, disc.q_jump, with_jumps)
    f0 = project_initial(basis, put_payoff(model.K), disc.quad_order)
    d_tau = model.T / disc.n_tau
    taus = np.arange(disc.n_tau + 1) * d_tau
    coeffs = np.empty((disc.n_tau + 1, basis.n))
    coeffs[0] = f0
    for i in range(1, disc.n_tau + 1):
        coeffs[i] = step_theta(system, coeffs[i - 1], taus[i], disc.omega, d_tau)
    return PriceResult1D(basis, taus, coeffs, model.K, model.r)


def price_call_1d(model: ModelSpec, disc: Discretization1D | None = None):
    """Call prices via put-call parity; returns ``(result, call_fn)``."""
    res = price_put_1d(model, disc)
    return res, res.call


def mean_l2_metric(f, g, a: float, b: float, breakpoints=(), n_points: int = 200, q: int = 5) -> float:
    """``(1/(b-a)) int_a^b (f - g)^2`` on about ``n_points`` Gauss nodes.

    Panels are uniform and additionally split at ``breakpoints`` so kinks of
    either function never fall inside a panel.
    """
    n_pan = max(1, n_points // q)
    edges = np.union1d(np.linspace(a, b, n_pan + 1), [x for x in breakpoints if a < x < b])
    x, w = composite_nodes(edges, q)
    return float(w @ (np.asarray(f(x)) - np.asarray(g(x))) ** 2) / (b - a)
