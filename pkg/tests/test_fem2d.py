import math

import numpy as np
import pytest
import sympy as sp

from igaprice.fem1d import _inner_integrals, assemble_stiffness, put_payoff
from igaprice.fem2d import (
    Discretization2D,
    TensorBasis2D,
    assemble_2d,
    make_tensor_basis,
    price_put_2d,
    project_dirichlet,
    project_initial_2d,
)
from igaprice.models import ConstantVol, FractionalVol, JumpSpec, ModelSpec, beta, preset
from igaprice.reference import bs_put, heston_bates_put
from igaprice.splines import KnotVector, NurbsBasis1D, eval_nurbs_basis, open_knot_vector


def _small_basis():
    # 4 x 4 tensor basis: p = 2 and two elements per direction
    return TensorBasis2D(NurbsBasis1D(open_knot_vector(0, 300, 2, 2)), NurbsBasis1D(open_knot_vector(0, 3, 2, 2)))


def _tensor_nodes(tb, q):
    def nodes(basis):
        bp = basis.knot_vector.breakpoints
        g, w = np.polynomial.legendre.leggauss(q)
        x = (0.5 * (bp[:-1] + bp[1:])[:, None] + 0.5 * np.diff(bp)[:, None] * g).ravel()
        wx = (0.5 * np.diff(bp)[:, None] * w).ravel()
        return x, wx

    s, ws = nodes(tb.basis_s)
    v, wv = nodes(tb.basis_v)
    S, V = np.meshgrid(s, v, indexing="ij")
    W = np.outer(ws, wv)
    return S.ravel(), V.ravel(), W.ravel(), s, v


def _tensor_values(tb, S, V):
    bs, ds = eval_nurbs_basis(tb.basis_s, S)
    bv, dv = eval_nurbs_basis(tb.basis_v, V)
    n = S.size
    val = (bv[:, :, None] * bs[:, None, :]).reshape(n, -1)
    d_s = (bv[:, :, None] * ds[:, None, :]).reshape(n, -1)
    d_v = (dv[:, :, None] * bs[:, None, :]).reshape(n, -1)
    return val, d_s, d_v


def test_tensor_index_convention():
    tb = _small_basis()
    val, _, _ = _tensor_values(tb, np.array([30.0]), np.array([1.0]))
    bs, _ = eval_nurbs_basis(tb.basis_s, 30.0)
    bv, _ = eval_nurbs_basis(tb.basis_v, 1.0)
    i_s, i_v = 2, 1
    assert val[0, tb.index(i_s, i_v)] == pytest.approx(bs[i_s] * bv[i_v])
    assert tuple(tb.split(tb.index(i_s, i_v))) == (i_s, i_v)


def test_mass_and_jump_match_brute_force():
    m = preset("svjd-ex42")
    tb = _small_basis()
    assert tb.N1 == 4 and tb.N2 == 4
    q = 6
    sys2 = assemble_2d(m, tb, q=q)
    S, V, W, s1, _ = _tensor_nodes(tb, q)
    val, _, _ = _tensor_values(tb, S, V)
    M_bf = (val * W[:, None]).T @ val
    np.testing.assert_allclose(sys2.M, M_bf, rtol=1e-10, atol=1e-12 * np.abs(M_bf).max())

    inner_s = _inner_integrals(tb.basis_s, S, m.jumps, 300.0, 8)  # int psi^s_j(x) kernel dx at each node
    bv, _ = eval_nurbs_basis(tb.basis_v, V)
    inner = (bv[:, :, None] * inner_s[:, None, :]).reshape(S.size, -1)
    Jp_bf = (val * W[:, None]).T @ inner
    J_bf = m.jumps.lam * (M_bf - Jp_bf)
    np.testing.assert_allclose(sys2.J, J_bf, rtol=1e-10, atol=1e-10 * np.abs(J_bf).max())


def _symbolic_coefficients(model):
    """P and Q = div(P) - drift derived symbolically from the generator."""
    s, v = sp.symbols("s v", positive=True)
    vol = model.vol
    c = sp.Float(vol.vol_of_vol)
    rho = sp.Float(vol.rho)
    q = c * sp.sqrt(v)
    P = sp.Matrix([[v * s**2, rho * q * sp.sqrt(v) * s], [rho * q * sp.sqrt(v) * s, q**2]]) / 2
    drift = sp.Matrix([(model.r - model.jumps.lam * beta(model.jumps)) * s,
                       vol.kappa * (vol.theta - v)])
    div = sp.Matrix([sp.diff(P[0, 0], s) + sp.diff(P[1, 0], v), sp.diff(P[0, 1], s) + sp.diff(P[1, 1], v)])
    Q = sp.simplify(div - drift)
    return [sp.lambdify((s, v), e, "numpy") for e in (P[0, 0], P[0, 1], P[1, 1], Q[0], Q[1])]


def test_stiffness_matches_unfactorised_quadrature():
    m = preset("svjd-ex42")
    tb = _small_basis()
    q = 12
    A = assemble_2d(m, tb, q=q).A
    S, V, W, _, _ = _tensor_nodes(tb, q)
    val, d_s, d_v = _tensor_values(tb, S, V)
    p11, p12, p22, q1, q2 = (np.broadcast_to(f(S, V), S.shape) for f in _symbolic_coefficients(m))
    Wc = W[:, None]
    A_bf = (
        (d_s * (Wc * p11[:, None])).T @ d_s
        + (d_v * (Wc * p12[:, None])).T @ d_s
        + (d_s * (Wc * p12[:, None])).T @ d_v
        + (d_v * (Wc * p22[:, None])).T @ d_v
        + (val * (Wc * q1[:, None])).T @ d_s
        + (val * (Wc * q2[:, None])).T @ d_v
        + m.r * (val * Wc).T @ val
    )
    np.testing.assert_allclose(A, A_bf, rtol=1e-8, atol=1e-8 * np.abs(A_bf).max())


def test_degenerate_tensor_collapses_to_1d():
    vbar = 0.08
    vol = FractionalVol(kappa=0.0, theta=0.0, sigma=0.0, rho=0.0)
    m = ModelSpec(r=0.0, K=100.0, T=1.0, vol=vol)
    kv_s = open_knot_vector(0, 300, 6, 2, {100.0: 2})
    tb = TensorBasis2D(NurbsBasis1D(kv_s), NurbsBasis1D(KnotVector([0.0, vbar], 0)))
    A2 = assemble_2d(m, tb).A
    m1 = ModelSpec(r=0.0, K=100.0, T=1.0, vol=ConstantVol(math.sqrt(vbar / 2)))
    A1 = assemble_stiffness(NurbsBasis1D(kv_s), m1)
    np.testing.assert_allclose(A2 / vbar, A1, rtol=1e-12, atol=1e-12 * np.abs(A1).max())


def test_dirichlet_projection_is_discounted_strike():
    m = preset("svjd-ex42")
    tb = _small_basis()
    sys2 = assemble_2d(m, tb)
    for tau in (0.0, 0.37, 1.0):
        np.testing.assert_allclose(project_dirichlet(sys2, tau), 100 * math.exp(-m.r * tau), rtol=1e-12)
    doubled = assemble_2d(ModelSpec(m.r, 200.0, m.T, m.vol, m.jumps, m.v0), tb)
    np.testing.assert_allclose(project_dirichlet(doubled, 0.5), 2 * project_dirichlet(sys2, 0.5), rtol=1e-12)


def test_initial_projection_exact_and_factorised():
    tb = make_tensor_basis(Discretization2D(n_s=6, n_v=3, degree=2), 100.0)
    f0 = project_initial_2d(tb, put_payoff(100.0))
    s = np.linspace(0, 300, 41)
    v = np.linspace(0, 3, 7)
    S, V = np.meshgrid(s, v)
    val = tb.values(S.ravel(), V.ravel())
    assert np.max(np.abs(val @ f0 - np.maximum(100 - S.ravel(), 0))) <= 1e-10
    assert not project_initial_2d(tb, lambda x: np.zeros_like(x)).any()

    # factorised load vector against a dense 2-D quadrature
    Sq, Vq, W, _, _ = _tensor_nodes(tb, 8)
    vq, _, _ = _tensor_values(tb, Sq, Vq)
    phi_dense = vq.T @ (W * np.maximum(100 - Sq, 0))
    M = (vq * W[:, None]).T @ vq
    np.testing.assert_allclose(M @ f0, phi_dense, rtol=1e-10, atol=1e-10 * np.abs(phi_dense).max())


def test_frozen_variance_slices_are_black_scholes():
    # kappa = sigma = 0: v never moves, so every v-slice is a BS problem
    vol = FractionalVol(kappa=0.0, theta=0.0, sigma=0.0, rho=0.0)
    m = ModelSpec(r=0.05, K=100.0, T=1.0, vol=vol)
    res = price_put_2d(m, Discretization2D(n_s=18, n_v=8, degree=2, v_max=0.2))
    for v in (0.04, 0.09):
        assert res.put(100.0, v) == pytest.approx(bs_put(0.05, math.sqrt(v), 100.0, 1.0, 100.0), abs=0.03)


def test_heston_price_within_half_percent():
    m = preset("svjd-ex42").with_vol(H=0.5, eps=1.0)
    m = ModelSpec(m.r, m.K, m.T, m.vol, JumpSpec(), m.v0)
    res = price_put_2d(m, Discretization2D(n_s=18, degree=2))
    ref = heston_bates_put(m, 100.0, 0.1)
    assert res.put(100.0, 0.1) == pytest.approx(ref, rel=5e-3)


def test_boundary_coefficients_every_step():
    m = preset("svjd-ex42")
    res = price_put_2d(m, Discretization2D(n_s=9, degree=2, n_tau=10))
    tb = res.basis
    idx = tb.index(0, np.arange(tb.N2))
    for i, tau in enumerate(res.taus[1:], 1):
        np.testing.assert_allclose(res.coefficients[i, idx], 100 * math.exp(-m.r * tau), rtol=1e-12)


def test_v_zero_slice_and_surface_agree():
    m = preset("svjd-ex42")
    res = price_put_2d(m, Discretization2D(n_s=9, degree=2))
    s = np.array([0.0, 50.0, 100.0, 250.0])
    surf = res.surface(s, [0.0, 0.5])
    np.testing.assert_allclose(surf[0], res.put(s, np.zeros_like(s)))
    np.testing.assert_allclose(surf[1], res.put(s, np.full_like(s, 0.5)))
    np.testing.assert_allclose(res.call(s, 0.0) - res.put(s, 0.0), s - 100 * math.exp(-m.r), atol=1e-12)


def test_psi_profile_changes_price():
    m = preset("svjd-ex42")
    from dataclasses import replace

    mp = replace(m, psi_profile=lambda tau: 5.0)
    a = price_put_2d(m, Discretization2D(n_s=9, degree=2, n_tau=20)).put(100.0, 0.1)
    b = price_put_2d(mp, Discretization2D(n_s=9, degree=2, n_tau=20)).put(100.0, 0.1)
    assert abs(a - b) > 1e-3


def test_deterministic():
    m = preset("svjd-ex42")
    d = Discretization2D(n_s=9, degree=2, n_tau=20)
    np.testing.assert_array_equal(price_put_2d(m, d).coefficients, price_put_2d(m, d).coefficients)


def test_constant_vol_rejected():
    tb = _small_basis()
    with pytest.raises(TypeError):
        assemble_2d(preset("merton-ex41"), tb)


@pytest.mark.parametrize("kw", [{"v_max": 0.0}, {"n_s": 0}, {"omega": -0.1}])
def test_bad_discretization(kw):
    with pytest.raises(ValueError):
        Discretization2D(**kw)
