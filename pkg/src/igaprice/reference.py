"""Independent reference prices for European puts and calls.

* Black-Scholes closed form,
* Merton jump-diffusion as a Poisson mixture of Black-Scholes prices,
* Heston / Bates through the Lewis single-integral Fourier formula,
* Euler Monte Carlo for the approximative fractional SVJD model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtr

from .models import ConstantVol, FractionalVol, ModelSpec, beta
from .quadrature import gauss_legendre

__all__ = [
    "ReferencePrice",
    "bs_put",
    "bs_call",
    "merton_put",
    "merton_call",
    "heston_bates_put",
    "heston_bates_call",
    "bates_charfn",
    "mc_fsvjd_put",
    "mc_merton_put",
    "reference_put",
]


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReferencePrice:
    value: float
    method: str
    error_estimate: float = 0.0

    def __iter__(self):
        yield self.value
        yield self.error_estimate

    def to_dict(self) -> dict:
        d = {"method": self.method, "value": self.value}
        if self.method.startswith("mc"):
            d["stderr"] = self.error_estimate
        else:
            d["error_bound"] = self.error_estimate
        return d


def bs_put(r, sigma, K, T, s):
    """Black-Scholes European put; vectorised over ``s`` (``s = 0`` allowed)."""
    s = np.asarray(s, dtype=float)
    disc = K * math.exp(-r * T)
    if sigma * math.sqrt(T) <= 0:
        out = np.maximum(disc - s, 0.0)
        return out if out.ndim else float(out)
    sig = sigma * math.sqrt(T)
    with np.errstate(divide="ignore"):
        d1 = (np.log(s / K) + (r + 0.5 * sigma**2) * T) / sig
    d2 = d1 - sig
    out = disc * ndtr(-d2) - s * ndtr(-d1)
    out = np.where(s > 0, out, disc)
    return out if out.ndim else float(out)


def bs_call(r, sigma, K, T, s):
    s = np.asarray(s, dtype=float)
    return bs_put(r, sigma, K, T, s) + s - K * math.exp(-r * T)


def _merton_terms(model: ModelSpec, rel_tol: float):
    if not model.is_constant_vol:
        raise TypeError("Merton pricer needs a constant-volatility model")
    j, T, r = model.jumps, model.T, model.r
    sigma = model.vol.sigma
    if j.lam == 0:
        return [(1.0, r, sigma)], 0.0
    b = beta(j)
    lam_p = j.lam * (1.0 + b)
    mean = lam_p * T
    log1b = j.mu_J + 0.5 * j.sigma_J**2
    terms, total = [], 0.0
    k = 0
    while True:
        w = math.exp(-mean + k * math.log(mean) - gammaln(k + 1)) if mean > 0 else float(k == 0)
        terms.append((w, r - j.lam * b + k * log1b / T, math.sqrt(sigma**2 + k * j.sigma_J**2 / T)))
        total += w
        k += 1
        tail = max(1.0 - total, 0.0)
        if k > mean and (tail < rel_tol or w < 1e-300):
            return terms, tail
        if k > 10_000:
            raise NumericalError("Merton series failed to converge")


def merton_put(model: ModelSpec, s, rel_tol: float = 1e-14):
    """Merton jump-diffusion put by the Poisson-weighted Black-Scholes series.

    Returns an array (or float) of prices; the series is cut once the
    remaining Poisson mass times the strike is below ``rel_tol * K``.
    """
    terms, _ = _merton_terms(model, rel_tol)
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    for w, rk, sk in terms:
        out = out + w * bs_put(rk, sk, model.K, model.T, s)
    return out if out.ndim else float(out)


def merton_call(model: ModelSpec, s, rel_tol: float = 1e-14):
    s = np.asarray(s, dtype=float)
    return merton_put(model, s, rel_tol) + s - model.K * math.exp(-model.r * model.T)


def bates_charfn(model: ModelSpec, u, v0: float):
    """Characteristic function of ``ln(S_T/S_0) - r T`` under Heston/Bates.

    Uses the branch-cut-safe ("little trap") form. ``u`` may be complex.
    """
    vol = model.vol
    if not isinstance(vol, FractionalVol):
        raise TypeError("Heston/Bates pricer needs a stochastic-volatility model")
    if vol.H != 0.5:
        raise ValueError("characteristic-function pricer covers H = 1/2 only")
    u = np.asarray(u, dtype=complex)
    T = model.T
    kappa, theta, sig, rho = vol.kappa, vol.theta, vol.sigma, vol.rho
    iu = 1j * u
    b = kappa - rho * sig * iu
    d = np.sqrt(b * b + sig**2 * (iu + u * u))
    g = (b - d) / (b + d)
    edt = np.exp(-d * T)
    C = kappa * theta / sig**2 * ((b - d) * T - 2.0 * np.log((1.0 - g * edt) / (1.0 - g)))
    D = (b - d) / sig**2 * (1.0 - edt) / (1.0 - g * edt)
    out = C + D * v0
    j = model.jumps
    if j.lam > 0:
        out = out + j.lam * T * (np.exp(iu * j.mu_J - 0.5 * j.sigma_J**2 * u * u) - 1.0 - iu * beta(j))
    return np.exp(out)


def _lewis_integral(model, s, v0, n_nodes):
    s = np.atleast_1d(np.asarray(s, dtype=float))
    K, r, T = model.K, model.r, model.T
    fwd_log = np.log(np.where(s > 0, s, K)) + r * T
    k = np.log(K) - fwd_log  # log(K/F)

    def integrand(u):
        phi = bates_charfn(model, u - 0.5j, v0)
        return np.real(np.exp(-1j * np.outer(k, u)) * phi[None, :]) / (u * u + 0.25)[None, :]

    # truncation: extend until the CF envelope is negligible
    U = 25.0
    while U < 1e5:
        tail = np.abs(bates_charfn(model, np.array([U]) - 0.5j, v0))[0] / (U * U)
        if tail < 1e-14:
            break
        U *= 2.0
    else:
        raise NumericalError(f"characteristic function does not decay (|phi| tail at U={U}: {tail:.3e})")
    # panels resolve both the CF decay and the exp(-iuk) oscillation
    width = min(12.5, 2.0 * math.pi / max(float(np.max(np.abs(k))), 1e-3))
    n_pan = max(1, int(math.ceil(U / width)))
    edges = np.linspace(0.0, U, n_pan + 1)
    def total(n):
        rule = gauss_legendre(max(16, int(math.ceil(n / n_pan))))
        acc = np.zeros(s.size)
        for a, b in zip(edges[:-1], edges[1:]):
            x, w = rule.mapped(a, b)
            acc += integrand(x) @ w
        return acc

    # refine until doubling the node count stops changing the integral
    n = n_nodes
    prev = total(n)
    while True:
        n *= 2
        cur = total(n)
        diff = float(np.max(np.abs(cur - prev)))
        if diff < 1e-10 or n >= 64 * n_nodes:
            return s, k, cur, diff
        prev = cur


def heston_bates_call(model: ModelSpec, s, v0: float | None = None, n_nodes: int = 256):
    v0 = model.v0 if v0 is None else v0
    if v0 is None or v0 < 0:
        raise ValueError("initial variance v0 must be given and nonnegative")
    scalar = np.ndim(s) == 0
    s, _, integral, diff = _lewis_integral(model, s, v0, n_nodes)
    K, r, T = model.K, model.r, model.T
    pref = np.sqrt(s * K) * math.exp(-0.5 * r * T) / math.pi
    call = s - pref * integral
    call = np.where(s > 0, call, 0.0)
    if diff * np.max(pref, initial=0.0) > 1e-6:
        raise NumericalError(f"Fourier integral not converged (node-doubling change {diff:.3e})")
    return float(call[0]) if scalar else call


def heston_bates_put(model: ModelSpec, s, v0: float | None = None, n_nodes: int = 256):
    """Heston (``lambda = 0``) or Bates put via put-call parity on the Fourier call."""
    sv = np.asarray(s, dtype=float)
    call = heston_bates_call(model, sv, v0, n_nodes)
    out = call - sv + model.K * math.exp(-model.r * model.T)
    return out if np.ndim(out) else float(out)


def _spawn(seed, n):
    return [np.random.default_rng(c) for c in np.random.SeedSequence(seed).spawn(n)]


def mc_merton_put(model: ModelSpec, s: float, n_paths: int = 100_000, seed: int = 0) -> ReferencePrice:
    """Exact terminal-value simulation of the Merton model (antithetic)."""
    if n_paths < 2:
        raise ValueError("need at least two paths")
    rng = _spawn(seed, 1)[0]
    j, T, r, sig = model.jumps, model.T, model.r, model.vol.sigma
    half = n_paths // 2
    z = rng.standard_normal(half)
    nj = rng.poisson(j.lam * T, half)
    zj = rng.standard_normal(half)
    drift = math.log(s) + (r - j.lam * beta(j) - 0.5 * sig**2) * T
    payoffs = []
    for sign in (1.0, -1.0):
        x = drift + sign * sig * math.sqrt(T) * z + nj * j.mu_J + sign * j.sigma_J * np.sqrt(nj) * zj
        payoffs.append(np.maximum(model.K - np.exp(x), 0.0))
    pair = 0.5 * (payoffs[0] + payoffs[1]) * math.exp(-r * T)
    return ReferencePrice(float(pair.mean()), "mc-merton", float(pair.std(ddof=1) / math.sqrt(half)))


def mc_fsvjd_put(
    model: ModelSpec,
    s: float,
    v0: float | None = None,
    n_paths: int = 100_000,
    n_steps: int = 500,
    seed: int = 0,
    psi: str = "kernel",
    block_size: int = 10_000,
) -> ReferencePrice:
    """Euler Monte Carlo put price for the (fractional) SVJD model.

    The variance uses full truncation (``v+`` inside square roots and the
    drift). ``psi="kernel"`` accumulates ``psi_t = int_0^t (t-u+eps)^(H-3/2) dW^v_u``
    along each path; ``psi="profile"`` uses the model's deterministic
    ``psi_profile`` instead, which is the process the pricing PIDE describes.
    Antithetic pairs share their jump counts. Results are deterministic for
    a fixed ``seed``.
    """
    if n_paths < 2 or n_steps < 1:
        raise ValueError("n_paths must be >= 2 and n_steps >= 1")
    if psi not in ("kernel", "profile"):
        raise ValueError("psi must be 'kernel' or 'profile'")
    vol = model.vol
    if isinstance(vol, ConstantVol):
        vol = FractionalVol(kappa=0.0, theta=vol.sigma**2, sigma=0.0, rho=0.0)
        v0 = model.vol.sigma**2
    v0 = model.v0 if v0 is None else v0
    if v0 is None or v0 < 0:
        raise ValueError("initial variance v0 must be given and nonnegative")
    T, r, K = model.T, model.r, model.K
    j = model.jumps
    jb = beta(j)
    dt = T / n_steps
    sq_dt = math.sqrt(dt)
    c = vol.vol_of_vol
    frac = vol.H - 0.5
    rho_c = math.sqrt(max(1.0 - vol.rho**2, 0.0))
    t_grid = np.arange(n_steps) * dt
    kern = None
    if frac != 0 and psi == "kernel":
        lag = t_grid[:, None] - t_grid[None, :]
        kern = np.where(lag > 0, (np.abs(lag) + vol.eps) ** (vol.H - 1.5), 0.0)
    profile = None
    if frac != 0 and psi == "profile":
        profile = np.array([model.psi_profile(T - t) for t in t_grid])

    n_pairs = (n_paths + 1) // 2
    n_blocks = max(1, int(math.ceil(n_pairs / block_size)))
    rngs = _spawn(seed, n_blocks)
    sums = []
    for b, rng in enumerate(rngs):
        m = min(block_size, n_pairs - b * block_size)
        z1 = rng.standard_normal((m, n_steps))
        z2 = rng.standard_normal((m, n_steps))
        counts = rng.poisson(j.lam * dt, (m, n_steps)) if j.lam > 0 else None
        zj = rng.standard_normal((m, n_steps)) if j.lam > 0 else None
        pay = []
        for sign in (1.0, -1.0):
            dwv = sign * z2 * sq_dt
            dws = vol.rho * dwv + rho_c * sign * z1 * sq_dt
            if kern is not None:
                psi_path = dwv @ kern.T
            x = np.full(m, math.log(s))
            v = np.full(m, float(v0))
            for k in range(n_steps):
                vp = np.maximum(v, 0.0)
                sv = np.sqrt(vp)
                x += (r - j.lam * jb - 0.5 * vp) * dt + sv * dws[:, k]
                if counts is not None:
                    nk = counts[:, k]
                    x += nk * j.mu_J + sign * j.sigma_J * np.sqrt(nk) * zj[:, k]
                drift = vol.kappa * (vol.theta - vp)
                if kern is not None:
                    drift = drift + frac * psi_path[:, k] * vol.sigma * sv
                elif profile is not None:
                    drift = drift + frac * profile[k] * vol.sigma * sv
                v = v + drift * dt + c * sv * dwv[:, k]
            pay.append(np.maximum(K - np.exp(x), 0.0))
        sums.append(0.5 * (pay[0] + pay[1]))
    pair = np.concatenate(sums) * math.exp(-r * T)
    return ReferencePrice(float(pair.mean()), f"mc-fsvjd-{psi}", float(pair.std(ddof=1) / math.sqrt(pair.size)))


def reference_put(model: ModelSpec, s, v0: float | None = None):
    """Closed or semi-closed put price for the model family.

    Constant volatility uses the Merton series (Black-Scholes when
    ``lambda = 0``). Stochastic volatility uses the Fourier pricer on the
    equivalent Bates model, which requires a vanishing psi profile.
    """
    from .models import effective_bates

    if model.is_constant_vol:
        if model.jumps.lam == 0:
            return bs_put(model.r, model.vol.sigma, model.K, model.T, s)
        return merton_put(model, s)
    return heston_bates_put(effective_bates(model), s, v0)
