"""Market and model parameters for the SVJD family and its special cases.

The asset follows ``dS = (r - lambda*beta) S dt + sqrt(v) S dW + S dQ`` with
log-normal compound Poisson jumps; the variance is either constant
(Black-Scholes / Merton) or follows the approximative fractional process
with ``p(v) = (H-1/2) psi sigma sqrt(v) + kappa (theta - v)`` and
``q(v) = eps^(H-1/2) sigma sqrt(v)`` (Heston / Bates at ``H = 1/2``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

__all__ = [
    "JumpSpec",
    "ConstantVol",
    "FractionalVol",
    "ModelSpec",
    "beta",
    "jump_density",
    "pq_coefficients",
    "PRESETS",
    "preset",
    "model_from_config",
    "effective_bates",
    "V_FLOOR",
]

V_FLOOR = 1e-10


def zero_psi(tau):
    return 0.0


@dataclass(frozen=True)
class JumpSpec:
    """Compound Poisson jumps with ``ln(1+Y) ~ N(mu_J, sigma_J^2)``."""

    lam: float = 0.0
    mu_J: float = 0.0
    sigma_J: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("jump intensity must be nonnegative")
        if self.sigma_J < 0:
            raise ValueError("sigma_J must be nonnegative")

    @property
    def beta(self) -> float:
        return beta(self)


@dataclass(frozen=True)
class ConstantVol:
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


@dataclass(frozen=True)
class FractionalVol:
    """Approximative fractional variance process; ``H = 1/2`` is Heston."""

    kappa: float
    theta: float
    sigma: float
    rho: float
    eps: float = 1.0
    H: float = 0.5

    def __post_init__(self):
        if not 0.5 <= self.H < 1.0:
            raise ValueError("Hurst parameter must lie in [1/2, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")
        if self.kappa < 0 or self.theta < 0 or self.sigma < 0:
            raise ValueError("kappa, theta and sigma must be nonnegative")

    @property
    def vol_of_vol(self) -> float:
        """Diffusion scale ``eps^(H-1/2) sigma`` of the variance."""
        return self.eps ** (self.H - 0.5) * self.sigma


VolSpec = Union[ConstantVol, FractionalVol]


@dataclass(frozen=True)
class ModelSpec:
    r: float
    K: float
    T: float
    vol: VolSpec
    jumps: JumpSpec = field(default_factory=JumpSpec)
    v0: float | None = None
    psi_profile: Callable[[float], float] = field(default=zero_psi, compare=False)

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError("strike must be positive")
        if self.T <= 0:
            raise ValueError("maturity must be positive")

    @property
    def is_constant_vol(self) -> bool:
        return isinstance(self.vol, ConstantVol)

    @property
    def has_psi(self) -> bool:
        return self.psi_profile is not zero_psi

    def with_jumps(self, **kw) -> "ModelSpec":
        return replace(self, jumps=replace(self.jumps, **kw))

    def with_vol(self, **kw) -> "ModelSpec":
        return replace(self, vol=replace(self.vol, **kw))


def beta(j: JumpSpec) -> float:
    """Mean relative jump size ``exp(mu_J + sigma_J^2/2) - 1``."""
    return math.expm1(j.mu_J + 0.5 * j.sigma_J**2)


def jump_density(j: JumpSpec, y):
    """Log-normal density of the jump multiplier ``1+Y`` at ``y > 0``."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("jump density is defined for y > 0 only")
    if j.sigma_J <= 0:
        raise ValueError("density undefined for degenerate jumps (sigma_J = 0)")
    z = (np.log(y) - j.mu_J) / j.sigma_J
    out = np.exp(-0.5 * z * z) / (y * j.sigma_J * math.sqrt(2 * math.pi))
    return out if out.ndim else float(out)


def pq_coefficients(vol: VolSpec, v, tau: float = 0.0, psi: Callable | None = None):
    """Variance drift ``p(v)``, diffusion ``q(v)`` and ``q'(v)``.

    ``q'`` is evaluated at ``max(v, V_FLOOR)`` so it stays finite at zero.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("variance must be nonnegative")
    if isinstance(vol, ConstantVol):
        z = np.zeros_like(v)
        return z, z.copy(), z.copy()
    c = vol.vol_of_vol
    sq = np.sqrt(v)
    psi_val = 0.0 if psi is None else float(psi(tau))
    p = (vol.H - 0.5) * psi_val * vol.sigma * sq + vol.kappa * (vol.theta - v)
    q = c * sq
    dq = c / (2.0 * np.sqrt(np.maximum(v, V_FLOOR)))
    return p, q, dq


def effective_bates(model: ModelSpec) -> ModelSpec:
    """Bates model with identical pricing equation when ``psi == 0``.

    With a vanishing psi profile the fractional variance drift reduces to
    ``kappa (theta - v)`` and the diffusion to ``eps^(H-1/2) sigma sqrt(v)``,
    i.e. a Heston variance with vol-of-vol ``eps^(H-1/2) sigma``.
    """
    vol = model.vol
    if not isinstance(vol, FractionalVol):
        raise TypeError("effective_bates needs a stochastic-volatility model")
    if model.has_psi and vol.H != 0.5:
        raise ValueError("non-zero psi profile has no Bates equivalent")
    return replace(model, vol=replace(vol, sigma=vol.vol_of_vol, eps=1.0, H=0.5))


PRESETS: dict[str, ModelSpec] = {
    "merton-ex24": ModelSpec(
        r=0.048, K=100.0, T=1.0, vol=ConstantVol(0.197),
        jumps=JumpSpec(lam=0.74, mu_J=-0.055, sigma_J=1.1),
    ),
    "merton-ex41": ModelSpec(
        r=0.048, K=100.0, T=1.0, vol=ConstantVol(0.197),
        jumps=JumpSpec(lam=0.19, mu_J=-0.055, sigma_J=1.1),
    ),
    "svjd-ex25": ModelSpec(
        r=0.0529, K=100.0, T=1.0, v0=0.1,
        vol=FractionalVol(kappa=0.5, theta=0.19, sigma=0.51, rho=0.24, eps=0.3, H=0.6),
        jumps=JumpSpec(lam=0.09, mu_J=-0.1, sigma_J=0.4),
    ),
    "svjd-ex42": ModelSpec(
        r=0.0529, K=100.0, T=1.0, v0=0.1,
        vol=FractionalVol(kappa=0.5, theta=0.19, sigma=0.51, rho=0.24, eps=0.003, H=0.6),
        jumps=JumpSpec(lam=0.074, mu_J=-0.1, sigma_J=0.4),
    ),
}


def preset(name: str) -> ModelSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


_VOL_KEYS = ("kappa", "theta", "sigma", "rho", "eps", "H")


def model_from_config(cfg: dict) -> ModelSpec:
    """Build a model from a config mapping.

    Either ``{"preset": name, ...overrides}`` or the explicit form
    ``{r, K, T, model, sigma | (kappa, theta, sigma, rho, eps, H), lambda, mu_J, sigma_J, v0}``
    with ``model`` one of ``bs``, ``merton``, ``heston``, ``bates``, ``fsvjd``.
    """
    cfg = dict(cfg)
    base = preset(cfg.pop("preset")) if "preset" in cfg else None
    kind = cfg.pop("model", None)
    if base is None and kind is None:
        raise ValueError("model section needs 'preset' or 'model'")
    if kind is None:
        kind = "merton" if base.is_constant_vol else "fsvjd"
    kind = kind.lower()
    if kind not in ("bs", "merton", "heston", "bates", "fsvjd"):
        raise ValueError(f"unknown model type {kind!r}")

    def get(key, default=None):
        if key in cfg:
            return float(cfg[key])
        return default

    r = get("r", base.r if base else None)
    K = get("K", base.K if base else None)
    T = get("T", base.T if base else None)
    if None in (r, K, T):
        raise ValueError("model section needs r, K and T")

    bj = base.jumps if base else JumpSpec()
    if kind in ("bs", "heston"):
        jumps = JumpSpec()
    else:
        jumps = JumpSpec(
            lam=get("lambda", bj.lam), mu_J=get("mu_J", bj.mu_J), sigma_J=get("sigma_J", bj.sigma_J)
        )

    if kind in ("bs", "merton"):
        bsig = base.vol.sigma if base and base.is_constant_vol else None
        sigma = get("sigma", bsig)
        if sigma is None:
            raise ValueError("constant-volatility model needs sigma")
        vol: VolSpec = ConstantVol(sigma)
        v0 = None
    else:
        bv = base.vol if base and not base.is_constant_vol else None
        vals = {k: get(k, getattr(bv, k) if bv else None) for k in _VOL_KEYS}
        if kind in ("heston", "bates"):
            vals["H"], vals["eps"] = 0.5, 1.0
        vals["eps"] = 1.0 if vals["eps"] is None else vals["eps"]
        vals["H"] = 0.5 if vals["H"] is None else vals["H"]
        missing = [k for k, v in vals.items() if v is None]
        if missing:
            raise ValueError(f"stochastic-volatility model missing {missing}")
        vol = FractionalVol(**vals)
        v0 = get("v0", base.v0 if base else None)
    unknown = set(cfg) - {"r", "K", "T", "sigma", "lambda", "mu_J", "sigma_J", "v0", *_VOL_KEYS}
    if unknown:
        raise ValueError(f"unknown model keys {sorted(unknown)}")
    return ModelSpec(r=r, K=K, T=T, vol=vol, jumps=jumps, v0=v0)
