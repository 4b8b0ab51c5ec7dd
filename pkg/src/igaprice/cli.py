"""Command line driver: ``iga-price <mode> --config <path> [--out DIR] [--seed N]``.

Modes
-----
fit        B-spline/NURBS fit to a toy target or a reference price curve
price1d    1-D Galerkin price of a constant-volatility model
price2d    2-D Galerkin price surface of an SVJD model
reference  closed-form, Fourier or Monte Carlo reference prices
table      error and timing tables over (degree, n_s)

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .fem1d import Discretization1D, SolverError, mean_l2_metric, price_put_1d
from .fem2d import Discretization2D, price_put_2d
from .fitting import fit_bspline, fit_exact_nonsmooth, fit_nurbs
from .models import ModelSpec, PRESETS, effective_bates, model_from_config
from .reference import NumericalError, mc_fsvjd_put, mc_merton_put, reference_put
from .splines import open_knot_vector

__all__ = [
    "ConfigError",
    "load_config",
    "config_hash",
    "run_fit",
    "run_price1d",
    "run_price2d",
    "run_reference",
    "run_table",
    "main",
]

log = logging.getLogger("igaprice")

MODES = ("fit", "price1d", "price2d", "reference", "table")
NUMERICAL_ERRORS = (NumericalError, SolverError, LinAlgError, FloatingPointError)


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------- config

def _preset_file(name: str) -> dict:
    path = resources.files("igaprice").joinpath("presets", f"{name}.toml")
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return tomllib.loads(path.read_text())


def load_config(path) -> dict:
    """Read a TOML or JSON config; ``preset = name`` at top level pulls in
    a shipped preset file which the remaining keys override."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            cfg = json.loads(text)
        else:
            cfg = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a table/object")
    if "preset" in cfg:
        base = _preset_file(str(cfg.pop("preset")))
        cfg = _merge(base, cfg)
    return cfg


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def config_hash(cfg: dict, seed: int) -> str:
    blob = json.dumps({"config": cfg, "seed": seed}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _section(cfg, name, allowed):
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return sec


def _model(cfg) -> ModelSpec:
    if "model" not in cfg:
        raise ConfigError("missing [model] section")
    try:
        return model_from_config(cfg["model"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"[model]: {exc}") from exc


_DISC1 = ("s_max", "n_s", "degree", "strike_knot_multiplicity", "n_tau", "omega", "q", "q_jump")
_DISC2 = ("s_max", "v_max", "n_s", "n_v", "degree", "degree_v", "strike_knot_multiplicity", "n_tau",
          "omega", "q", "q_jump")


def _disc(cfg, cls, keys, **override):
    sec = dict(_section(cfg, "discretization", keys))
    sec.update(override)
    try:
        return cls(**sec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[discretization]: {exc}") from exc


def _grid(sec, key, default_lo, default_hi, default_n):
    spec = sec.get(key, [default_lo, default_hi, default_n])
    if isinstance(spec, list) and len(spec) == 3:
        lo, hi, n = spec
        return np.linspace(float(lo), float(hi), int(n))
    raise ConfigError(f"{key} must be [lo, hi, count]")


# ---------------------------------------------------------------------- modes

def _toy_target(name):
    if name == "exp":
        return (lambda x: np.exp(-np.asarray(x))), (0.0, 6.0), []
    if name == "put":
        return (lambda x: np.maximum(3.0 - np.asarray(x), 0.0)), (0.0, 6.0), [3.0]
    if name == "digital":
        return (lambda x: (np.asarray(x) >= 3.0).astype(float)), (0.0, 6.0), [3.0]
    return None


def run_fit(cfg: dict, seed: int = 0) -> dict:
    """Fit B-spline and NURBS curves to a target.

    ``[fit] target`` is ``exp``, ``put``, ``digital`` (toy targets on
    ``[0, 6]``) or ``price`` (the reference put of ``[model]`` at maturity
    as a function of ``s``).
    """
    sec = _section(cfg, "fit", ("target", "degree", "n_elements", "domain", "repeated_knots",
                                "q", "max_iter", "n_samples", "nurbs"))
    target = sec.get("target", "exp")
    toy = _toy_target(target)
    if toy is not None:
        f, domain, kinks = toy
    elif target == "price":
        model = _model(cfg)
        domain = (0.0, 3.0 * model.K)
        kinks = [model.K]
        if model.is_constant_vol:
            f = lambda s: reference_put(model, s)  # noqa: E731
        else:
            if model.v0 is None:
                raise ConfigError("[model] v0 needed for a stochastic-volatility price curve")
            pk = model.K * math.exp(-model.r * model.T)
            f = lambda s: np.where(np.asarray(s) > 0, reference_put(model, np.maximum(s, 1e-12)), pk)  # noqa: E731
    else:
        raise ConfigError(f"unknown fit target {target!r}")
    domain = tuple(sec.get("domain", domain))
    degree = int(sec.get("degree", 3))
    n_el = int(sec.get("n_elements", 6 if toy is not None else 12))
    rep = {float(k): int(v) for k, v in sec.get("repeated_knots", {}).items()}
    try:
        kv = open_knot_vector(domain[0], domain[1], n_el, degree, rep)
    except ValueError as exc:
        raise ConfigError(f"[fit]: {exc}") from exc
    q = sec.get("q")
    bs = fit_bspline(kv, f, q)
    out = {"target": target, "n": kv.n, "bspline": bs.to_dict()}
    nurbs = None
    if sec.get("nurbs", True):
        nurbs = fit_nurbs(kv, f, q=q, max_iter=int(sec.get("max_iter", 500)))
        out["nurbs"] = nurbs.to_dict()
    if toy is not None and any(kv.multiplicity(k) >= degree for k in kinks):
        out["exact_nonsmooth"] = fit_exact_nonsmooth(kv, f, [k for k in kinks if kv.multiplicity(k)], q).mean_l2_error
    xs = np.linspace(domain[0], domain[1], int(sec.get("n_samples", 121)))
    cols = {"xi": xs, "f": f(xs), "f_bspline": bs(xs)}
    if nurbs is not None:
        cols["f_nurbs"] = nurbs(xs)
    out["samples"] = cols
    return out


def run_price1d(cfg: dict, seed: int = 0) -> dict:
    model = _model(cfg)
    if not model.is_constant_vol:
        raise ConfigError("price1d needs a constant-volatility model (bs or merton)")
    disc = _disc(cfg, Discretization1D, _DISC1)
    sec = _section(cfg, "output", ("s_grid", "v_grid"))
    res = price_put_1d(model, disc, with_jumps=model.jumps.lam > 0)
    s = _grid(sec, "s_grid", 0.0, disc.s_max, 61)
    ref = lambda x: reference_put(model, x)  # noqa: E731
    err = mean_l2_metric(res.put, ref, 0.0, disc.s_max, [model.K])
    put = res.put(s)
    return {
        "samples": {"s": s, "put": put, "call": res.call(s), "reference_put": ref(s), "error": put - ref(s)},
        "summary": {"mean_l2_error": err, "n_basis": res.basis.n, "n_tau": disc.n_tau},
    }


def run_price2d(cfg: dict, seed: int = 0) -> dict:
    model = _model(cfg)
    if model.is_constant_vol:
        raise ConfigError("price2d needs a stochastic-volatility model")
    disc = _disc(cfg, Discretization2D, _DISC2)
    sec = _section(cfg, "output", ("s_grid", "v_grid"))
    res = price_put_2d(model, disc)
    s = _grid(sec, "s_grid", 0.0, disc.s_max, 61)
    v = _grid(sec, "v_grid", 0.0, disc.v_max, 31)
    surf = res.surface(s, v)
    S, V = np.meshgrid(s, v)
    out = {"surface": {"s": S.ravel(), "v": V.ravel(), "put": surf.ravel()}, "summary": {"n_basis": res.basis.N}}
    if model.has_psi and model.vol.H != 0.5:
        return out
    bates = effective_bates(model)
    ref = lambda x: reference_put(bates, x, 0.0)  # noqa: E731
    fem0 = lambda x: res.put(x, np.zeros_like(x))  # noqa: E731
    out["slice"] = {"s": s, "put_v0": fem0(s), "reference_put_v0": ref(s), "error": fem0(s) - ref(s)}
    out["summary"]["mean_l2_error_v0"] = mean_l2_metric(fem0, ref, 0.0, disc.s_max, [model.K])
    return out


def run_reference(cfg: dict, seed: int = 0) -> dict:
    """Reference put prices; ``[reference] method`` is ``closed`` or ``mc``."""
    model = _model(cfg)
    sec = _section(cfg, "reference", ("method", "s", "v0", "n_paths", "n_steps", "psi"))
    method = sec.get("method", "closed")
    s = np.atleast_1d(np.asarray(sec.get("s", [model.K]), dtype=float))
    v0 = sec.get("v0", model.v0)
    rows = {"s": s, "put": np.empty_like(s), "std_error": np.zeros_like(s)}
    if method == "closed":
        rows["put"] = np.atleast_1d(reference_put(model, s, v0) if not model.is_constant_vol
                                    else reference_put(model, s))
    elif method == "mc":
        n_paths = int(sec.get("n_paths", 100_000))
        for i, x in enumerate(s):
            if model.is_constant_vol:
                rp = mc_merton_put(model, x, n_paths=n_paths, seed=seed + i)
            else:
                if v0 is None:
                    raise ConfigError("[reference] v0 is required for Monte Carlo")
                psi = sec.get("psi", "kernel")
                if psi not in ("kernel", "profile"):
                    raise ConfigError("psi must be 'kernel' or 'profile'")
                rp = mc_fsvjd_put(model, x, v0, n_paths=n_paths, n_steps=int(sec.get("n_steps", 500)),
                                  seed=seed + i, psi=psi)
            rows["put"][i], rows["std_error"][i] = rp.value, rp.error_estimate
    else:
        raise ConfigError(f"unknown reference method {method!r}")
    return {"samples": rows, "summary": {"method": method}}


def run_table(cfg: dict, seed: int = 0) -> dict:
    """Mean L2 error and wall time for every (degree, n_s) cell.

    Constant-volatility models are compared with the Merton/BS formula over
    ``[0, s_max]``; SVJD models on the ``v = 0`` slice with the Fourier price
    of the equivalent Bates model.
    """
    model = _model(cfg)
    sec = _section(cfg, "table", ("degrees", "n_s"))
    degrees = [int(p) for p in sec.get("degrees", [1, 2, 3, 4] if model.is_constant_vol else [1, 2, 3])]
    sizes = [int(n) for n in sec.get("n_s", [9, 18, 27, 36])]
    if not degrees or not sizes:
        raise ConfigError("[table] degrees and n_s must be non-empty")
    if model.is_constant_vol:
        _disc(cfg, Discretization1D, _DISC1)
        ref = lambda x: reference_put(model, x)  # noqa: E731
    else:
        _disc(cfg, Discretization2D, _DISC2)
        if model.has_psi and model.vol.H != 0.5:
            raise ConfigError("table reference requires a vanishing psi profile")
        bates = effective_bates(model)
        ref = lambda x: reference_put(bates, x, 0.0)  # noqa: E731
    err = np.full((len(sizes), len(degrees)), np.nan)
    secs = np.full_like(err, np.nan)
    for j, p in enumerate(degrees):
        for i, n in enumerate(sizes):
            t0 = time.perf_counter()
            try:
                if model.is_constant_vol:
                    disc = _disc(cfg, Discretization1D, _DISC1, degree=p, n_s=n)
                    res = price_put_1d(model, disc, with_jumps=model.jumps.lam > 0)
                    fem = res.put
                else:
                    disc = _disc(cfg, Discretization2D, _DISC2, degree=p, n_s=n, n_v=n)
                    res = price_put_2d(model, disc)
                    fem = lambda x, res=res: res.put(x, np.zeros_like(x))  # noqa: E731
                err[i, j] = mean_l2_metric(fem, ref, 0.0, disc.s_max, [model.K])
            except (*NUMERICAL_ERRORS, ValueError) as exc:
                log.error("cell p=%d n_s=%d failed: %s", p, n, exc)
            secs[i, j] = time.perf_counter() - t0
    return {"degrees": degrees, "n_s": sizes, "error": err, "seconds": secs}


# --------------------------------------------------------------------- output

def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, columns: dict, digest: str) -> None:
    keys = list(columns)
    n = len(np.asarray(columns[keys[0]]))
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_sha256={digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for i in range(n):
            w.writerow([_fmt(np.asarray(columns[k])[i]) for k in keys])


def write_json(path: Path, payload: dict, digest: str) -> None:
    def conv(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        raise TypeError(type(o))

    with open(path, "w") as fh:
        json.dump({"config_sha256": digest, **payload}, fh, indent=2, sort_keys=True, default=conv)
        fh.write("\n")


def _write(mode, result, out: Path, digest):
    out.mkdir(parents=True, exist_ok=True)
    if mode == "fit":
        write_csv(out / "fit_samples.csv", result.pop("samples"), digest)
        write_json(out / "fit.json", result, digest)
    elif mode == "price1d":
        write_csv(out / "price1d.csv", result["samples"], digest)
        write_json(out / "price1d.json", result["summary"], digest)
    elif mode == "price2d":
        write_csv(out / "price2d_surface.csv", result["surface"], digest)
        if "slice" in result:
            write_csv(out / "price2d_slice_v0.csv", result["slice"], digest)
        write_json(out / "price2d.json", result["summary"], digest)
    elif mode == "reference":
        write_csv(out / "reference.csv", result["samples"], digest)
    elif mode == "table":
        for key, name in (("error", "table_error.csv"), ("seconds", "table_time.csv")):
            cols = {"n_s": result["n_s"]}
            for j, p in enumerate(result["degrees"]):
                cols[f"p={p}"] = result[key][:, j]
            write_csv(out / name, cols, digest)


RUNNERS = {"fit": run_fit, "price1d": run_price1d, "price2d": run_price2d,
           "reference": run_reference, "table": run_table}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="iga-price", description="IGA Galerkin option pricer")
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", required=True, help="TOML or JSON config file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="root seed for Monte Carlo")
    ap.add_argument("-v", "--verbose", action="store_true")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        digest = config_hash(cfg, seed)
        result = RUNNERS[args.mode](cfg, seed)
        _write(args.mode, result, Path(args.out), digest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
