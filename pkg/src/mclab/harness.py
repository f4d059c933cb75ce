"""Seeded trial runner, noise sweeps, CSV tables and SVG figures."""

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import convex, nonconvex
from .duality import CertificateReport, certify
from .errors import NumericError, ParameterError
from .metrics import ErrorBundle, error_bundle
from .model import gen_truth, incoherence, observe, sample_mask
from .plots import write_figures

__all__ = [
    "ESTIMATORS",
    "PRESETS",
    "ExperimentConfig",
    "TrialRecord",
    "SweepResult",
    "run_trial",
    "run_sweep",
    "trial_seeds",
]

log = logging.getLogger(__name__)

ESTIMATORS = ("convex", "convex_rank_r", "nonconvex_spectral", "nonconvex_oracle", "constrained", "usvt")
SWEEP_COLUMNS = ("estimator", "sigma", "rel_fro", "rel_spec", "rel_inf", "pair_dist", "w_spectral",
                 "c_inj", "trials", "failures")
WORKERS_ENV = "MCLAB_WORKERS"


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 200
    r: int = 5
    p: float = 0.2
    spectrum: Tuple = ("flat",)
    sigma_grid: Tuple[float, ...] = (1e-4, 2.15e-4, 4.64e-4, 1e-3)
    trials: int = 5
    lambda_c: float = 5.0
    lambda_override: Optional[float] = None
    estimators: Tuple[str, ...] = ("convex", "nonconvex_spectral")
    tol_grad_map: float = 1e-10
    tol_grad: float = 1e-9
    max_iters: int = 20_000
    t_max: int = 20_000
    accel: bool = True
    usvt_scale: float = 0.5
    certify: bool = True
    base_seed: int = 0
    out_dir: str = "mclab-out"

    def __post_init__(self):
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if len(self.sigma_grid) == 0:
            raise ParameterError("sigma_grid is empty")
        if any(s < 0 for s in self.sigma_grid):
            raise ParameterError("noise levels must be nonnegative")
        if any(s == 0 for s in self.sigma_grid) and self.lambda_override is None:
            raise ParameterError("sigma = 0 needs an explicit lambda_override (the rule c*sigma*sqrt(np) vanishes)")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown or not self.estimators:
            raise ParameterError(f"unknown or empty estimator list: {sorted(unknown)}")
        if not 1 <= self.r <= self.n or not 0 < self.p <= 1:
            raise ParameterError("invalid (n, r, p)")

    def lam(self, sigma):
        if self.lambda_override is not None:
            return float(self.lambda_override)
        return self.lambda_c * sigma * math.sqrt(self.n * self.p)

    @property
    def spectrum_arg(self):
        return "flat" if tuple(self.spectrum) == ("flat",) else [float(s) for s in self.spectrum]

    @classmethod
    def from_text(cls, text):
        """Parse ``key=value`` lines; ``#`` starts a comment, lists are comma separated."""
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "preset":
                kw = {**_preset_kwargs(value), **kw}
                continue
            if key not in types:
                raise ParameterError(f"line {lineno}: unknown key {key!r}")
            kw[key] = _coerce(key, value)
        return cls(**kw)

    @classmethod
    def from_file(cls, path):
        return cls.from_text(Path(path).read_text())


_INT_KEYS = {"n", "r", "trials", "max_iters", "t_max", "base_seed"}
_FLOAT_KEYS = {"p", "lambda_c", "tol_grad_map", "tol_grad", "usvt_scale"}
_BOOL_KEYS = {"accel", "certify"}


def _coerce(key, value):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _BOOL_KEYS:
        if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ParameterError(f"{key}: not a boolean: {value!r}")
        return value.lower() in ("true", "1", "yes")
    if key == "lambda_override":
        return None if value.lower() in ("", "none") else float(value)
    if key == "sigma_grid":
        return tuple(float(v) for v in value.split(",") if v.strip())
    if key == "estimators":
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if key == "spectrum":
        parts = [v.strip() for v in value.split(",") if v.strip()]
        return ("flat",) if parts == ["flat"] else tuple(float(v) for v in parts)
    return value


def _preset_kwargs(name):
    if name not in PRESETS:
        raise ParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return dict(PRESETS[name])


PRESETS: Dict[str, dict] = {
    "fig1": dict(estimators=("convex", "nonconvex_spectral"), sigma_grid=(1e-4, 2.15e-4, 4.64e-4, 1e-3)),
    "fig2": dict(estimators=("convex",), sigma_grid=(1e-4, 2.15e-4, 4.64e-4, 1e-3), certify=False),
    "fig3": dict(estimators=("convex", "constrained", "usvt"), sigma_grid=(1e-4, 2.15e-4, 4.64e-4, 1e-3),
                 certify=False),
    # the full-size setting; expect hours of runtime
    "overnight": dict(n=1000, r=5, p=0.2, trials=20, sigma_grid=tuple(float(s) for s in np.logspace(-6, -3, 7)),
                  estimators=("convex", "nonconvex_spectral", "constrained", "usvt"), certify=False),
}


def trial_seeds(seed):
    """Independent seeds for the truth, the mask and the noise of one trial."""
    return tuple(int(s) for s in np.random.SeedSequence(seed).generate_state(3))


@dataclass(frozen=True)
class TrialRecord:
    seed: int
    sigma: float
    lam: float
    errors: Dict[str, ErrorBundle]
    pair_dist: Optional[float] = None
    certificate: Optional[CertificateReport] = None
    runtimes: Dict[str, float] = field(default_factory=dict, compare=False)
    failures: Dict[str, str] = field(default_factory=dict)
    diagnostics: Dict[str, float] = field(default_factory=dict)


def run_trial(config: ExperimentConfig, sigma: float, seed: int) -> TrialRecord:
    """Draw one instance and run every requested estimator on it.

    Solver failures are recorded in ``failures`` instead of raised.
    """
    ts, ms, ns = trial_seeds(seed)
    truth = gen_truth(config.n, config.r, config.spectrum_arg, ts)
    omega = sample_mask(config.n, config.p, ms)
    obs = observe(truth, omega, sigma, ns, keep_noise=config.certify, p=config.p)
    lam = config.lam(sigma)
    m_star = truth.M_star
    fro_star = float(np.linalg.norm(m_star))
    m_inf = float(np.max(np.abs(m_star)))
    wanted = set(config.estimators)
    errors, runtimes, failures = {}, {}, {}
    diag = {"mu": incoherence(truth)}
    z_cvx = pair = None

    def timed(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        except (NumericError, ParameterError, np.linalg.LinAlgError) as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"
            log.warning("trial seed=%d sigma=%g: %s failed: %s", seed, sigma, name, exc)
            return None
        finally:
            runtimes[name] = time.perf_counter() - t0

    def bundle(name, estimate):
        try:
            errors[name] = error_bundle(estimate, truth)
        except (NumericError, ParameterError, np.linalg.LinAlgError) as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"

    copts = convex.ConvexOptions(lam, max_iters=config.max_iters, accel=config.accel,
                                 tol_grad_map=config.tol_grad_map)
    if wanted & {"convex", "convex_rank_r"}:
        out = timed("convex", lambda: convex.solve_convex(obs, copts))
        if out is not None:
            z_cvx, rep = out
            diag.update(convex_iterations=rep.iterations, convex_grad_map=rep.grad_norm,
                        convex_converged=float(rep.converged))
            s = np.linalg.svd(z_cvx, compute_uv=False)
            diag["sv_ratio"] = float(s[config.r] / s[0]) if s[0] > 0 and config.r < s.size else 0.0
            if "convex" in wanted:
                bundle("convex", z_cvx)
            if "convex_rank_r" in wanted:
                z_r = convex.best_rank_r(z_cvx, config.r)
                diag["rank_r_gap"] = float(np.linalg.norm(z_r - z_cvx) / fro_star)
                bundle("convex_rank_r", z_r)
        elif "convex_rank_r" in wanted:
            failures.setdefault("convex_rank_r", failures["convex"])

    gopts = nonconvex.GdOptions(lam, config.p, t_max=config.t_max, tol_grad=config.tol_grad)
    for name, init in (("nonconvex_spectral", lambda: nonconvex.spectral_init(obs, config.r)),
                       ("nonconvex_oracle", lambda: nonconvex.oracle_init(truth))):
        if name not in wanted:
            continue
        out = timed(name, lambda: nonconvex.gd_solve(init(), obs, gopts))
        if out is None:
            continue
        found, rep = out
        bundle(name, found)
        diag[f"{name}_iterations"] = rep.iterations
        diag[f"{name}_grad_norm"] = rep.grad_norm
        diag[f"{name}_balance_gap"] = nonconvex.balance_gap(found)
        if pair is None:
            pair = found

    if "constrained" in wanted:
        kopts = replace(copts, inf_cap=m_inf)
        out = timed("constrained", lambda: convex.solve_constrained(obs, kopts))
        if out is not None:
            bundle("constrained", out[0])

    if "usvt" in wanted:
        tau = convex.usvt_threshold(config.n, config.p, sigma, m_inf, config.usvt_scale)
        z_u = timed("usvt", lambda: convex.solve_usvt(obs, tau))
        if z_u is not None:
            bundle("usvt", z_u)

    pair_dist = cert = None
    if z_cvx is not None and pair is not None:
        gap = float(np.linalg.norm(z_cvx - pair.Z))
        pair_dist = gap / fro_star
        diag["pair_gap_abs"] = gap
        if config.certify:
            s_star = truth.Sigma_star
            cert = timed("certificate", lambda: certify(
                z_cvx, pair, obs, lam, truth=truth, kappa=float(s_star[0] / s_star[-1]),
                sigma_min=float(s_star[-1])))
    return TrialRecord(seed, float(sigma), lam, errors, pair_dist, cert, runtimes, failures, diag)


def _trial_task(args):
    config, sigma, seed = args
    return run_trial(config, sigma, seed)


@dataclass
class SweepResult:
    config: ExperimentConfig
    records: List[TrialRecord]
    table: List[dict]

    def row(self, estimator, sigma):
        for row in self.table:
            if row["estimator"] == estimator and row["sigma"] == sigma:
                return row
        raise KeyError((estimator, sigma))

    def series(self, estimator, key):
        return np.array([self.row(estimator, s)[key] for s in self.config.sigma_grid])


def _mean(values):
    vals = [v for v in values if v is not None and np.isfinite(v)]
    return float(np.mean(vals)) if vals else float("nan")


def aggregate(config, records):
    table = []
    for sigma in config.sigma_grid:
        recs = [rec for rec in records if rec.sigma == sigma]
        pair_dist = _mean([rec.pair_dist for rec in recs])
        w = _mean([rec.certificate.w_spectral for rec in recs if rec.certificate])
        c = _mean([rec.certificate.c_inj for rec in recs if rec.certificate])
        for est in config.estimators:
            ok = [rec.errors[est] for rec in recs if est in rec.errors]
            table.append({
                "estimator": est,
                "sigma": sigma,
                "rel_fro": _mean([b.rel_fro for b in ok]),
                "rel_spec": _mean([b.rel_spec for b in ok]),
                "rel_inf": _mean([b.rel_inf for b in ok]),
                "pair_dist": pair_dist,
                "w_spectral": w,
                "c_inj": c,
                "trials": len(ok),
                "failures": len(recs) - len(ok),
            })
    return table


def _workers(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def run_sweep(config: ExperimentConfig, workers=None, write=True) -> SweepResult:
    """Run ``config.trials`` seeded trials per noise level and aggregate the means.

    Trial ``k`` uses seed ``base_seed + k`` at every noise level, so the
    curves share their truths, masks and noise shapes. With ``write`` the
    table goes to ``sweep.csv``, per-trial rows to ``trials.csv`` and the
    figures to ``figN.svg`` under ``config.out_dir``.
    """
    tasks = [(config, sigma, config.base_seed + k) for sigma in config.sigma_grid for k in range(config.trials)]
    nw = _workers(workers)
    if nw > 1:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            records = list(pool.map(_trial_task, tasks))
    else:
        records = [_trial_task(t) for t in tasks]
    result = SweepResult(config, records, aggregate(config, records))
    if write:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(result.table, out / "sweep.csv")
        write_trials_csv(records, out / "trials.csv")
        write_figures(result, out)
    return result


def write_sweep_csv(table, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in table:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


TRIAL_COLUMNS = ("seed", "sigma", "lam", "estimator", "rel_fro", "rel_spec", "rel_inf", "factor_2inf",
                 "pair_dist", "w_spectral", "pt_residual_fro", "c_inj", "gap_bound", "unique_optimum",
                 "runtime", "failure")


def write_trials_csv(records, path):
    """One row per (trial, estimator); ``seed`` and ``sigma`` reconstruct the trial."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRIAL_COLUMNS)
        writer.writeheader()
        for rec in records:
            cert = rec.certificate
            for est in sorted(set(rec.errors) | set(rec.failures) - {"certificate"}):
                b = rec.errors.get(est)
                writer.writerow({
                    "seed": rec.seed, "sigma": repr(rec.sigma), "lam": repr(rec.lam), "estimator": est,
                    "rel_fro": b and repr(b.rel_fro), "rel_spec": b and repr(b.rel_spec),
                    "rel_inf": b and repr(b.rel_inf), "factor_2inf": b and b.factor_2inf,
                    "pair_dist": rec.pair_dist,
                    "w_spectral": cert and cert.w_spectral, "pt_residual_fro": cert and cert.pt_residual_fro,
                    "c_inj": cert and cert.c_inj, "gap_bound": cert and cert.gap_bound,
                    "unique_optimum": cert and cert.unique_optimum,
                    "runtime": rec.runtimes.get(est), "failure": rec.failures.get(est, ""),
                })
