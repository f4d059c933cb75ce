"""Nuclear-norm regularized least squares and the two comparison estimators.

All solvers work on the objective

    g(Z) = 1/2 sum_{(i,j) in Omega} (Z_ij - M_ij)^2 + lam ||Z||_*

with proximal gradient steps ``Z <- svt(Z - step P_Omega(Z - M), step lam)``.
The smooth part has a 1-Lipschitz gradient, so ``step = 1`` is safe.
"""

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericError, ParameterError
from .operators import _svt, nuclear_norm
from .report import SolveReport

__all__ = [
    "ConvexOptions",
    "objective_g",
    "solve_convex",
    "solve_constrained",
    "best_rank_r",
    "solve_usvt",
    "usvt_threshold",
]


@dataclass
class ConvexOptions:
    lam: float
    max_iters: int = 5000
    step: float = 1.0
    accel: bool = False
    tol_grad_map: float = 1e-8
    inf_cap: Optional[float] = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError(f"lam must be positive, got {self.lam}")
        if not self.tol_grad_map > 0:
            raise ParameterError("tol_grad_map must be positive")
        if not 0 < self.step < 2:
            raise ParameterError(f"step must lie in (0, 2), got {self.step}")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")
        if self.inf_cap is not None and not self.inf_cap > 0:
            raise ParameterError("inf_cap must be positive")


def objective_g(Z, obs, lam):
    res = obs.residual(Z)
    return 0.5 * float(res @ res) + lam * nuclear_norm(Z)


def _masked(obs, vals):
    out = np.zeros((obs.n, obs.n))
    out[obs.omega.rows, obs.omega.cols] = vals
    return out


def _prox_step(Y, obs, lam, step, cap):
    """One forward-backward step from ``Y``; returns the new point and g at it."""
    G = Y - step * _masked(obs, obs.residual(Y))
    Z, s = _svt(G, step * lam)
    if cap is not None:
        np.clip(Z, -cap, cap, out=Z)
        res = obs.residual(Z)
        return Z, 0.5 * float(res @ res) + lam * nuclear_norm(Z)
    res = obs.residual(Z)
    return Z, 0.5 * float(res @ res) + lam * float(s.sum())


def _solve(obs, opts, Z0, cap):
    t0 = time.perf_counter()
    n = obs.n
    Z = np.zeros((n, n)) if Z0 is None else np.array(Z0, dtype=float)
    report = SolveReport()
    g = objective_g(Z, obs, opts.lam)
    report.objective_trace.append(g)
    step, lam = opts.step, opts.lam
    Z_prev, t_mom = Z, 1.0
    report.reason = "max_iters"
    for k in range(1, opts.max_iters + 1):
        if opts.accel and k > 1:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom**2))
            Yk = Z + ((t_mom - 1.0) / t_next) * (Z - Z_prev)
            Z_new, g_new = _prox_step(Yk, obs, lam, step, cap)
            if g_new > g:
                # restart momentum from a plain step
                t_next, Yk = 1.0, Z
                Z_new, g_new = _prox_step(Z, obs, lam, step, cap)
            t_mom = t_next
        else:
            Yk = Z
            Z_new, g_new = _prox_step(Z, obs, lam, step, cap)
        gmap = float(np.linalg.norm(Z_new - Yk)) / step
        Z_prev, Z, g = Z, Z_new, g_new
        report.objective_trace.append(g)
        report.iterations = k
        report.grad_norm = gmap
        if gmap <= opts.tol_grad_map:
            report.reason = "tol"
            break
    report.wall_time = time.perf_counter() - t0
    return Z, report


def solve_convex(obs, opts: ConvexOptions, Z0=None):
    """Proximal gradient for ``g``; returns the last iterate and a report.

    Stops once the gradient map ``||Z_next - Z||_F / step`` drops to
    ``opts.tol_grad_map``; hitting ``max_iters`` is reported, not raised.
    """
    return _solve(obs, opts, Z0, None)


def solve_constrained(obs, opts: ConvexOptions, Z0=None):
    """``g`` restricted to ``||Z||_inf <= opts.inf_cap``.

    Every SVT step is followed by entrywise clipping to ``[-cap, cap]``.
    """
    if opts.inf_cap is None:
        raise ParameterError("solve_constrained needs opts.inf_cap")
    return _solve(obs, opts, Z0, opts.inf_cap)


def best_rank_r(Z, r):
    """Truncated SVD keeping the top ``r`` singular triplets."""
    Z = np.asarray(Z, dtype=float)
    if not 1 <= r <= min(Z.shape):
        raise ParameterError(f"rank {r} out of range for shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise NumericError("best_rank_r: non-finite entries")
    P, s, Qt = np.linalg.svd(Z, full_matrices=False)
    return (P[:, :r] * s[:r]) @ Qt[:r]


def usvt_threshold(n, p, sigma, m_inf, scale=0.5):
    """Threshold for :func:`solve_usvt` derived from ``1.5 max(sigma, m_inf) / sqrt(n^3 p)``.

    That weight regularizes an objective normalized by ``n^2`` (squared
    error averaged over all entries), whose minimizer soft-thresholds
    ``p^{-1} P_Omega(M)`` at ``weight * n^2 / 2``. ``scale`` is the factor
    multiplying ``weight * n^2``; 0.5 corresponds to that normalization.
    """
    weight = 1.5 * max(sigma, m_inf) * np.sqrt(1.0 / (n**3 * p))
    return scale * n**2 * weight


def solve_usvt(obs, tau):
    """One soft-thresholding round on the rescaled zero-filled data ``p^{-1} P_Omega(M)``."""
    if tau < 0:
        raise ParameterError(f"threshold must be >= 0, got {tau}")
    Z, _ = _svt(obs.data_matrix() / obs.p, tau)
    return Z
