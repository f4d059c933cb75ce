"""Factored objective

    f(X, Y) = 1/(2p) ||P_Omega(X Y^T - M)||_F^2 + lam/(2p) (||X||_F^2 + ||Y||_F^2)

its gradient, gradient descent and factor diagnostics.
"""

import logging
import time
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DivergenceError, ParameterError, RankAmbiguityError
from .report import SolveReport

__all__ = [
    "FactorPair",
    "GdOptions",
    "objective_f",
    "gradient_f",
    "spectral_init",
    "oracle_init",
    "gd_solve",
    "balance_gap",
    "balanced_factorization",
    "BalanceDiagnostic",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FactorPair:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape != self.Y.shape:
            raise ParameterError(f"factor shapes disagree: {self.X.shape} vs {self.Y.shape}")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ParameterError("factors contain non-finite entries")

    @property
    def Z(self):
        return self.X @ self.Y.T

    @property
    def r(self):
        return self.X.shape[1]

    def stacked(self):
        return np.vstack([self.X, self.Y])

    def rotate(self, R):
        return FactorPair(self.X @ R, self.Y @ R)


@dataclass
class GdOptions:
    lam: float
    p: float
    eta: Optional[float] = None
    t_max: int = 10_000
    tol_grad: float = 1e-9

    def __post_init__(self):
        if self.eta is not None and not self.eta > 0:
            raise ParameterError(f"step size must be positive, got {self.eta}")
        if not 0 < self.p <= 1:
            raise ParameterError("p must lie in (0, 1]")
        if self.lam < 0:
            raise ParameterError("lam must be >= 0")
        if self.t_max < 0 or self.tol_grad < 0:
            raise ParameterError("t_max and tol_grad must be >= 0")


def _omega_residual(pair, obs):
    rows, cols = obs.omega.rows, obs.omega.cols
    return np.einsum("ij,ij->i", pair.X[rows], pair.Y[cols]) - obs.values


def objective_f(pair, obs, lam, p):
    if pair.X.shape[0] != obs.n:
        raise ParameterError("factor height differs from n")
    res = _omega_residual(pair, obs)
    reg = np.sum(pair.X**2) + np.sum(pair.Y**2)
    return (0.5 * float(res @ res) + 0.5 * lam * float(reg)) / p


def _grad(pair, obs, lam, p, res=None):
    if res is None:
        res = _omega_residual(pair, obs)
    S = obs.omega.sparse(res)
    GX = (S @ pair.Y + lam * pair.X) / p
    GY = (S.T @ pair.X + lam * pair.Y) / p
    return GX, GY


def gradient_f(pair, obs, lam, p):
    """``((P_Omega(XY^T - M) Y + lam X) / p, (P_Omega(XY^T - M)^T X + lam Y) / p)``."""
    if pair.X.shape[0] != obs.n:
        raise ParameterError("factor height differs from n")
    return _grad(pair, obs, lam, p)


def grad_norm(pair, obs, lam, p):
    GX, GY = _grad(pair, obs, lam, p)
    return float(np.sqrt(np.sum(GX**2) + np.sum(GY**2)))


def spectral_init(obs, r):
    """Balanced top-``r`` factors of ``p^{-1} P_Omega(M)``.

    Pads with zero columns (and warns) when fewer than ``r`` singular values
    are numerically nonzero.
    """
    if not 1 <= r <= obs.n:
        raise ParameterError(f"rank {r} out of range for n={obs.n}")
    P, s, Qt = np.linalg.svd(obs.data_matrix() / obs.p)
    s = s[:r].copy()
    tiny = s <= max(s[0] if s.size else 0.0, 1.0) * obs.n * np.finfo(float).eps
    if np.any(tiny):
        warnings.warn(f"spectral_init: only {int(np.sum(~tiny))} of {r} singular values are nonzero",
                      RuntimeWarning, stacklevel=2)
        s[tiny] = 0.0
    root = np.sqrt(s)
    return FactorPair(P[:, :r] * root, Qt[:r].T * root)


def oracle_init(truth):
    """The ground-truth balanced factors ``(X*, Y*)`` (simulation only)."""
    return FactorPair(truth.X_star.copy(), truth.Y_star.copy())


def balance_gap(pair):
    """``||X^T X - Y^T Y||_F``."""
    return float(np.linalg.norm(pair.X.T @ pair.X - pair.Y.T @ pair.Y))


def gd_solve(init: FactorPair, obs, opts: GdOptions):
    """Gradient descent on ``f`` from ``init``.

    Returns the iterate with the smallest gradient norm seen, plus a report
    carrying the objective, gradient-norm and balance-gap traces. Stops when
    the gradient norm reaches ``opts.tol_grad`` or after ``opts.t_max`` steps.
    With ``opts.eta`` unset the step is ``0.5 / sigma_max`` with
    ``sigma_max`` the top singular value of the initial product.

    Raises
    ------
    DivergenceError
        If ``f`` exceeds ten times its initial value.
    """
    t0 = time.perf_counter()
    lam, p = opts.lam, opts.p
    eta = opts.eta
    if eta is None:
        smax = float(np.linalg.norm(init.X, 2) * np.linalg.norm(init.Y, 2))
        eta = 0.5 / max(smax, np.finfo(float).tiny)
    X, Y = init.X.copy(), init.Y.copy()
    report = SolveReport(reason="max_iters")
    pair = FactorPair(X, Y)
    best, best_norm = pair, np.inf
    f0 = None
    for t in range(opts.t_max + 1):
        res = _omega_residual(pair, obs)
        f = (0.5 * float(res @ res) + 0.5 * lam * float(np.sum(X**2) + np.sum(Y**2))) / p
        if f0 is None:
            f0 = f
        elif not np.isfinite(f) or f > 10 * max(f0, np.finfo(float).tiny):
            raise DivergenceError(f"gd_solve diverged at iteration {t} (f={f:.3e}, f0={f0:.3e})",
                                  {"trace": report.objective_trace, "eta": eta})
        GX, GY = _grad(pair, obs, lam, p, res)
        gn = float(np.sqrt(np.sum(GX**2) + np.sum(GY**2)))
        report.objective_trace.append(f)
        report.grad_norm_trace.append(gn)
        report.balance_trace.append(balance_gap(pair))
        if gn < best_norm:
            best, best_norm, report.best_iteration = pair, gn, t
        report.iterations = t
        if gn <= opts.tol_grad:
            report.reason = "tol"
            break
        if t == opts.t_max:
            break
        X = X - eta * GX
        Y = Y - eta * GY
        pair = FactorPair(X, Y)
    report.grad_norm = best_norm
    report.wall_time = time.perf_counter() - t0
    if not report.is_monotone():
        log.warning("gd_solve: objective increased along the path (eta=%.3g)", eta)
    return best, report


@dataclass(frozen=True)
class BalanceDiagnostic:
    """Comparison of an external factorization against the balanced SVD factors.

    ``Q`` maps the balanced factors onto the external ones (``X_ext = X_bal Q``),
    ``q_singular`` holds its singular values, ``lhs = ||S_Q - S_Q^{-1}||_F`` and
    ``rhs = ||X_ext^T X_ext - Y_ext^T Y_ext||_F / sigma_min(Z)``.
    """

    Q: np.ndarray
    q_singular: np.ndarray
    lhs: float
    rhs: float

    @property
    def holds(self):
        return self.lhs <= self.rhs * (1 + 1e-10) + 1e-12


def balanced_factorization(Z, r=None, external: Optional[FactorPair] = None, gap=10.0):
    """Balanced factors ``X = U S^{1/2}``, ``Y = V S^{1/2}`` of a rank-``r`` matrix.

    If ``external`` factors ``(X~, Y~)`` of the same matrix are given, also
    returns the diagnostic for ``Q = S^{-1/2} U^T X~``: the singular values of
    ``Q`` satisfy ``||S_Q - S_Q^{-1}||_F <= ||X~^T X~ - Y~^T Y~||_F / sigma_min``.
    """
    Z = np.asarray(Z, dtype=float)
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    floor = max(s[0], np.finfo(float).tiny) * max(Z.shape) * np.finfo(float).eps
    if r is None:
        if external is not None:
            r = external.r
        else:
            nz = s > floor
            r = int(np.count_nonzero(nz))
    if not 1 <= r <= s.size or s[r - 1] <= floor:
        raise RankAmbiguityError(f"matrix is rank deficient for r={r}", {"singular_values": s})
    if r < s.size and s[r] * gap > s[r - 1]:
        raise RankAmbiguityError(f"matrix is not numerically rank {r}", {"singular_values": s})
    root = np.sqrt(s[:r])
    pair = FactorPair(U[:, :r] * root, Vt[:r].T * root)
    if external is None:
        return pair, None
    Q = (U[:, :r].T @ external.X) / root[:, None]
    q = np.linalg.svd(Q, compute_uv=False)
    lhs = float(np.linalg.norm(q - 1.0 / q))
    rhs = balance_gap(external) / s[r - 1]
    return pair, BalanceDiagnostic(Q, q, lhs, rhs)
