"""Numerical optimality certificates for the nuclear-norm program.

A rank-``r`` point ``Z = U S V^T`` minimizes ``g`` when

    lam^{-1} P_Omega(M - Z) = U V^T + W,   W in T-perp,   ||W|| <= 1,

and it is the unique minimizer when additionally ``||W|| < 1`` and
``P_Omega`` is injective on the tangent space ``T``. The functions here
measure each piece of that statement on concrete matrices.
"""

from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericError, OracleRequiredError, ParameterError, RankAmbiguityError
from .nonconvex import FactorPair, grad_norm
from .operators import TangentSpace, project_omega, project_omega_debias, spectral_norm, tangent_project

__all__ = [
    "KKTDecomposition",
    "ConditionCheck",
    "GapBound",
    "Verdict",
    "CertificateReport",
    "detect_rank",
    "kkt_decompose",
    "check_conditions",
    "injectivity_constant",
    "gap_bound",
    "verify_unique_optimum",
    "certify",
]

DENSE_INJECTIVITY_LIMIT = 4000


def detect_rank(s, gap=10.0):
    """Rank at the largest singular-value ratio, provided that ratio is at least ``gap``.

    A spectrum without such a drop is ambiguous, full-rank ones included.

    Singular values below ``n * eps * s[0]`` are treated as zero, so an
    exactly low-rank matrix is always detected.
    """
    s = np.asarray(s, dtype=float)
    if s.size == 0 or s[0] == 0:
        raise RankAmbiguityError("zero matrix has no well-defined rank", {"singular_values": s})
    floor = s[0] * s.size * np.finfo(float).eps
    clipped = np.maximum(s, floor)
    ratios = clipped[:-1] / clipped[1:]
    if ratios.size == 0:
        return 1
    k = int(np.argmax(ratios))
    if ratios[k] < gap:
        raise RankAmbiguityError(f"no singular-value gap of {gap}x found", {"singular_values": s})
    return k + 1


class KKTDecomposition(NamedTuple):
    pt_residual_fro: float
    w_spectral: float
    tangent: TangentSpace


def _as_matrix(Z_or_pair):
    if isinstance(Z_or_pair, FactorPair):
        return Z_or_pair.Z, Z_or_pair.r
    return np.asarray(Z_or_pair, dtype=float), None


def kkt_decompose(Z_or_pair, obs, lam, r=None, gap=10.0):
    """Split ``D = lam^{-1} P_Omega(M - Z)`` along the tangent space of ``Z``.

    Returns ``||P_T(D) - U V^T||_F``, the spectral norm of ``P_T-perp(D)``
    and the tangent space. The rank comes from ``r``, the factor width of a
    :class:`FactorPair`, or a ``gap``-fold singular-value drop, in that order.
    """
    Z, r_pair = _as_matrix(Z_or_pair)
    if Z.shape != (obs.n, obs.n):
        raise ParameterError("point and observation dimensions differ")
    P, s, Qt = np.linalg.svd(Z)
    if r is None:
        r = r_pair if r_pair is not None else detect_rank(s, gap)
    T = TangentSpace(P[:, :r], Qt[:r].T)
    D = np.zeros_like(Z)
    D[obs.omega.rows, obs.omega.cols] = -obs.residual(Z) / lam
    PD = tangent_project(T, D)
    resid = float(np.linalg.norm(PD - T.U @ T.V.T))
    w = spectral_norm(D - PD, tol=1e-9)
    return KKTDecomposition(resid, w, T)


@dataclass(frozen=True)
class ConditionCheck:
    noise_norm: float
    debias_norm: float
    threshold: float

    @property
    def cond_noise(self):
        return self.noise_norm < self.threshold

    @property
    def cond_debias(self):
        return self.debias_norm < self.threshold


def check_conditions(pair, obs, truth, lam):
    """Compare ``||P_Omega(E)||`` and ``||P_Omega(XY^T - M*) - p (XY^T - M*)||`` with ``lam / 8``.

    Needs the retained noise matrix and the ground truth.
    """
    if obs.noise_oracle is None or truth is None:
        raise OracleRequiredError("condition checks need the noise oracle and the ground truth")
    noise = spectral_norm(project_omega(obs.noise_oracle, obs.omega), tol=1e-8)
    Z = pair.Z if isinstance(pair, FactorPair) else np.asarray(pair)
    debias = spectral_norm(project_omega_debias(Z - truth.M_star, obs.omega, obs.p), tol=1e-8)
    return ConditionCheck(noise, debias, lam / 8.0)


def _tangent_map(U, V, rows, cols):
    """Sparse matrix of ``(vec A, vec B) -> (U A^T + B V^T)[rows, cols]``.

    ``A`` occupies coordinates ``j * r + a`` and ``B`` occupies ``n r + i * r + a``.
    """
    n, r = U.shape
    m = rows.size
    a = np.arange(r)
    ri = np.repeat(np.arange(m), 2 * r)
    ci = np.concatenate([cols[:, None] * r + a, n * r + rows[:, None] * r + a], axis=1).ravel()
    vals = np.concatenate([U[rows], V[cols]], axis=1).ravel()
    return sp.csr_matrix((vals, (ri, ci)), shape=(m, 2 * n * r))


def _parametrization_kernel(T):
    """Orthonormal basis of ``{(V C^T, -U C)}``, the pairs with ``U A^T + B V^T = 0``."""
    n, r = T.U.shape
    cols = []
    for c in range(r * r):
        C = np.zeros((r, r))
        C.flat[c] = 1.0
        cols.append(np.concatenate([(T.V @ C.T).ravel(), (-T.U @ C).ravel()]))
    K = np.column_stack(cols)
    q, _ = np.linalg.qr(K)
    return q


def _injectivity_dense(T, omega, p):
    n, r = T.U.shape
    L = _tangent_map(T.U, T.V, omega.rows, omega.cols)
    full_r, full_c = np.divmod(np.arange(n * n), n)
    J = _tangent_map(T.U, T.V, full_r, full_c)
    quad = (L.T @ L).toarray() / p
    gram = (J.T @ J).toarray()
    kern = _parametrization_kernel(T)
    shift = 1.0 / p + 1.0
    # kernel directions pushed to eigenvalue `shift`, above every admissible quotient
    proj = kern @ kern.T
    vals = sla.eigh(quad + shift * proj, gram + proj, eigvals_only=True, subset_by_index=[0, 0])
    return float(vals[0])


def _injectivity_lanczos(T, omega, p, tol, seed):
    n = T.n
    mask = omega.dense()

    # identity shift on T keeps the operator nonzero when the mask is full
    def apply(h):
        PH = tangent_project(T, h.reshape(n, n))
        H = PH.copy()
        H[mask] = 0.0
        return (tangent_project(T, H) / p + PH).ravel()

    op = spla.LinearOperator((n * n, n * n), matvec=apply, dtype=float)
    rng = np.random.default_rng(seed)
    v0 = tangent_project(T, rng.standard_normal((n, n))).ravel()
    try:
        top = spla.eigsh(op, k=1, which="LA", v0=v0, tol=tol, maxiter=20 * n * n,
                         return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise NumericError("injectivity Lanczos probe did not converge",
                           {"eigenvalues": exc.eigenvalues}) from exc
    return 1.0 / p - (float(top[0]) - 1.0)


def injectivity_constant(T, omega, p, method="auto", tol=1e-12, seed=0):
    """Smallest value of ``p^{-1} ||P_Omega(H)||_F^2 / ||H||_F^2`` over ``H`` in ``T``.

    ``method="dense"`` builds the quadratic form on the ``(A, B)``
    parametrization ``H = U A^T + B V^T`` and solves a generalized
    eigenproblem with the ``r^2``-dimensional redundancy deflated.
    ``method="lanczos"`` runs a Krylov eigensolver on the shifted operator
    ``p^{-1} P_T P_{Omega-perp} P_T``, whose top eigenvalue on ``T`` is
    ``1/p - c_inj``. ``"auto"`` picks dense when ``n r <= 4000``.
    """
    if omega.n != T.n:
        raise ParameterError("mask and tangent space dimensions differ")
    if len(omega) == 0:
        return 0.0
    if method == "auto":
        method = "dense" if T.n * T.r <= DENSE_INJECTIVITY_LIMIT else "lanczos"
    if method == "dense":
        c = _injectivity_dense(T, omega, p)
    elif method == "lanczos":
        c = _injectivity_lanczos(T, omega, p, tol, seed)
    else:
        raise ParameterError(f"unknown method {method!r}")
    return float(min(max(c, 0.0), 1.0 / p))


@dataclass(frozen=True)
class GapBound:
    """Envelope ``(kappa / c_inj) sigma_min^{-1/2} ||grad f||_F`` with its hypotheses."""

    envelope: float
    grad_norm: float
    hypotheses: dict = field(default_factory=dict)

    @property
    def valid(self):
        return all(self.hypotheses.values())


def gap_bound(pair, obs, lam, p, c_inj, kappa, sigma_min, small_grad_c=1.0, conditions=None):
    """Certified envelope on ``||X Y^T - Z_cvx||_F`` from an approximate critical point.

    The absolute constant of the underlying inequality is taken as 1. The
    returned hypotheses are: small gradient (``||grad f|| <=
    c sqrt(c_inj p) / kappa * lam / p * sqrt(sigma_min)`` with ``c =
    small_grad_c``), factor singular values inside ``[sqrt(sigma_min / 2),
    sqrt(2 sigma_max)]``, positive ``c_inj`` and, if ``conditions`` is
    given, both regularization conditions.
    """
    gn = grad_norm(pair, obs, lam, p)
    sigma_max = kappa * sigma_min
    hyp = {"c_inj_positive": c_inj > 0}
    if c_inj > 0:
        envelope = kappa / c_inj / np.sqrt(sigma_min) * gn
        hyp["small_gradient"] = gn <= small_grad_c * np.sqrt(c_inj * p) / kappa * lam / p * np.sqrt(sigma_min)
    else:
        envelope = np.inf
        hyp["small_gradient"] = False
    lo, hi = np.sqrt(sigma_min / 2), np.sqrt(2 * sigma_max)
    sv = np.concatenate([np.linalg.svd(pair.X, compute_uv=False), np.linalg.svd(pair.Y, compute_uv=False)])
    hyp["singular_values_in_range"] = bool(np.all((sv >= lo) & (sv <= hi)))
    if conditions is not None:
        hyp["cond_noise"] = conditions.cond_noise
        hyp["cond_debias"] = conditions.cond_debias
    return GapBound(float(envelope), gn, {k: bool(v) for k, v in hyp.items()})


@dataclass(frozen=True)
class Verdict:
    unique_optimum: bool
    pt_residual_fro: float
    w_spectral: float
    c_inj: float

    def __bool__(self):
        return self.unique_optimum


def verify_unique_optimum(Z_or_pair, obs, lam, tol=1e-6, r=None, probe_tol=1e-12):
    """Check the three ingredients of a unique-minimizer certificate at ``Z``.

    True iff the tangent residual ``||P_T(P_Omega(M - Z)) - lam U V^T||_F``
    is at most ``tol * lam`` (equivalently ``pt_residual_fro <= tol``),
    ``||P_T-perp(D)|| <= 1 - tol`` and the injectivity constant on ``T``
    exceeds ``10 * probe_tol``.
    """
    kkt = kkt_decompose(Z_or_pair, obs, lam, r=r)
    c = injectivity_constant(kkt.tangent, obs.omega, obs.p, tol=probe_tol)
    ok = kkt.pt_residual_fro <= tol and kkt.w_spectral <= 1 - tol and c > 10 * probe_tol
    return Verdict(bool(ok), kkt.pt_residual_fro, kkt.w_spectral, c)


@dataclass
class CertificateReport:
    pt_residual_fro: float
    w_spectral: float
    c_inj: float
    gap_bound: float
    gap_bound_valid: bool
    unique_optimum: bool
    small_gradient: bool
    factor_sv_in_range: bool
    cond_noise: Optional[bool] = None
    cond_debias: Optional[bool] = None
    noise_norm: Optional[float] = None
    debias_norm: Optional[float] = None

    def to_record(self):
        """Flat ``key=value`` lines; absent oracle fields are omitted."""
        return "\n".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}"
                         for k, v in asdict(self).items() if v is not None) + "\n"

    @classmethod
    def from_record(cls, text):
        kv = dict(line.split("=", 1) for line in text.strip().splitlines() if line)
        out = {}
        for k, v in kv.items():
            out[k] = v == "True" if v in ("True", "False") else float(v)
        return cls(**out)


def certify(Z, pair, obs, lam, r=None, truth=None, tol=1e-6, kappa=None, sigma_min=None):
    """Full certificate for a convex point ``Z`` and a factored point ``pair``.

    The KKT split and uniqueness verdict are taken at ``Z``; the injectivity
    constant at the tangent space of ``pair`` feeds the gap envelope.
    Without ``kappa``/``sigma_min`` they are estimated from ``pair``.
    """
    verdict = verify_unique_optimum(Z, obs, lam, tol=tol, r=r)
    Tn = TangentSpace.of(pair.Z, pair.r)
    c_inj = injectivity_constant(Tn, obs.omega, obs.p)
    if kappa is None or sigma_min is None:
        s = np.linalg.svd(pair.Z, compute_uv=False)[: pair.r]
        kappa, sigma_min = float(s[0] / s[-1]), float(s[-1])
    conds = None
    if truth is not None and obs.noise_oracle is not None:
        conds = check_conditions(pair, obs, truth, lam)
    gb = gap_bound(pair, obs, lam, obs.p, c_inj, kappa, sigma_min, conditions=conds)
    return CertificateReport(
        pt_residual_fro=verdict.pt_residual_fro,
        w_spectral=verdict.w_spectral,
        c_inj=c_inj,
        gap_bound=gb.envelope,
        gap_bound_valid=gb.valid,
        unique_optimum=verdict.unique_optimum,
        small_gradient=gb.hypotheses["small_gradient"],
        factor_sv_in_range=gb.hypotheses["singular_values_in_range"],
        cond_noise=None if conds is None else conds.cond_noise,
        cond_debias=None if conds is None else conds.cond_debias,
        noise_norm=None if conds is None else conds.noise_norm,
        debias_norm=None if conds is None else conds.debias_norm,
    )
