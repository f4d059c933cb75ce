"""Linear-algebra kernel: masked and tangent-space projections, SVT, spectral
norms and Procrustes alignment."""

import zlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import AlignmentError, NumericError, ParameterError

__all__ = [
    "TangentSpace",
    "project_omega",
    "project_omega_debias",
    "tangent_project",
    "tangent_complement",
    "svt",
    "nuclear_norm",
    "spectral_norm",
    "procrustes_align",
]


def _check_square(Z, omega):
    if Z.shape != (omega.n, omega.n):
        raise ParameterError(f"matrix shape {Z.shape} does not match mask dimension {omega.n}")


def project_omega(Z, omega):
    """Keep the entries of ``Z`` on ``omega`` and zero the rest (sparse result)."""
    Z = np.asarray(Z)
    _check_square(Z, omega)
    return omega.sparse(Z[omega.rows, omega.cols])


def project_omega_debias(Z, omega, p):
    """``P_Omega(Z) - p Z``, returned dense."""
    Z = np.asarray(Z, dtype=float)
    _check_square(Z, omega)
    out = -p * Z
    out[omega.rows, omega.cols] += Z[omega.rows, omega.cols]
    return out


@dataclass(frozen=True, eq=False)
class TangentSpace:
    """Tangent space ``{U A^T + B V^T}`` at a rank-``r`` matrix with bases ``U``, ``V``."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        if self.U.shape != self.V.shape:
            raise ParameterError("U and V must have the same shape")
        r = self.U.shape[1]
        eye = np.eye(r)
        if not (np.allclose(self.U.T @ self.U, eye, atol=1e-10, rtol=0)
                and np.allclose(self.V.T @ self.V, eye, atol=1e-10, rtol=0)):
            raise ParameterError("tangent-space bases must be orthonormal")

    @property
    def n(self):
        return self.U.shape[0]

    @property
    def r(self):
        return self.U.shape[1]

    @classmethod
    def of(cls, Z, r):
        """Tangent space at the best rank-``r`` approximation of ``Z``."""
        P, _, Qt = np.linalg.svd(Z)
        return cls(P[:, :r], Qt[:r].T)


def tangent_project(T, Z):
    """``U U^T Z + Z V V^T - U U^T Z V V^T``."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape != (T.n, T.n):
        raise ParameterError(f"matrix shape {Z.shape} does not match tangent space dimension {T.n}")
    U, V = T.U, T.V
    UtZ = U.T @ Z
    ZV = Z @ V
    return U @ UtZ + ZV @ V.T - U @ (UtZ @ V) @ V.T


def tangent_complement(T, Z):
    Z = np.asarray(Z, dtype=float)
    return Z - tangent_project(T, Z)


def _svt(Z, tau):
    if not np.all(np.isfinite(Z)):
        raise NumericError("svt: non-finite entries in input")
    try:
        P, s, Qt = np.linalg.svd(Z, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"svt: SVD failed ({exc})") from exc
    s = np.maximum(s - tau, 0.0)
    k = int(np.count_nonzero(s))
    return (P[:, :k] * s[:k]) @ Qt[:k], s


def svt(Z, tau):
    """Singular value soft-thresholding, the prox of ``tau * ||.||_*``.

    Returns
    -------
    out : ndarray
        ``P max(S - tau, 0) Q^T`` for the SVD ``Z = P S Q^T``.
    rank : int
        Number of singular values strictly above ``tau``.
    """
    if tau < 0:
        raise ParameterError(f"threshold must be >= 0, got {tau}")
    out, s = _svt(np.asarray(Z, dtype=float), tau)
    return out, int(np.count_nonzero(s))


def nuclear_norm(Z):
    return float(np.linalg.svd(np.asarray(Z, dtype=float), compute_uv=False).sum())


def _shape_seed(shape):
    return zlib.crc32(repr(tuple(shape)).encode())


def spectral_norm(A, tol=1e-10, max_iter=20000, dense_below=64):
    """Largest singular value of a dense or sparse matrix.

    Power iteration on ``A^T A`` from a start vector seeded by the matrix
    shape. It stops once both the last change and the extrapolated
    remaining change of the estimate are below ``tol`` relative.
    Matrices whose smaller side is at most ``dense_below`` go through a
    dense SVD instead.
    """
    m, n = A.shape
    if min(m, n) == 0:
        return 0.0
    if min(m, n) <= dense_below:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        if not np.all(np.isfinite(dense)):
            raise NumericError("spectral_norm: non-finite entries")
        return float(np.linalg.svd(dense, compute_uv=False)[0])
    if sp.issparse(A):
        if not np.all(np.isfinite(A.data)):
            raise NumericError("spectral_norm: non-finite entries")
        At = A.T.tocsr()
    else:
        A = np.asarray(A, dtype=float)
        if not np.all(np.isfinite(A)):
            raise NumericError("spectral_norm: non-finite entries")
        At = A.T
    rng = np.random.default_rng(_shape_seed(A.shape))
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est, prev_step = 0.0, np.inf
    for _ in range(max_iter):
        w = At @ (A @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
        new = float(np.sqrt(lam))
        step = abs(new - est)
        # geometric tail step * rho / (1 - rho), rho the contraction of successive steps
        rho = step / prev_step if prev_step > 0 else 0.0
        if step <= 4 * np.finfo(float).eps * new or (rho < 1 and step * rho / (1 - rho) <= tol * new and step <= tol * new):
            return float(new)
        est, prev_step = new, step
    raise NumericError(
        f"spectral_norm: power iteration did not converge in {max_iter} iterations",
        {"estimate": est, "iterations": max_iter},
    )


def procrustes_align(F, F_ref, rcond=1e-12):
    """Orthonormal ``H`` minimizing ``||F H - F_ref||_F``.

    ``H`` is the matrix sign of the cross-Gram ``F^T F_ref``: with
    ``F^T F_ref = A S B^T`` it equals ``A B^T``.
    """
    F = np.asarray(F, dtype=float)
    F_ref = np.asarray(F_ref, dtype=float)
    if F.shape != F_ref.shape:
        raise ParameterError(f"factor stacks differ in shape: {F.shape} vs {F_ref.shape}")
    A, s, Bt = np.linalg.svd(F.T @ F_ref)
    if s.size == 0 or s[-1] <= rcond * max(s[0], np.finfo(float).tiny):
        raise AlignmentError("cross-Gram F^T F_ref is singular; alignment undefined",
                             {"singular_values": s})
    return A @ Bt
