"""Planted low-rank truths, Bernoulli sampling masks and Gaussian noise."""

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError

__all__ = [
    "LowRankTruth",
    "Omega",
    "Observation",
    "ModelConstants",
    "gen_truth",
    "sample_mask",
    "observe",
    "incoherence",
    "model_constants",
]


def _orthonormal_basis(rng, n, r):
    """QR of a Gaussian matrix with the sign of diag(R) fixed to be nonnegative."""
    q, rmat = np.linalg.qr(rng.standard_normal((n, r)))
    signs = np.sign(np.diag(rmat))
    signs[signs == 0] = 1.0
    return q * signs


@dataclass(frozen=True, eq=False)
class LowRankTruth:
    """Rank-``r`` ground truth ``M* = U* diag(Sigma*) V*^T`` of size ``n x n``."""

    U_star: np.ndarray
    V_star: np.ndarray
    Sigma_star: np.ndarray

    def __post_init__(self):
        U, V, s = self.U_star, self.V_star, np.asarray(self.Sigma_star, dtype=float)
        object.__setattr__(self, "Sigma_star", s)
        if U.ndim != 2 or U.shape != V.shape:
            raise ParameterError(f"factor shapes disagree: {U.shape} vs {V.shape}")
        n, r = U.shape
        if not 1 <= r <= n or s.shape != (r,):
            raise ParameterError(f"invalid rank {r} for n={n} with {s.shape[0]} singular values")
        if np.any(s <= 0) or np.any(np.diff(s) > 0):
            raise ParameterError("spectrum must be strictly positive and non-increasing")
        eye = np.eye(r)
        if not (np.allclose(U.T @ U, eye, atol=1e-12, rtol=0)
                and np.allclose(V.T @ V, eye, atol=1e-12, rtol=0)):
            raise ParameterError("U_star and V_star must have orthonormal columns")

    @property
    def n(self):
        return self.U_star.shape[0]

    @property
    def r(self):
        return self.U_star.shape[1]

    @cached_property
    def X_star(self):
        return self.U_star * np.sqrt(self.Sigma_star)

    @cached_property
    def Y_star(self):
        return self.V_star * np.sqrt(self.Sigma_star)

    @cached_property
    def M_star(self):
        return (self.U_star * self.Sigma_star) @ self.V_star.T

    def entries(self, rows, cols):
        """Entries of ``M*`` at the given coordinates without forming the dense matrix."""
        return np.einsum("ij,ij->i", self.U_star[rows] * self.Sigma_star, self.V_star[cols])


def gen_truth(n: int, r: int, spectrum: Union[str, Sequence[float]] = "flat", seed: int = 0) -> LowRankTruth:
    """Draw a rank-``r`` truth with random orthonormal singular subspaces.

    ``spectrum="flat"`` gives all singular values equal to one (condition
    number 1). Otherwise ``spectrum`` lists the ``r`` singular values in
    descending order.
    """
    if not isinstance(n, (int, np.integer)) or not isinstance(r, (int, np.integer)) or not 1 <= r <= n:
        raise ParameterError(f"need 1 <= r <= n, got n={n}, r={r}")
    if isinstance(spectrum, str):
        if spectrum != "flat":
            raise ParameterError(f"unknown spectrum preset {spectrum!r}")
        sigma = np.ones(r)
    else:
        sigma = np.asarray(spectrum, dtype=float)
        if sigma.shape != (r,) or np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
            raise ParameterError("spectrum must hold r finite positive values")
        if np.any(np.diff(sigma) > 0):
            raise ParameterError("spectrum must be non-increasing")
    rng = np.random.default_rng(seed)
    U = _orthonormal_basis(rng, n, r)
    V = _orthonormal_basis(rng, n, r)
    return LowRankTruth(U, V, sigma)


class Omega:
    """Sorted, duplicate-free set of observed coordinates of an ``n x n`` matrix.

    Stored as two aligned integer arrays in row-major order.
    """

    __slots__ = ("n", "rows", "cols", "_flat")

    def __init__(self, n, rows, cols):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if rows.shape != cols.shape:
            raise ParameterError("row and column index arrays differ in length")
        if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
            raise ParameterError(f"indices out of range for n={n}")
        flat = rows * n + cols
        order = np.argsort(flat, kind="stable")
        flat = flat[order]
        if flat.size > 1 and np.any(np.diff(flat) == 0):
            raise ParameterError("duplicate indices in Omega")
        self.n = int(n)
        self._flat = flat
        self.rows = rows[order]
        self.cols = cols[order]

    @classmethod
    def from_pairs(cls, n, pairs):
        pairs = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        return cls(n, pairs[:, 0], pairs[:, 1])

    @classmethod
    def full(cls, n):
        rows, cols = np.divmod(np.arange(n * n), n)
        return cls(n, rows, cols)

    def __len__(self):
        return self.rows.size

    def __eq__(self, other):
        return isinstance(other, Omega) and self.n == other.n and np.array_equal(self._flat, other._flat)

    def __repr__(self):
        return f"Omega(n={self.n}, size={len(self)})"

    def pairs(self):
        return np.column_stack([self.rows, self.cols])

    def dense(self):
        """Boolean indicator matrix."""
        mask = np.zeros((self.n, self.n), dtype=bool)
        mask[self.rows, self.cols] = True
        return mask

    def sparse(self, values):
        """CSR matrix carrying ``values`` on the observed coordinates."""
        return sp.csr_matrix((values, (self.rows, self.cols)), shape=(self.n, self.n))


def sample_mask(n: int, p: float, seed: int = 0) -> Omega:
    """Include every coordinate independently with probability ``p``."""
    if not 0 < p <= 1:
        raise ParameterError(f"sampling probability must lie in (0, 1], got {p}")
    rng = np.random.default_rng(seed)
    keep = rng.random((n, n)) < p
    rows, cols = np.nonzero(keep)
    return Omega(n, rows, cols)


@dataclass(eq=False)
class Observation:
    """Noisy entries ``M_ij = M*_ij + E_ij`` on ``omega``."""

    n: int
    omega: Omega
    values: np.ndarray
    p: float
    sigma: float = 0.0
    noise_oracle: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.omega.n != self.n:
            raise ParameterError("omega dimension differs from n")
        if self.values.shape != (len(self.omega),):
            raise ParameterError("values must align with omega")
        if self.noise_oracle is not None and self.noise_oracle.shape != (self.n, self.n):
            raise ParameterError("noise oracle must be n x n")

    def data_matrix(self):
        """Zero-filled ``P_Omega(M)`` as a dense array."""
        out = np.zeros((self.n, self.n))
        out[self.omega.rows, self.omega.cols] = self.values
        return out

    def residual(self, Z):
        """``Z_ij - M_ij`` on the observed coordinates."""
        return Z[self.omega.rows, self.omega.cols] - self.values

    def save(self, path, noise_path=None):
        """Write ``n p sigma`` header then ``i j value`` lines.

        The noise oracle, if present, goes to ``noise_path`` (default
        ``<path>.noise``) with the same layout over all ``n^2`` entries.
        """
        path = Path(path)
        _write_entries(path, self.n, self.p, self.sigma, self.omega.rows, self.omega.cols, self.values)
        if self.noise_oracle is not None:
            noise_path = Path(noise_path) if noise_path else path.with_name(path.name + ".noise")
            full = Omega.full(self.n)
            _write_entries(noise_path, self.n, self.p, self.sigma, full.rows, full.cols,
                           self.noise_oracle[full.rows, full.cols])

    @classmethod
    def load(cls, path, noise_path=None):
        path = Path(path)
        n, p, sigma, rows, cols, values = _read_entries(path)
        noise = None
        if noise_path is None and path.with_name(path.name + ".noise").exists():
            noise_path = path.with_name(path.name + ".noise")
        if noise_path is not None:
            _, _, _, nr, nc, nv = _read_entries(Path(noise_path))
            noise = np.zeros((n, n))
            noise[nr, nc] = nv
        return cls(n, Omega(n, rows, cols), values, p, sigma, noise)


def _write_entries(path, n, p, sigma, rows, cols, values):
    with open(path, "w") as fh:
        fh.write(f"{n} {p!r} {sigma!r}\n")
        for i, j, v in zip(rows.tolist(), cols.tolist(), values.tolist()):
            fh.write(f"{i} {j} {v:.17g}\n")


def _read_entries(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ParameterError(f"{path}: header must read 'n p sigma'")
        n, p, sigma = int(header[0]), float(header[1]), float(header[2])
        body = np.loadtxt(fh, ndmin=2)
    if body.size == 0:
        body = np.empty((0, 3))
    if body.shape[1] != 3:
        raise ParameterError(f"{path}: entry lines must read 'i j value'")
    return n, p, sigma, body[:, 0].astype(np.int64), body[:, 1].astype(np.int64), body[:, 2]


def observe(truth: LowRankTruth, omega: Omega, sigma: float, seed: int = 0,
            keep_noise: bool = False, p: Optional[float] = None) -> Observation:
    """Add i.i.d. ``N(0, sigma^2)`` noise to the entries of ``M*`` on ``omega``.

    The full ``n x n`` noise matrix is drawn so that the noise seen on a
    coordinate does not depend on which other coordinates were sampled.
    ``p`` defaults to the empirical rate ``|omega| / n^2``.
    """
    if sigma < 0 or not np.isfinite(sigma):
        raise ParameterError(f"noise scale must be finite and >= 0, got {sigma}")
    if omega.n != truth.n:
        raise ParameterError("mask and truth dimensions differ")
    n = truth.n
    rng = np.random.default_rng(seed)
    E = sigma * rng.standard_normal((n, n))
    rows, cols = omega.rows, omega.cols
    values = truth.M_star[rows, cols] + E[rows, cols]
    if p is None:
        p = len(omega) / n**2
    return Observation(n, omega, values, float(p), float(sigma), E if keep_noise else None)


@dataclass(frozen=True)
class ModelConstants:
    mu: float
    kappa: float
    sigma_min: float
    sigma_max: float


def _row_norm_max_sq(A):
    return float(np.max(np.einsum("ij,ij->i", A, A)))


def incoherence(truth: LowRankTruth) -> float:
    """``mu = (n / r) * max(||U*||_{2,inf}^2, ||V*||_{2,inf}^2)``."""
    n, r = truth.n, truth.r
    return n / r * max(_row_norm_max_sq(truth.U_star), _row_norm_max_sq(truth.V_star))


def model_constants(truth: LowRankTruth) -> ModelConstants:
    s = truth.Sigma_star
    return ModelConstants(incoherence(truth), float(s[0] / s[-1]), float(s[-1]), float(s[0]))
