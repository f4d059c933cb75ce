"""Relative estimation errors and aligned factor errors."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericError
from .nonconvex import FactorPair
from .operators import procrustes_align

__all__ = ["ErrorBundle", "error_bundle", "two_inf"]

_ALIGN_PROBES = 32


def two_inf(A):
    """Largest row l2 norm."""
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", A, A))))


@dataclass(frozen=True)
class ErrorBundle:
    rel_fro: float
    rel_spec: float
    rel_inf: float
    factor_2inf: Optional[float] = None
    align_rotation: Optional[np.ndarray] = field(default=None, compare=False)

    def as_dict(self):
        return {"rel_fro": self.rel_fro, "rel_spec": self.rel_spec, "rel_inf": self.rel_inf,
                "factor_2inf": self.factor_2inf}


def _random_orthonormal(rng, r):
    q, R = np.linalg.qr(rng.standard_normal((r, r)))
    return q * np.sign(np.diag(R))


def error_bundle(Z_or_pair, truth, check=True):
    """Errors of an estimate against ``M*`` in Frobenius, spectral and entrywise norms.

    Each error is relative to the same norm of ``M*``. For a
    :class:`FactorPair` the stacked factors are also aligned to
    ``(X*; Y*)`` and the larger of the two ``2,inf`` factor errors is
    reported. With ``check`` the norm ordering ``||A|| <= ||A||_F <=
    n ||A||_inf`` and the optimality of the alignment against 32 random
    rotations are asserted.
    """
    pair = Z_or_pair if isinstance(Z_or_pair, FactorPair) else None
    Z = pair.Z if pair is not None else np.asarray(Z_or_pair, dtype=float)
    if not np.all(np.isfinite(Z)):
        raise NumericError("estimate has non-finite entries")
    Ms = truth.M_star
    D = Z - Ms
    fro, spec, inf = np.linalg.norm(D), np.linalg.norm(D, 2), np.max(np.abs(D))
    if check and not (spec <= fro * (1 + 1e-12) + 1e-300 and fro <= truth.n * inf * (1 + 1e-12) + 1e-300):
        raise NumericError("norm ordering violated", {"spec": spec, "fro": fro, "inf": inf})
    rel = (float(fro / np.linalg.norm(Ms)), float(spec / np.linalg.norm(Ms, 2)),
           float(inf / np.max(np.abs(Ms))))
    if pair is None:
        return ErrorBundle(*rel)
    F, F_ref = pair.stacked(), np.vstack([truth.X_star, truth.Y_star])
    H = procrustes_align(F, F_ref)
    if check:
        best = np.linalg.norm(F @ H - F_ref)
        rng = np.random.default_rng(0)
        for _ in range(_ALIGN_PROBES):
            other = np.linalg.norm(F @ _random_orthonormal(rng, pair.r) - F_ref)
            if other < best * (1 - 1e-12) - 1e-14:
                raise NumericError("Procrustes rotation beaten by a random rotation",
                                   {"aligned": best, "random": other})
    fac = max(two_inf(pair.X @ H - truth.X_star), two_inf(pair.Y @ H - truth.Y_star))
    return ErrorBundle(*rel, factor_2inf=fac, align_rotation=H)
