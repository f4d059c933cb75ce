"""Noisy low-rank matrix completion: convex and factored estimators with
numerical optimality certificates and a seeded experiment harness."""

from .convex import (ConvexOptions, best_rank_r, objective_g, solve_constrained, solve_convex, solve_usvt,
                     usvt_threshold)
from .duality import (CertificateReport, certify, check_conditions, gap_bound, injectivity_constant,
                      kkt_decompose, verify_unique_optimum)
from .errors import (AlignmentError, DivergenceError, NumericError, OracleRequiredError, ParameterError,
                     RankAmbiguityError)
from .metrics import ErrorBundle, error_bundle
from .model import (LowRankTruth, ModelConstants, Observation, Omega, gen_truth, incoherence, model_constants,
                    observe, sample_mask)
from .nonconvex import (FactorPair, GdOptions, balance_gap, balanced_factorization, gd_solve, gradient_f,
                        objective_f, oracle_init, spectral_init)
from .operators import (TangentSpace, nuclear_norm, procrustes_align, project_omega, project_omega_debias,
                        spectral_norm, svt, tangent_complement, tangent_project)
from .report import SolveReport

__version__ = "0.1.0"
