"""Solver bookkeeping shared by the convex and factored solvers."""

from dataclasses import dataclass, field
from typing import List


@dataclass
class SolveReport:
    iterations: int = 0
    objective_trace: List[float] = field(default_factory=list)
    grad_norm: float = float("nan")
    reason: str = ""
    wall_time: float = 0.0
    # factored solver only
    grad_norm_trace: List[float] = field(default_factory=list)
    balance_trace: List[float] = field(default_factory=list)
    best_iteration: int = 0

    @property
    def converged(self):
        return self.reason == "tol"

    def is_monotone(self, slack=1e-12):
        tr = self.objective_trace
        return all(b <= a + slack * max(1.0, abs(a)) for a, b in zip(tr, tr[1:]))
