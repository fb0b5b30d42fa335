"""Dense convex QP solving: ADMM solver (compiled kernel when available) and a KKT oracle."""

from .kkt import kkt_oracle
from .solver import (
    BACKEND,
    INFEASIBLE,
    MAX_ITER,
    OPTIMAL,
    QpError,
    QpProblem,
    QpSettings,
    QpSolution,
    QpSolver,
    compiled_available,
    solve,
)

__all__ = [
    "BACKEND",
    "INFEASIBLE",
    "MAX_ITER",
    "OPTIMAL",
    "QpError",
    "QpProblem",
    "QpSettings",
    "QpSolution",
    "QpSolver",
    "compiled_available",
    "kkt_oracle",
    "solve",
]
