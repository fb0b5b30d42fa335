"""Direct KKT solve for equality-constrained QPs (test oracle)."""

from __future__ import annotations

import numpy as np

from .solver import QpError, QpProblem


def kkt_oracle(problem: QpProblem) -> np.ndarray:
    """Exact minimizer of an equality-constrained QP via its KKT system.

    Inequality rows are accepted only when both of their bounds are infinite.
    """
    if np.any(np.isfinite(problem.l)) or np.any(np.isfinite(problem.u)):
        raise QpError("kkt_oracle handles equality constraints only")
    n, m = problem.n, problem.A.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = problem.P
    K[:n, n:] = problem.A.T
    K[n:, :n] = problem.A
    rhs = np.concatenate([-problem.q, problem.b])
    if np.linalg.cond(K) > 1e13:
        raise QpError("singular KKT system")
    return np.linalg.solve(K, rhs)[:n]
