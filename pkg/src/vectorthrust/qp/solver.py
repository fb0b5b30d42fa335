"""Dense convex QP solver.

Problem form::

    minimize    1/2 x'Px + q'x
    subject to  A x  = b
                l <= C x <= u

Solved by operator splitting (OSQP-style relaxed ADMM) on a Ruiz-equilibrated
copy of the problem, with adaptive step size, a primal-infeasibility
certificate and an active-set polishing step that recovers the exact KKT point
once the iterates have identified the active constraints.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cholesky, LinAlgError

from . import _admm_py

if os.environ.get("VECTORTHRUST_PURE_PYTHON"):
    _core = None
else:
    try:
        from . import _admm_core as _core
    except ImportError:  # extension not built
        _core = None

BACKEND = "cython" if _core is not None else "numpy"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"

_RHO_MIN, _RHO_MAX = 1e-6, 1e6
_EQ_RHO_SCALE = 1e3


class QpError(ValueError):
    """Malformed problem data."""


def _kernel(backend: str):
    if backend == "auto":
        return _core.admm_iterations if _core is not None else _admm_py.admm_iterations
    if backend == "numpy":
        return _admm_py.admm_iterations
    if backend == "cython":
        if _core is None:
            raise QpError("compiled ADMM kernel is not available")
        return _core.admm_iterations
    raise QpError(f"unknown backend {backend!r}")


def compiled_available() -> bool:
    return _core is not None


@dataclass
class QpProblem:
    P: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    C: np.ndarray | None = None
    l: np.ndarray | None = None
    u: np.ndarray | None = None
    q: np.ndarray | None = None

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        n = self.P.shape[0]
        if self.P.shape != (n, n):
            raise QpError(f"P must be square, got {self.P.shape}")
        if np.max(np.abs(self.P - self.P.T), initial=0.0) > 1e-12 * max(1.0, np.abs(self.P).max(initial=0.0)):
            raise QpError("P must be symmetric")
        self.q = np.zeros(n) if self.q is None else np.asarray(self.q, dtype=float).reshape(n)
        self.A = np.zeros((0, n)) if self.A is None else np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.zeros(0) if self.b is None else np.asarray(self.b, dtype=float).reshape(-1)
        self.C = np.zeros((0, n)) if self.C is None else np.asarray(self.C, dtype=float).reshape(-1, n)
        m_i = self.C.shape[0]
        self.l = np.full(m_i, -np.inf) if self.l is None else np.asarray(self.l, dtype=float).reshape(-1)
        self.u = np.full(m_i, np.inf) if self.u is None else np.asarray(self.u, dtype=float).reshape(-1)
        if self.b.shape[0] != self.A.shape[0]:
            raise QpError("A and b disagree in row count")
        if self.l.shape[0] != m_i or self.u.shape[0] != m_i:
            raise QpError("C, l and u disagree in row count")
        if np.any(self.l > self.u):
            raise QpError("l <= u violated")
        for name in ("P", "q", "A", "b", "C"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise QpError(f"{name} contains non-finite entries")

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def stacked(self):
        """All constraints as one ``lo <= M x <= hi`` block (equalities first)."""
        M = np.vstack([self.A, self.C])
        return M, np.concatenate([self.b, self.l]), np.concatenate([self.b, self.u])

    def objective(self, x) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x)


@dataclass
class QpSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    eps_prim_inf: float = 1e-6
    max_iter: int = 4000
    check_every: int = 25
    adaptive_rho: bool = True
    scaling_iters: int = 10
    polish: bool = True
    reg_eps: float = 1e-10
    backend: str = "auto"  # "auto", "cython" or "numpy"


@dataclass
class QpSolution:
    x: np.ndarray
    status: str
    primal_residual: float
    dual_residual: float
    iterations: int
    solve_time: float
    y_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    polished: bool = False
    regularized: bool = False

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _ruiz(P, M, iters):
    n, m = P.shape[0], M.shape[0]
    D, E = np.ones(n), np.ones(m)
    Ps, Ms = P.copy(), M.copy()
    for _ in range(iters):
        col = np.maximum(np.abs(Ps).max(axis=0), np.abs(Ms).max(axis=0, initial=0.0))
        d = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        row = np.abs(Ms).max(axis=1, initial=0.0) if m else np.zeros(0)
        e = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
        Ps = d[:, None] * Ps * d[None, :]
        Ms = e[:, None] * Ms * d[None, :]
        D *= d
        E *= e
    return D, E, Ps, Ms


def _residuals(P, q, M, x, z, y):
    """Unscaled primal/dual infinity-norm residuals."""
    rp = np.abs(M @ x - z).max(initial=0.0)
    rd = np.abs(P @ x + q + M.T @ y).max(initial=0.0)
    return rp, rd


def _polish(problem: QpProblem, M, lo, hi, x, z, y, reg):
    """Solve the equality-constrained QP on the guessed active set."""
    eq = lo == hi
    lower = (~eq) & np.isfinite(lo) & (z - lo < -y)
    upper = (~eq) & np.isfinite(hi) & (hi - z < y)
    active = eq | lower | upper
    target = np.where(upper, hi, lo)
    Ma = M[active]
    n, na = problem.n, int(active.sum())
    K = np.zeros((n + na, n + na))
    K[:n, :n] = problem.P
    K[:n, n:] = Ma.T
    K[n:, :n] = Ma
    rhs = np.concatenate([-problem.q, target[active]])
    Kreg = K.copy()
    Kreg[:n, :n] += reg * np.eye(n)
    Kreg[n:, n:] -= reg * np.eye(na)
    try:
        sol = np.linalg.solve(Kreg, rhs)
        for _ in range(3):
            sol = sol + np.linalg.solve(Kreg, rhs - K @ sol)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    xp = sol[:n]
    yp = np.zeros(M.shape[0])
    yp[active] = sol[n:]
    # multiplier signs: negative on lower-active rows, positive on upper-active rows
    scale = max(1.0, np.abs(yp).max(initial=0.0))
    if np.any(yp[lower] > 1e-9 * scale) or np.any(yp[upper] < -1e-9 * scale):
        return None
    zp = np.clip(M @ xp, lo, hi)
    return xp, zp, yp


def solve(problem: QpProblem, settings: QpSettings | None = None, x0=None, y0=None) -> QpSolution:
    """Solve ``problem``; never raises on infeasibility (see ``status``)."""
    s = settings or QpSettings()
    t0 = time.perf_counter()
    n = problem.n
    M, lo, hi = problem.stacked()
    m = M.shape[0]
    m_eq = problem.A.shape[0]

    P = problem.P
    regularized = False
    if n:
        evals = np.linalg.eigvalsh(P)
        if evals[0] < -1e-9 * max(1.0, abs(evals[-1])):
            raise QpError("P is not positive semidefinite")
        if evals[0] <= 1e-12 * max(1.0, evals[-1]):
            P = P + s.reg_eps * max(1.0, evals[-1]) * np.eye(n)
            regularized = True

    D, E, Ps, Ms = _ruiz(P, M, s.scaling_iters)
    qs = D * problem.q
    c = 1.0 / max(1.0, np.abs(qs).max(initial=0.0), np.abs(Ps).max(initial=0.0) if n else 1.0)
    Ps, qs = c * Ps, c * qs
    ls = np.where(np.isfinite(lo), E * lo, -np.inf)
    us = np.where(np.isfinite(hi), E * hi, np.inf)
    # the compiled kernel wants finite bounds
    big = 1e20
    ls_k, us_k = np.maximum(ls, -big), np.minimum(us, big)

    eq_rows = lo == hi
    free_rows = ~np.isfinite(lo) & ~np.isfinite(hi)

    def rho_vector(rho):
        r = np.full(m, rho)
        r[eq_rows] = min(_EQ_RHO_SCALE * rho, _RHO_MAX * _EQ_RHO_SCALE)
        r[free_rows] = _RHO_MIN
        return r

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float) / D
    y = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float) / E * c
    z = np.clip(Ms @ x, ls_k, us_k)
    x_prev, y_prev = x.copy(), y.copy()
    work_n, work_m = np.zeros(n), np.zeros(m)

    rho = s.rho
    rho_vec = rho_vector(rho)

    def factor(rv):
        K = Ps + s.sigma * np.eye(n) + Ms.T @ (rv[:, None] * Ms)
        return np.ascontiguousarray(cholesky(K, lower=True, check_finite=False))

    try:
        L = factor(rho_vec)
    except LinAlgError as exc:  # pragma: no cover - sigma keeps K positive definite
        raise QpError(f"factorization failed: {exc}") from exc

    kernel = _kernel(s.backend)
    Ms_c = np.ascontiguousarray(Ms)
    status = MAX_ITER
    polished = False
    it = 0
    rp = rd = np.inf
    best = None
    polish_fail = 0

    def unscale(xs, zs, ys):
        return D * xs, zs / E, E * ys / c

    while it < s.max_iter:
        k = min(s.check_every, s.max_iter - it)
        kernel(L, Ms_c, rho_vec, qs, ls_k, us_k, s.sigma, s.alpha, k, x, z, y, x_prev, y_prev, work_n, work_m)
        it += k
        xu, zu, yu = unscale(x, z, y)
        rp, rd = _residuals(problem.P, problem.q, M, xu, zu, yu)
        if not (np.isfinite(rp) and np.isfinite(rd)):
            break
        converged = rp <= s.tol_primal and rd <= s.tol_dual
        scale_p = max(1.0, np.abs(M @ xu).max(initial=0.0))
        scale_d = max(1.0, np.abs(problem.P @ xu).max(initial=0.0), np.abs(problem.q).max(initial=0.0))
        if s.polish and (converged or (polish_fail < 8 and rp <= 1e-3 * scale_p and rd <= 1e-3 * scale_d)):
            out = _polish(problem, M, lo, hi, xu, zu, yu, s.reg_eps)
            if out is not None:
                xp, zp, yp = out
                rpp = np.abs(M @ xp - zp).max(initial=0.0)
                rdp = np.abs(problem.P @ xp + problem.q + M.T @ yp).max(initial=0.0)
                if rpp <= s.tol_primal and rdp <= s.tol_dual and (not converged or max(rpp, rdp) <= max(rp, rd)):
                    status, polished = OPTIMAL, True
                    best = (xp, zp, yp)
                    rp, rd = rpp, rdp
                    break
            polish_fail += 1
        if converged:
            status = OPTIMAL
            best = (xu, zu, yu)
            break
        if m and _primal_infeasible(Ms, ls, us, y - y_prev, D, E, s.eps_prim_inf):
            status = INFEASIBLE
            break
        if s.adaptive_rho and m:
            rho_new = _adapt_rho(Ps, qs, Ms, x, z, y, rho)
            if rho_new > 5.0 * rho or rho_new < 0.2 * rho:
                rho = rho_new
                rho_vec = rho_vector(rho)
                L = factor(rho_vec)

    if best is None:
        best = unscale(x, z, y)
    xs, _, ys = best
    return QpSolution(
        x=xs,
        status=status,
        primal_residual=float(rp),
        dual_residual=float(rd),
        iterations=it,
        solve_time=time.perf_counter() - t0,
        y_eq=ys[:m_eq].copy(),
        y_ineq=ys[m_eq:].copy(),
        polished=polished,
        regularized=regularized,
    )


def _adapt_rho(P, q, M, x, z, y, rho):
    Mx = M @ x
    rp = np.abs(Mx - z).max(initial=0.0)
    rd = np.abs(P @ x + q + M.T @ y).max(initial=0.0)
    np_ = max(np.abs(Mx).max(initial=0.0), np.abs(z).max(initial=0.0), 1e-10)
    nd = max(np.abs(P @ x).max(initial=0.0), np.abs(M.T @ y).max(initial=0.0), np.abs(q).max(initial=0.0), 1e-10)
    ratio = (rp / np_) / max(rd / nd, 1e-12)
    return float(np.clip(rho * np.sqrt(ratio), _RHO_MIN, _RHO_MAX))


def _primal_infeasible(M, l, u, dy, D, E, eps):
    dy_u = E * dy
    norm = np.abs(dy_u).max(initial=0.0)
    if norm < 1e-12:
        return False
    if np.abs((M.T @ dy) / D).max(initial=0.0) > eps * norm:
        return False
    pos, neg = np.maximum(dy, 0.0), np.minimum(dy, 0.0)
    if np.any((pos > 0) & ~np.isfinite(u)) or np.any((neg < 0) & ~np.isfinite(l)):
        return False
    up, lo = pos > 0, neg < 0
    support = u[up] @ pos[up] + l[lo] @ neg[lo]
    return support < -eps * norm


class QpSolver:
    """Stateful wrapper that warm-starts each solve from the previous one."""

    def __init__(self, settings: QpSettings | None = None):
        self.settings = settings or QpSettings()
        self._x = None
        self._y = None

    def solve(self, problem: QpProblem, warm_start: bool = True, **overrides) -> QpSolution:
        settings = replace(self.settings, **overrides) if overrides else self.settings
        use = warm_start and self._x is not None and self._x.shape[0] == problem.n
        m = problem.A.shape[0] + problem.C.shape[0]
        y0 = self._y if use and self._y is not None and self._y.shape[0] == m else None
        sol = solve(problem, settings, x0=self._x if use else None, y0=y0)
        if sol.ok:
            self._x = sol.x.copy()
            self._y = np.concatenate([sol.y_eq, sol.y_ineq])
        return sol

    def reset(self) -> None:
        self._x = self._y = None
