import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vectorthrust.qp import (
    INFEASIBLE,
    OPTIMAL,
    QpError,
    QpProblem,
    QpSettings,
    QpSolver,
    compiled_available,
    kkt_oracle,
    solve,
)


def test_symmetric_equality():
    sol = solve(QpProblem(P=2 * np.eye(2), A=[[1, 1]], b=[1]))
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-9)


def test_equality_with_active_bound():
    sol = solve(QpProblem(P=2 * np.eye(2), A=[[1, 1]], b=[1], C=[[1, 0]], l=[-np.inf], u=[0.2]))
    np.testing.assert_allclose(sol.x, [0.2, 0.8], atol=1e-9)
    # multiplier of an active upper bound is non-negative
    assert sol.y_ineq[0] > 0


def test_kkt_oracle_examples():
    np.testing.assert_allclose(kkt_oracle(QpProblem(P=[[2.0]], A=[[1.0]], b=[3.0])), [3.0])
    x = kkt_oracle(QpProblem(P=np.diag([2.0, 8.0]), A=[[1, 1]], b=[1]))
    np.testing.assert_allclose(x, [0.8, 0.2], atol=1e-14)


def test_kkt_oracle_rejects_inequalities_and_singular():
    with pytest.raises(QpError):
        kkt_oracle(QpProblem(P=np.eye(2), C=[[1, 0]], l=[0], u=[1]))
    with pytest.raises(QpError):
        kkt_oracle(QpProblem(P=np.zeros((2, 2)), A=[[1, 1]], b=[1]))


def _random_eq(rng, n=None):
    n = n or int(rng.integers(2, 13))
    me = int(rng.integers(1, n))
    M = rng.normal(size=(n, n))
    P = M @ M.T + 0.1 * np.eye(n)
    return QpProblem(P=P, q=rng.normal(size=n), A=rng.normal(size=(me, n)), b=rng.normal(size=me))


def _random_boxed(rng, n=10):
    """Random QP whose box is built around a known feasible point, so some bounds bind."""
    eq = _random_eq(rng, n)
    x_feas = rng.normal(size=n) * 0.5
    half = np.abs(x_feas) + 0.05
    return QpProblem(P=eq.P, q=eq.q * 5, A=eq.A, b=eq.A @ x_feas, C=np.eye(n), l=-half, u=half)


def test_kkt_oracle_residual(rng):
    for _ in range(10):
        p = _random_eq(rng)
        x = kkt_oracle(p)
        assert np.linalg.norm(p.A @ x - p.b) < 1e-10


def test_random_equality_matches_oracle(rng):
    for _ in range(20):
        p = _random_eq(rng)
        sol = solve(p)
        assert sol.ok
        np.testing.assert_allclose(sol.x, kkt_oracle(p), atol=1e-6)


def test_separable_box_closed_form(rng):
    for _ in range(10):
        n = 6
        d = rng.uniform(0.5, 3.0, n)
        q = rng.normal(size=n) * 3
        lo, hi = -np.ones(n), np.ones(n)
        sol = solve(QpProblem(P=np.diag(d), q=q, C=np.eye(n), l=lo, u=hi))
        np.testing.assert_allclose(sol.x, np.clip(-q / d, lo, hi), atol=1e-9)


def test_infeasible_flagged():
    p = QpProblem(P=np.eye(2), A=[[1, 1]], b=[3], C=np.eye(2), l=[-1, -1], u=[1, 1])
    sol = solve(p)
    assert sol.status == INFEASIBLE
    assert not sol.ok


def test_max_iter_status():
    p = _random_eq(np.random.default_rng(0), 10)
    sol = solve(p, QpSettings(max_iter=1, check_every=1, polish=False))
    assert sol.status in ("max_iter", OPTIMAL)


def test_singular_cost_is_regularized():
    # minimize 0 subject to x + y = 1 and 0 <= x, y <= 1: any feasible point is optimal
    p = QpProblem(P=np.zeros((2, 2)), A=[[1, 1]], b=[1], C=np.eye(2), l=[0, 0], u=[1, 1])
    sol = solve(p)
    assert sol.ok and sol.regularized
    assert sol.x.sum() == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(P=[[1, 2], [0, 1]]),
        dict(P=np.eye(2), A=[[1, 1]], b=[1, 2]),
        dict(P=np.eye(2), C=[[1, 0]], l=[1], u=[0]),
        dict(P=[[np.nan, 0], [0, 1]]),
    ],
)
def test_malformed_problems_rejected(kwargs):
    with pytest.raises(QpError):
        QpProblem(**kwargs)


def test_scaling_invariance(rng):
    for _ in range(5):
        p = _random_boxed(rng, 8)
        s1 = solve(p)
        s2 = solve(QpProblem(P=7.5 * p.P, q=7.5 * p.q, A=p.A, b=p.b, C=p.C, l=p.l, u=p.u))
        assert s1.ok and s2.ok
        np.testing.assert_allclose(s1.x, s2.x, atol=1e-8)


def test_deterministic(rng):
    p = _random_eq(rng, 10)
    a, b = solve(p), solve(p)
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations


def test_warm_start_does_not_change_optimum(rng):
    p = _random_boxed(rng, 10)
    cold = solve(p).x
    warm = solve(p, x0=rng.normal(size=10) * 5).x
    np.testing.assert_allclose(cold, warm, atol=1e-6)
    solver = QpSolver()
    solver.solve(p)
    np.testing.assert_allclose(solver.solve(p).x, cold, atol=1e-6)


@pytest.mark.skipif(not compiled_available(), reason="extension not built")
def test_backends_agree(rng):
    for _ in range(5):
        p = _random_boxed(rng, 10)
        a = solve(p, QpSettings(backend="numpy"))
        b = solve(p, QpSettings(backend="cython"))
        assert a.iterations == b.iterations
        np.testing.assert_allclose(a.x, b.x, atol=1e-12)


def test_unknown_backend():
    with pytest.raises(QpError):
        solve(QpProblem(P=np.eye(1)), QpSettings(backend="fortran"))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_complementarity(seed):
    rng = np.random.default_rng(seed)
    n = 6
    d = rng.uniform(0.5, 2, n)
    p = QpProblem(P=np.diag(d), q=rng.normal(size=n), A=np.ones((1, n)), b=[1.0], C=np.eye(n), l=np.zeros(n), u=np.full(n, 0.4))
    sol = solve(p)
    assert sol.ok
    x, y = sol.x, sol.y_ineq
    assert np.all(x >= -1e-6) and np.all(x <= 0.4 + 1e-6)
    # a multiplier is only nonzero with the correct sign at an active bound
    for xi, yi in zip(x, y):
        if yi > 1e-6:
            assert xi == pytest.approx(0.4, abs=1e-6)
        elif yi < -1e-6:
            assert xi == pytest.approx(0.0, abs=1e-6)
