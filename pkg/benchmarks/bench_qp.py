"""Compare the compiled and NumPy ADMM kernels on flight allocation QPs (n = 40).

    python benchmarks/bench_qp.py [--solves 100]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from vectorthrust.allocation import flight_problem
from vectorthrust.interference import valid_range
from vectorthrust.model import RobotModel, RobotState, form_angles
from vectorthrust.qp import QpSettings, QpSolver, compiled_available


def problems(n: int, seed: int = 0):
    model = RobotModel()
    state = RobotState(q=form_angles(3))
    ranges = valid_range(model, state)
    restricted = [r.rotor for r in ranges if r.restricted]
    hover = np.array([0.0, 0.0, model.total_mass * model.gravity, 0.0, 0.0, 0.0])
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        w = hover + rng.normal(0.0, [3.0, 3.0, 3.0, 0.5, 0.5, 0.5])
        out.append(flight_problem(model, state, w, ranges, restricted)[0])
    return out


def run(backend: str, probs) -> dict:
    solver = QpSolver(QpSettings(backend=backend))
    times, iters, xs = [], [], []
    for p in probs:
        t0 = time.perf_counter()
        sol = solver.solve(p)
        times.append(time.perf_counter() - t0)
        iters.append(sol.iterations)
        xs.append(sol.x)
        if not sol.ok:
            raise RuntimeError(f"{backend}: solve failed with status {sol.status}")
    t = np.array(times) * 1e3
    return {
        "median_ms": float(np.median(t)),
        "p95_ms": float(np.percentile(t, 95)),
        "max_ms": float(t.max()),
        "mean_iters": float(np.mean(iters)),
        "x": np.array(xs),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--solves", type=int, default=100)
    ap.add_argument("--cold-iters", type=int, default=400, help="fixed ADMM iterations for the raw kernel timing")
    args = ap.parse_args(argv)
    probs = problems(args.solves)
    backends = ["numpy"] + (["cython"] if compiled_available() else [])
    results = {b: run(b, probs) for b in backends}
    print(f"{'backend':8s} {'median ms':>10s} {'p95 ms':>8s} {'max ms':>8s} {'iters':>6s}")
    for b, r in results.items():
        print(f"{b:8s} {r['median_ms']:10.3f} {r['p95_ms']:8.3f} {r['max_ms']:8.3f} {r['mean_iters']:6.1f}")
    if len(results) == 2:
        dx = np.max(np.abs(results["numpy"]["x"] - results["cython"]["x"]))
        print(f"max |x_numpy - x_cython| = {dx:.2e}")
        # raw kernel throughput with polishing and early exit disabled
        fixed = dict(polish=False, tol_primal=0.0, tol_dual=0.0, max_iter=args.cold_iters, adaptive_rho=False)
        for b in backends:
            solver = QpSolver(QpSettings(backend=b, **fixed))
            t0 = time.perf_counter()
            for p in probs[:20]:
                solver.solve(p, warm_start=False)
            per_iter = (time.perf_counter() - t0) / (20 * args.cold_iters) * 1e6
            print(f"{b:8s} {per_iter:8.2f} us per ADMM iteration")


if __name__ == "__main__":
    main()
