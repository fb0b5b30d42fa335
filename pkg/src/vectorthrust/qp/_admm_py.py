"""NumPy implementation of the ADMM inner loop (fallback for the compiled kernel)."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular


def admm_iterations(L, A, rho, q, l, u, sigma, alpha, n_iter, x, z, y, x_prev, y_prev, work_n, work_m):
    """Run ``n_iter`` relaxed ADMM steps in place; see ``_admm_core``."""
    for _ in range(n_iter):
        x_prev[:] = x
        y_prev[:] = y
        rhs = sigma * x - q + A.T @ (rho * z - y)
        w = solve_triangular(L, rhs, lower=True, check_finite=False)
        xt = solve_triangular(L, w, lower=True, trans="T", check_finite=False)
        x[:] = alpha * xt + (1.0 - alpha) * x_prev
        zr = alpha * (A @ xt) + (1.0 - alpha) * z
        zn = np.clip(zr + y / rho, l, u)
        y += rho * (zr - zn)
        z[:] = zn
