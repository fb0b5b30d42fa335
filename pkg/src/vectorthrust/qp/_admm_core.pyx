# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ADMM inner loop.

Same arithmetic, in the same order, as ``_admm_py.admm_iterations``.
"""

cimport cython


cdef inline double _clip(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def admm_iterations(
    const double[:, ::1] L,
    const double[:, ::1] A,
    const double[::1] rho,
    const double[::1] q,
    const double[::1] l,
    const double[::1] u,
    double sigma,
    double alpha,
    int n_iter,
    double[::1] x,
    double[::1] z,
    double[::1] y,
    double[::1] x_prev,
    double[::1] y_prev,
    double[::1] work_n,
    double[::1] work_m,
):
    """Run ``n_iter`` relaxed ADMM steps in place.

    ``L`` is the lower Cholesky factor of ``P + sigma I + A^T diag(rho) A``.
    On return ``x_prev``/``y_prev`` hold the iterates before the last step.
    """
    cdef Py_ssize_t n = A.shape[1]
    cdef Py_ssize_t m = A.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc, zt, zr, zn
    with nogil:
        for k in range(n_iter):
            for j in range(n):
                x_prev[j] = x[j]
            for i in range(m):
                y_prev[i] = y[i]
                work_m[i] = rho[i] * z[i] - y[i]
            # rhs = sigma x - q + A^T (rho z - y)
            for j in range(n):
                work_n[j] = sigma * x[j] - q[j]
            for i in range(m):
                acc = work_m[i]
                if acc != 0.0:
                    for j in range(n):
                        work_n[j] += A[i, j] * acc
            # forward substitution L w = rhs
            for j in range(n):
                acc = work_n[j]
                for i in range(j):
                    acc -= L[j, i] * work_n[i]
                work_n[j] = acc / L[j, j]
            # back substitution L^T xt = w
            for j in range(n - 1, -1, -1):
                acc = work_n[j]
                for i in range(j + 1, n):
                    acc -= L[i, j] * work_n[i]
                work_n[j] = acc / L[j, j]
            for j in range(n):
                x[j] = alpha * work_n[j] + (1.0 - alpha) * x_prev[j]
            for i in range(m):
                zt = 0.0
                for j in range(n):
                    zt += A[i, j] * work_n[j]
                zr = alpha * zt + (1.0 - alpha) * z[i]
                zn = _clip(zr + y[i] / rho[i], l[i], u[i])
                y[i] = y[i] + rho[i] * (zr - zn)
                z[i] = zn
