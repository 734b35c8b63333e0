# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the routines in ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline void _matvec_add(const double[:, ::1] M, const double[::1] v,
                             double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(M.shape[0]):
        s = 0.0
        for j in range(M.shape[1]):
            s += M[i, j] * v[j]
        out[i] += s


def ss_simulate(A, B, C, x0, U):
    cdef const double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef const double[:, ::1] c = np.ascontiguousarray(C, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t T = u.shape[0], n = a.shape[0], r = c.shape[0]
    cdef double[::1] x = np.array(x0, dtype=np.float64).reshape(-1)
    cdef double[::1] xn = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] y = np.zeros((T, r), dtype=np.float64)
    cdef double[::1] tmp
    cdef Py_ssize_t k, i
    with nogil:
        for k in range(T):
            _matvec_add(c, x, y[k])
            for i in range(n):
                xn[i] = 0.0
            _matvec_add(a, x, xn)
            _matvec_add(b, u[k], xn)
            tmp = x
            x = xn
            xn = tmp
    return np.asarray(y)


def predictor_simulate(At, B, K, C, x0, U, Y, Py_ssize_t n_measured):
    cdef const double[:, ::1] at = np.ascontiguousarray(At, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef const double[:, ::1] kk = np.ascontiguousarray(K, dtype=np.float64)
    cdef const double[:, ::1] c = np.ascontiguousarray(C, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef const double[:, ::1] ym = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t T = u.shape[0], n = at.shape[0], r = c.shape[0]
    cdef double[::1] x = np.array(x0, dtype=np.float64).reshape(-1)
    cdef double[::1] xn = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] y = np.zeros((T, r), dtype=np.float64)
    cdef double[::1] tmp
    cdef Py_ssize_t k, i
    with nogil:
        for k in range(T):
            _matvec_add(c, x, y[k])
            for i in range(n):
                xn[i] = 0.0
            _matvec_add(at, x, xn)
            _matvec_add(b, u[k], xn)
            if k < n_measured:
                _matvec_add(kk, ym[k], xn)
            else:
                _matvec_add(kk, y[k], xn)
            tmp = x
            x = xn
            xn = tmp
    return np.asarray(y)


def rod_integrate(lower, diag, upper, mass_dt, source, U, Py_ssize_t substeps, theta0):
    cdef const double[::1] lo = np.ascontiguousarray(lower, dtype=np.float64)
    cdef const double[::1] di = np.ascontiguousarray(diag, dtype=np.float64)
    cdef const double[::1] up = np.ascontiguousarray(upper, dtype=np.float64)
    cdef const double[::1] md = np.ascontiguousarray(mass_dt, dtype=np.float64)
    cdef const double[:, ::1] src = np.ascontiguousarray(source, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t N = di.shape[0], T = u.shape[0]
    cdef double[::1] th = np.array(theta0, dtype=np.float64).reshape(-1)
    cdef double[::1] q = np.empty(N, dtype=np.float64)
    cdef double[::1] cp = np.empty(N, dtype=np.float64)
    cdef double[::1] inv_den = np.empty(N, dtype=np.float64)
    cdef double[::1] d = np.empty(N, dtype=np.float64)
    cdef double[:, ::1] out = np.empty((T, N), dtype=np.float64)
    cdef Py_ssize_t k, s, i
    cdef double den

    # Thomas factorization of the constant left-hand side
    inv_den[0] = 1.0 / di[0]
    cp[0] = up[0] * inv_den[0] if N > 1 else 0.0
    for i in range(1, N):
        den = di[i] - lo[i - 1] * cp[i - 1]
        inv_den[i] = 1.0 / den
        cp[i] = up[i] * inv_den[i] if i < N - 1 else 0.0

    with nogil:
        for k in range(T):
            out[k, :] = th
            for i in range(N):
                q[i] = 0.0
            _matvec_add(src, u[k], q)
            for s in range(substeps):
                d[0] = (md[0] * th[0] + q[0]) * inv_den[0]
                for i in range(1, N):
                    d[i] = (md[i] * th[i] + q[i] - lo[i - 1] * d[i - 1]) * inv_den[i]
                th[N - 1] = d[N - 1]
                for i in range(N - 2, -1, -1):
                    th[i] = d[i] - cp[i] * th[i + 1]
    return np.asarray(out)
