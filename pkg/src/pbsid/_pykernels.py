"""Pure-Python (numpy) implementations of the hot loops.

Reference versions of the routines in ``_ckernels.pyx``; both must agree to
rounding error. Arrays are time-major: row ``k`` holds sample ``k``.
"""

import numpy as np
from scipy.linalg import solve_banded


def ss_simulate(A, B, C, x0, U):
    """Open-loop recursion x[k+1] = A x[k] + B u[k], y[k] = C x[k]."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    U = np.asarray(U, dtype=float)
    T = U.shape[0]
    Y = np.empty((T, C.shape[0]))
    x = np.array(x0, dtype=float)
    for k in range(T):
        Y[k] = C @ x
        x = A @ x + B @ U[k]
    return Y


def predictor_simulate(At, B, K, C, x0, U, Y, n_measured):
    """Predictor recursion x[k+1] = At x[k] + B u[k] + K w[k].

    ``w[k]`` is the measured output ``Y[k]`` for ``k < n_measured`` and the
    simulated output ``C x[k]`` afterwards.
    """
    At = np.asarray(At, dtype=float)
    B = np.asarray(B, dtype=float)
    K = np.asarray(K, dtype=float)
    C = np.asarray(C, dtype=float)
    U = np.asarray(U, dtype=float)
    Y = np.asarray(Y, dtype=float)
    T = U.shape[0]
    out = np.empty((T, C.shape[0]))
    x = np.array(x0, dtype=float)
    for k in range(T):
        yk = C @ x
        out[k] = yk
        w = Y[k] if k < n_measured else yk
        x = At @ x + B @ U[k] + K @ w
    return out


def rod_integrate(lower, diag, upper, mass_dt, source, U, substeps, theta0):
    """Backward-Euler stepping of a tridiagonal system.

    Solves ``(diag(mass_dt) + L) th[j+1] = mass_dt * th[j] + source @ u[k]``
    ``substeps`` times per sample with ``u[k]`` held. Returns the field at
    each sample instant before ``u[k]`` is applied, shape (len(U), N).
    """
    lower = np.asarray(lower, dtype=float)
    diag = np.asarray(diag, dtype=float)
    upper = np.asarray(upper, dtype=float)
    mass_dt = np.asarray(mass_dt, dtype=float)
    source = np.asarray(source, dtype=float)
    U = np.asarray(U, dtype=float)
    N = diag.shape[0]
    ab = np.zeros((3, N))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    T = U.shape[0]
    out = np.empty((T, N))
    th = np.array(theta0, dtype=float)
    for k in range(T):
        out[k] = th
        q = source @ U[k]
        for _ in range(substeps):
            th = solve_banded((1, 1), ab, mass_dt * th + q, check_finite=False)
    return out
