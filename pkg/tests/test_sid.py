import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from pbsid.core import DataError, VarxEstimate, build_data_matrix, predictor_matrices
from pbsid.sid import (
    build_q_matrix,
    estimate_matrices,
    projection_svd,
    realize,
    spectral_radius,
    state_sequence,
    truncate_states,
)
from pbsid.varx import estimate_markov, regression_matrices


def eig_distance(a, b):
    """Max distance under the optimal pairing of two eigenvalue multisets."""
    cost = np.abs(a[:, None] - b[None, :])
    i, j = linear_sum_assignment(cost)
    return cost[i, j].max()


def varx(M, p):
    r = M.shape[0]
    return VarxEstimate(M, p, np.eye(r), 0.0, 10)


def test_q_matrix_f1_is_markov(rng):
    M = rng.normal(size=(2, 12))
    np.testing.assert_array_equal(build_q_matrix(varx(M, 4), 1), M)


def test_q_matrix_expansion():
    M = np.array([[1.0, 2.0, 3.0, 4.0]])
    Q = build_q_matrix(varx(M, 2), 2)
    np.testing.assert_array_equal(Q, [[1, 2, 3, 4], [0, 0, 1, 2]])


def test_q_matrix_bounds(rng):
    with pytest.raises(DataError):
        build_q_matrix(varx(rng.normal(size=(2, 12)), 4), 5)


def test_q_times_z_is_observability_times_state():
    # true predictor Markov parameters with a fast predictor: Q z = O x
    rng = np.random.default_rng(8)
    n, m, r, p, f = 3, 1, 2, 25, 3
    from pbsid.simulate import random_stable_model

    model = random_stable_model(n, m, r, seed=8, radius=(0.05, 0.2))
    At, Bt = predictor_matrices(model)
    M = np.hstack([model.C @ np.linalg.matrix_power(At, p - 1 - j) @ Bt for j in range(p)])
    Q = build_q_matrix(varx(M, p), f)
    T = 80
    u = rng.normal(size=(T, m))
    e = rng.normal(size=(T, r))
    x = np.zeros((T + 1, n))
    y = np.zeros((T, r))
    for k in range(T):
        y[k] = model.C @ x[k] + e[k]
        x[k + 1] = model.A @ x[k] + model.B @ u[k] + model.K @ e[k]
    z = np.hstack([u, y])
    O = np.vstack([model.C @ np.linalg.matrix_power(model.A - model.K @ model.C, i) for i in range(f)])
    for k in range(p, T):
        np.testing.assert_allclose(Q @ z[k - p:k].reshape(-1), O @ x[k], atol=1e-6)


def test_state_sequence_rank3_reconstruction(rng):
    QZ = rng.normal(size=(9, 3)) @ rng.normal(size=(3, 40))
    Z = build_data_matrix(np.eye(40), 0, 0, 39)  # identity data matrix -> Q Z = Q
    Zm = type(Z)(np.eye(40), 40, 0, 0, 39)
    s, X = state_sequence(QZ, Zm, 3)
    U, _, _ = np.linalg.svd(QZ, full_matrices=False)
    np.testing.assert_allclose(U[:, :3] * np.sqrt(s[:3]) @ X, QZ, atol=1e-8)


def test_state_sequence_zero_matrix():
    Zm = build_data_matrix(np.ones((10, 2)), 0, 1, 8)
    with pytest.warns(UserWarning, match="numerical rank"):
        s, X = state_sequence(np.zeros((3, 4)), Zm, 1)
    assert np.all(X == 0)


def test_truncation_residual_norm(rng):
    A = rng.normal(size=(8, 30))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    n = 3
    approx = U[:, :n] * np.sqrt(s[:n]) @ truncate_states(s, Vt, n)
    assert abs(np.linalg.norm(A - approx) - np.sqrt(np.sum(s[n:] ** 2))) < 1e-10


def test_singular_value_gap(noiseless_3state):
    _, ident, _ = noiseless_3state
    est = estimate_markov(ident, 10)
    Z, _ = regression_matrices(ident, 10)
    _, s, _ = projection_svd(build_q_matrix(est, 4), Z)
    assert np.all(s[3:] < 1e-6 * s[0])


def test_estimate_matrices_exact(rng):
    n, m, r, T = 3, 2, 2, 60
    At = np.diag([0.5, -0.3, 0.2]) + 0.05 * rng.normal(size=(n, n))
    B, K, C = rng.normal(size=(n, m)), rng.normal(size=(n, r)), rng.normal(size=(r, n))
    z = rng.normal(size=(T, m + r))
    X = np.zeros((n, T))
    X[:, 0] = rng.normal(size=n)
    for k in range(T - 1):
        X[:, k + 1] = At @ X[:, k] + np.hstack([B, K]) @ z[k]
    Ymat = C @ X
    Zs = build_data_matrix(z, 0, 0, T - 2)
    Yd = build_data_matrix(Ymat.T, 0, 0, T - 1)
    model = estimate_matrices(X, Zs, Yd, n, m, r)
    for est, true in ((model.A - model.K @ model.C, At), (model.B, B), (model.K, K), (model.C, C)):
        assert np.linalg.norm(est - true) / np.linalg.norm(true) < 1e-8


def test_estimate_matrices_zero():
    Zs = build_data_matrix(np.random.default_rng(0).normal(size=(20, 3)), 0, 0, 18)
    Yd = build_data_matrix(np.zeros((20, 2)), 0, 0, 19)
    model = estimate_matrices(np.zeros((1, 20)), Zs, Yd, 1, 1, 2)
    for mat in (model.A, model.B, model.C, model.K):
        assert np.all(mat == 0)


def test_eigenvalues_recovered(noiseless_3state):
    true, ident, _ = noiseless_3state
    real = realize(ident, estimate_markov(ident, 10), 3, 3)
    assert eig_distance(np.linalg.eigvals(real.model.A), np.linalg.eigvals(true.A)) < 1e-6


def test_extraction_consistency(noiseless_3state):
    _, ident, _ = noiseless_3state
    p = 8
    real = realize(ident, estimate_markov(ident, p), 2, 3)
    mdl = real.model
    At = mdl.A - mdl.K @ mdl.C
    # re-solving the same least-squares problem from [A~ B K] reproduces the state update
    Z, Y = regression_matrices(ident, p)
    Zs = build_data_matrix(ident.z(), p, p, Z.l - 1)
    S = np.vstack([real.state_sequence[:, :-1], Zs.values])
    Q = np.hstack([At, mdl.B, mdl.K])
    np.testing.assert_allclose(Q, real.state_sequence[:, 1:] @ np.linalg.pinv(S), atol=1e-8)
    assert mdl.meta["predictor_spectral_radius"] == pytest.approx(spectral_radius(At))


def test_spectral_radius():
    assert spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9)
    assert spectral_radius(np.array([[np.nan]])) == np.inf
    assert spectral_radius(np.zeros((0, 0))) == 0.0
