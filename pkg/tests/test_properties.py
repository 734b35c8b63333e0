"""Property-based checks of the structural invariants."""

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pbsid import io
from pbsid.core import InnovationModel, SignalDataset, build_data_matrix, lift, predictor_matrices
from pbsid.preprocess import FilterSpec, butterworth_sos, detrend, nonlinearity_index, psd_welch
from pbsid.residual import autocorrelation
from pbsid.select import SelectionGrid, simulate_method_a, simulate_method_b
from pbsid.sid import truncate_states
from pbsid.simulate import simulate_lti
from pbsid.varx import aic_value, estimate_markov, fit_markov, regression_matrices
from scipy import signal as sps

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
seeds = st.integers(0, 2**32 - 1)
settings.register_profile("pbsid", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pbsid")


@st.composite
def windows(draw):
    d = draw(st.integers(1, 4))
    T = draw(st.integers(2, 30))
    q = draw(st.integers(0, T - 1))
    r_idx = draw(st.integers(q, T - 1))
    l = draw(st.integers(0, T - 1 - r_idx))
    seq = draw(arrays(float, (T, d), elements=finite))
    return seq, q, r_idx, l


@given(windows())
def test_hankel_columns_bit_identical(w):
    seq, q, r_idx, l = w
    W = build_data_matrix(seq, q, r_idx, l)
    assert W.shape == ((r_idx - q + 1) * seq.shape[1], l + 1)
    for j in range(l + 1):
        assert np.array_equal(W.values[:, j], lift(seq, q + j, r_idx + j))


@given(windows())
def test_shift_property(w):
    seq, q, r_idx, l = w
    assume(r_idx > q and r_idx + 1 + l < seq.shape[0])
    d = seq.shape[1]
    W0 = build_data_matrix(seq, q, r_idx, l).values
    W1 = build_data_matrix(seq, q + 1, r_idx + 1, l).values
    assert np.array_equal(W0[d:], W1[:-d])


@given(seeds, st.integers(1, 5), st.integers(1, 3), st.integers(1, 4))
def test_predictor_round_trip(seed, n, m, r):
    rng = np.random.default_rng(seed)
    model = InnovationModel(rng.normal(size=(n, n)), rng.normal(size=(n, m)),
                            rng.normal(size=(r, n)), rng.normal(size=(n, r)))
    At, Bt = predictor_matrices(model)
    assert np.all(np.isfinite(At))
    np.testing.assert_allclose(At + model.K @ model.C, model.A, atol=1e-12)
    assert Bt.shape == (n, m + r)


@given(seeds, st.integers(1, 4), st.integers(1, 2), st.integers(1, 3))
def test_varx_orthogonality_and_psd(seed, p, m, r):
    rng = np.random.default_rng(seed)
    T = (m + r) * p + p + 30
    ds = SignalDataset(rng.normal(size=(T, m)), rng.normal(size=(T, r)))
    est = estimate_markov(ds, p)
    Z, Y = regression_matrices(ds, p)
    E = Y.values - est.markov @ Z.values
    assert np.abs(E @ Z.values.T).max() < 1e-8 * np.linalg.norm(Y.values) * np.linalg.norm(Z.values)
    cov = est.residual_cov
    assert np.abs(cov - cov.T).max() < 1e-10
    assert np.linalg.eigvalsh(cov).min() > -1e-10
    assert est.markov.shape[1] % (m + r) == 0


@given(seeds, st.integers(1, 5), st.integers(1, 3), st.integers(1, 4), st.integers(1, 50))
def test_varx_exact_recovery(seed, p, m, r, extra):
    rng = np.random.default_rng(seed)
    d = m + r
    l = d * p + extra
    Z = build_data_matrix(rng.normal(size=(p + l, d)), 0, p - 1, l).values
    M = rng.normal(size=(r, d * p))
    Mhat, rank = fit_markov(Z, M @ Z)
    assert rank == d * p
    assert np.linalg.norm(Mhat - M) / np.linalg.norm(M) < 1e-8


@given(st.floats(-5, 5), st.integers(1, 40), st.integers(0, 4), st.integers(0, 7), st.integers(10, 1000))
def test_aic_penalty_increment(logdet, p, m, r, l):
    r += 1
    d = aic_value(logdet, p + 1, m, r, l) - aic_value(logdet, p, m, r, l)
    assert abs(d - 2 * r * (m + r) / (l + 1)) < 1e-12
    assert d > 0


@given(seeds, st.integers(2, 12), st.integers(2, 12), st.integers(1, 11))
def test_truncated_svd_optimality(seed, rows, cols, n):
    assume(n <= min(rows, cols))
    A = np.random.default_rng(seed).normal(size=(rows, cols))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    approx = U[:, :n] * np.sqrt(s[:n]) @ truncate_states(s, Vt, n)
    assert abs(np.linalg.norm(A - approx) - np.sqrt(np.sum(s[n:] ** 2))) < 1e-10


@given(arrays(float, st.integers(2, 60), elements=finite), st.sampled_from(["mean", "linear"]))
def test_detrend_idempotent(x, mode):
    once = detrend(x, mode)
    scale = max(1.0, np.abs(x).max())
    np.testing.assert_allclose(detrend(once, mode), once, atol=1e-9 * scale)


@given(st.floats(1e-3, 0.45), st.integers(1, 8), st.floats(1.0, 1000.0))
def test_filter_dc_gain_and_stability(frac, order, fs):
    spec = FilterSpec(frac * fs, fs, order)
    sos = butterworth_sos(spec)
    poles = np.concatenate([np.roots(sec[3:]) for sec in sos])
    assert np.abs(poles).max() < 1
    _, h = sps.sosfreqz(sos, worN=[0.0], fs=fs)
    assert abs(abs(h[0]) - 1) < 1e-9


@given(arrays(float, st.integers(8, 300), elements=st.floats(-100, 100)))
def test_psd_nonnegative(x):
    _, p = psd_welch(x, 10.0)
    assert np.all(p >= 0)


@given(arrays(float, st.integers(1, 50), elements=st.floats(-100, 100)), st.floats(-10, 10))
def test_nonlinearity_self_ratio(y, y0):
    assume(np.any(np.abs(y - y0) > 0.5))
    tr = nonlinearity_index(y, y, y0)
    np.testing.assert_allclose(tr.w_values[tr.valid], 1.0)


@given(seeds, st.integers(1, 3), st.floats(1e-3, 1e3))
def test_residual_scale_invariance(seed, r, c):
    eps = np.random.default_rng(seed).normal(size=(80, r))
    a = autocorrelation(eps, 10)
    b = autocorrelation(c * eps, 10)
    np.testing.assert_allclose(a.autocorrelation, b.autocorrelation, atol=1e-10)
    assert np.abs(a.autocovariance[0] - a.autocovariance[0].T).max() < 1e-12
    assert np.all(np.diag(a.autocorrelation[0]) == 1.0)
    assert a.bound == 2 / np.sqrt(79)


@given(arrays(float, st.tuples(st.integers(1, 15), st.integers(2, 5)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_csv_round_trip(data):
    m = data.shape[1] // 2
    ds = SignalDataset(data[:, :m], data[:, m:], 1.5)
    back = io.parse_dataset(io.dataset_to_csv(ds))
    assert np.array_equal(back.inputs, ds.inputs)
    assert np.array_equal(back.outputs, ds.outputs)
    assert np.array_equal(back.timestamps, ds.timestamps)


@given(seeds, st.integers(1, 4), st.integers(1, 3), st.integers(1, 3))
def test_model_json_exact(seed, n, m, r):
    rng = np.random.default_rng(seed)
    scale = 10.0 ** rng.integers(-200, 200, size=4)
    model = InnovationModel(rng.normal(size=(n, n)) * scale[0], rng.normal(size=(n, m)) * scale[1],
                            rng.normal(size=(r, n)) * scale[2], rng.normal(size=(n, r)) * scale[3], 1, 2)
    back = io.model_from_dict(__import__("json").loads(io.dumps(io.model_to_dict(model))))
    for name in "ABCK":
        assert np.array_equal(getattr(back, name), getattr(model, name))


@given(seeds, st.integers(1, 4), st.integers(1, 3), st.integers(1, 3))
def test_lti_superposition(seed, n, m, r):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    A *= 0.9 / max(np.abs(np.linalg.eigvals(A)).max(), 1e-9)
    B, C = rng.normal(size=(n, m)), rng.normal(size=(r, n))
    u1, u2 = rng.normal(size=(30, m)), rng.normal(size=(30, m))
    y = lambda u: simulate_lti((A, B, C), None, u).outputs  # noqa: E731
    np.testing.assert_allclose(y(u1 + u2), y(u1) + y(u2), atol=1e-10)


@given(seeds, st.integers(1, 4), st.integers(1, 3), st.integers(1, 3))
def test_methods_a_b_agree_without_gain(seed, n, m, r):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    A *= 0.9 / max(np.abs(np.linalg.eigvals(A)).max(), 1e-9)
    model = InnovationModel(A, rng.normal(size=(n, m)), rng.normal(size=(r, n)), np.zeros((n, r)))
    x0, u, y = rng.normal(size=n), rng.normal(size=(25, m)), rng.normal(size=(25, r))
    np.testing.assert_allclose(simulate_method_b(model, x0, u, y), simulate_method_a(model, x0, u), atol=1e-12)


@given(st.integers(1, 40), st.integers(1, 30), st.integers(1, 8))
def test_grid_pairs_admissible(n_max, f_max, r):
    pairs = SelectionGrid(n_max, f_max, r).pairs
    assert all(r * f >= n and 1 <= f <= f_max for n, f in pairs)
    assert len(set(pairs)) == len(pairs)
