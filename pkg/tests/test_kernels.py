import numpy as np
import pytest

from pbsid import _pykernels, kernels
from pbsid.simulate import RodConfig, _operator, discretize

BACKENDS = sorted(kernels.BACKENDS)


def test_backend_selected():
    assert kernels.BACKEND in kernels.BACKENDS


@pytest.fixture
def system(rng):
    n, m, r, T = 5, 3, 4, 200
    A = rng.normal(size=(n, n))
    A *= 0.9 / np.max(np.abs(np.linalg.eigvals(A)))
    return dict(A=A, B=rng.normal(size=(n, m)), C=rng.normal(size=(r, n)),
                K=rng.normal(size=(n, r)) * 0.1, x0=rng.normal(size=n),
                U=rng.normal(size=(T, m)), Y=rng.normal(size=(T, r)))


def loop_simulate(A, B, C, x0, U):
    x = x0.copy()
    out = []
    for u in U:
        out.append(C @ x)
        x = A @ x + B @ u
    return np.array(out)


@pytest.mark.parametrize("name", BACKENDS)
def test_ss_simulate(name, system):
    s = system
    y = kernels.BACKENDS[name].ss_simulate(s["A"], s["B"], s["C"], s["x0"], s["U"])
    np.testing.assert_allclose(y, loop_simulate(s["A"], s["B"], s["C"], s["x0"], s["U"]), atol=1e-12)


@pytest.mark.parametrize("name", BACKENDS)
@pytest.mark.parametrize("n_measured", [0, 1, 57, 200])
def test_predictor_simulate(name, n_measured, system):
    s = system
    At = s["A"] - s["K"] @ s["C"]
    y = kernels.BACKENDS[name].predictor_simulate(At, s["B"], s["K"], s["C"], s["x0"], s["U"], s["Y"], n_measured)
    x = s["x0"].copy()
    for k in range(len(s["U"])):
        yk = s["C"] @ x
        np.testing.assert_allclose(y[k], yk, atol=1e-10)
        w = s["Y"][k] if k < n_measured else yk
        x = At @ x + s["B"] @ s["U"][k] + s["K"] @ w


@pytest.mark.parametrize("name", BACKENDS)
def test_rod_integrate_matches_reference(name, rng):
    cfg = RodConfig(grid_points=41)
    disc = discretize(cfg)
    lower, diag, upper = _operator(disc)
    mass_dt = disc.capacity / 4.0
    U = rng.uniform(size=(15, cfg.m))
    theta0 = rng.uniform(size=disc.x.size)
    ref = _pykernels.rod_integrate(lower, diag + mass_dt, upper, mass_dt, disc.source, U, 3, theta0)
    out = kernels.BACKENDS[name].rod_integrate(lower, diag + mass_dt, upper, mass_dt, disc.source, U, 3, theta0)
    np.testing.assert_allclose(out, ref, rtol=1e-11, atol=1e-11)
    np.testing.assert_array_equal(out[0], theta0)


def test_rod_integrate_dense_oracle(rng):
    cfg = RodConfig(grid_points=21)
    disc = discretize(cfg)
    lower, diag, upper = _operator(disc)
    mass_dt = disc.capacity / 2.0
    L = np.diag(diag + mass_dt) + np.diag(lower, -1) + np.diag(upper, 1)
    U = rng.uniform(size=(4, cfg.m))
    theta = np.zeros(disc.x.size)
    expected = []
    for u in U:
        expected.append(theta.copy())
        for _ in range(2):
            theta = np.linalg.solve(L, mass_dt * theta + disc.source @ u)
    got = kernels.rod_integrate(lower, diag + mass_dt, upper, mass_dt, disc.source, U, 2, np.zeros(disc.x.size))
    np.testing.assert_allclose(got, np.array(expected), rtol=1e-10, atol=1e-10)
