"""Synthetic data: a 1D heat-rod plant and linear state-space generators.

The rod obeys

    rho c A_c dT/dt = k A_c d2T/dx2 - h P (T - T_amb) + q(x, t)

with insulated ends. It is discretized with vertex-centred finite volumes
(half volumes at the ends) and integrated by backward Euler, which keeps the
discrete energy balance exact and the scheme unconditionally stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.linalg import solve_banded

from pbsid import kernels
from pbsid.core import DataError, InnovationModel, SignalDataset


@dataclass(frozen=True)
class RodConfig:
    """Geometry, material and discretization of the heated rod (SI units, degC)."""

    length: float = 2.0
    diameter: float = 0.015
    conductivity: float = 205.0
    density: float = 2700.0
    specific_heat: float = 900.0
    # calibrated so that sensor 1 sees a ~750 s step-response time constant
    convection_coeff: float = 9.41
    ambient: float = 26.5
    heater_positions: Sequence[float] = (0.25, 0.65, 1.05, 1.55)
    heater_width: float = 0.03
    heater_max_power: float = 300.0
    sensor_positions: Sequence[float] = (0.35, 0.50, 0.70, 0.90, 1.10, 1.50, 1.75)
    grid_points: int = 201
    dt: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "heater_positions", tuple(float(x) for x in self.heater_positions))
        object.__setattr__(self, "sensor_positions", tuple(float(x) for x in self.sensor_positions))
        for name in (
            "length", "diameter", "conductivity", "density", "specific_heat",
            "convection_coeff", "heater_width", "heater_max_power", "dt",
        ):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DataError(f"RodConfig.{name} must be a positive number, got {v!r}")
        if not math.isfinite(self.ambient):
            raise DataError("RodConfig.ambient must be finite")
        if int(self.grid_points) != self.grid_points or self.grid_points < 3:
            raise DataError(f"RodConfig.grid_points must be an integer >= 3, got {self.grid_points}")
        for name in ("heater_positions", "sensor_positions"):
            pos = getattr(self, name)
            if not pos:
                raise DataError(f"RodConfig.{name} must not be empty")
            if any(not 0 <= x <= self.length for x in pos):
                raise DataError(f"RodConfig.{name} must lie within [0, {self.length}]")

    @classmethod
    def from_dict(cls, d: dict) -> "RodConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown RodConfig field(s): {sorted(unknown)}")
        return cls(**d)

    @property
    def m(self) -> int:
        return len(self.heater_positions)

    @property
    def r(self) -> int:
        return len(self.sensor_positions)


@dataclass(frozen=True)
class RodDiscretization:
    x: np.ndarray
    volume: np.ndarray  # control-volume lengths
    capacity: np.ndarray  # rho c A_c V_i, J/K
    coupling: float  # k A_c / dx, W/K
    loss: np.ndarray  # h P V_i, W/K
    source: np.ndarray  # W per unit input, (N, m)
    sensor_idx: np.ndarray
    sensor_w: np.ndarray


def discretize(config: RodConfig) -> RodDiscretization:
    N = int(config.grid_points)
    L = config.length
    dx = L / (N - 1)
    x = np.linspace(0.0, L, N)
    lo = np.clip(x - dx / 2, 0.0, L)
    hi = np.clip(x + dx / 2, 0.0, L)
    vol = hi - lo
    area = math.pi * config.diameter**2 / 4
    perim = math.pi * config.diameter
    capacity = config.density * config.specific_heat * area * vol
    loss = config.convection_coeff * perim * vol
    source = np.zeros((N, config.m))
    w = config.heater_width
    for j, c in enumerate(config.heater_positions):
        a, b = max(c - w / 2, 0.0), min(c + w / 2, L)
        overlap = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)
        source[:, j] = config.heater_max_power * overlap / overlap.sum()
    pos = np.asarray(config.sensor_positions)
    idx = np.minimum((pos / dx).astype(int), N - 2)
    frac = pos / dx - idx
    return RodDiscretization(
        x, vol, capacity, config.conductivity * area / dx, loss, source, idx, frac
    )


def _operator(disc: RodDiscretization):
    """Tridiagonal ``G`` with ``capacity * dtheta/dt = -G theta + source u``."""
    N = disc.x.size
    g = disc.coupling
    diag = disc.loss.copy()
    diag[:-1] += g
    diag[1:] += g
    off = np.full(N - 1, -g)
    return off, diag, off.copy()


def _sensors(disc: RodDiscretization, theta: np.ndarray) -> np.ndarray:
    i, w = disc.sensor_idx, disc.sensor_w
    return theta[..., i] * (1 - w) + theta[..., i + 1] * w


def _voltages(voltages, m, duration, sample_period):
    v = np.asarray(voltages, dtype=float)
    if v.ndim == 1:
        if v.shape[0] != m:
            raise DataError(f"expected {m} heater voltages, got {v.shape[0]}")
        if duration is None:
            raise DataError("a duration is required when a single voltage vector is given")
        n = int(round(duration / sample_period))
        v = np.tile(v, (n, 1))
    elif v.ndim != 2 or v.shape[1] != m:
        raise DataError(f"voltages must have shape (samples, {m}), got {v.shape}")
    if v.size and (np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v))):
        raise DataError("voltage fractions must lie in [0, 1]")
    return v


def simulate_rod(
    config: RodConfig,
    voltages,
    duration: Optional[float] = None,
    sample_period: float = 96.0,
    noise_sigma: float = 0.0,
    hum_amplitude: float = 0.0,
    hum_frequency: float = 60.0,
    seed: Optional[int] = None,
    initial: Optional[np.ndarray] = None,
    return_field: bool = False,
):
    """Simulate the rod under per-sample heater voltage fractions.

    ``voltages`` is either (S, m), one row per sample held over the sample
    period, or a single m-vector held for ``duration`` seconds. Inputs of the
    returned dataset are the squared voltages; outputs are the sensor
    temperatures at ``k * sample_period`` (sample 0 is the initial state).
    Optional sensor noise: Gaussian with ``noise_sigma`` plus a sinusoid of
    ``hum_amplitude`` at ``hum_frequency`` Hz.
    """
    if not sample_period > 0:
        raise DataError(f"sample_period must be positive, got {sample_period}")
    v = _voltages(voltages, config.m, duration, sample_period)
    u = v**2
    disc = discretize(config)
    substeps = max(1, math.ceil(sample_period / config.dt - 1e-9))
    dt = sample_period / substeps
    lower, diag, upper = _operator(disc)
    mass_dt = disc.capacity / dt
    theta0 = np.zeros(disc.x.size) if initial is None else np.asarray(initial, float) - config.ambient
    theta = kernels.rod_integrate(lower, diag + mass_dt, upper, mass_dt, disc.source, u, substeps, theta0)
    y = _sensors(disc, theta) + config.ambient
    t = np.arange(u.shape[0]) * sample_period
    if noise_sigma or hum_amplitude:
        rng = np.random.default_rng(seed)
        if noise_sigma:
            y = y + rng.normal(0.0, noise_sigma, y.shape)
        if hum_amplitude:
            phase = rng.uniform(0, 2 * np.pi, y.shape[1])
            y = y + hum_amplitude * np.sin(2 * np.pi * hum_frequency * t[:, None] + phase)
    ds = SignalDataset(u, y.reshape(u.shape[0], config.r), sample_period, t)
    if return_field:
        return ds, theta + config.ambient
    return ds


def steady_state(config: RodConfig, voltages) -> np.ndarray:
    """Nodal steady-state temperatures under constant voltage fractions."""
    v = np.asarray(voltages, dtype=float)
    disc = discretize(config)
    lower, diag, upper = _operator(disc)
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    theta = solve_banded((1, 1), ab, disc.source @ (v**2))
    return theta + config.ambient


def energy_balance(config: RodConfig, voltages, temperatures) -> tuple:
    """``(heater power, convective loss)`` in watts for a steady nodal profile.

    The loss integral ``h P int (T - T_amb) dx`` uses the trapezoid rule.
    """
    x = discretize(config).x
    theta = np.asarray(temperatures, float) - config.ambient
    power = config.heater_max_power * float(np.sum(np.asarray(voltages, float) ** 2))
    integral = float(np.sum((theta[1:] + theta[:-1]) * np.diff(x)) / 2)
    return power, config.convection_coeff * math.pi * config.diameter * integral


def step_response(config: RodConfig, heater: int = 0, level: float = 1.0, duration: float = 6000.0, sample_period: float = 5.0):
    v = np.zeros(config.m)
    v[heater] = level
    return simulate_rod(config, v, duration=duration, sample_period=sample_period)


def rod_time_constant(config: RodConfig, sensor: int = 0, heater: int = 0, level: float = 1.0, sample_period: float = 5.0) -> float:
    """First-order (63.2 %) time constant of one sensor's step response."""
    from pbsid.preprocess import estimate_time_constant

    v = np.zeros(config.m)
    v[heater] = level
    disc = discretize(config)
    final = _sensors(disc, steady_state(config, v) - config.ambient)[sensor] + config.ambient
    # slowest mode is the uniform-cooling one
    tau_slow = config.density * config.specific_heat * config.diameter / (4 * config.convection_coeff)
    ds = step_response(config, heater, level, duration=4 * tau_slow, sample_period=sample_period)
    return estimate_time_constant(ds.timestamps, ds.outputs[:, sensor], config.ambient, final)


def calibrate_convection(config: RodConfig, target: float = 750.0, sensor: int = 0, heater: int = 0,
                         bracket=(0.5, 200.0), xtol: float = 1e-3) -> float:
    """Convection coefficient giving a ``target`` step-response time constant.

    Root-finding by bisection in ``log h``; the time constant decreases
    monotonically with ``h``.
    """
    def resid(log_h):
        cfg = replace(config, convection_coeff=float(np.exp(log_h)))
        return rod_time_constant(cfg, sensor, heater) - target

    lo, hi = np.log(bracket[0]), np.log(bracket[1])
    if resid(lo) * resid(hi) > 0:
        raise DataError(f"time constant {target} s not bracketed by h in {bracket}")
    return float(np.exp(optimize.bisect(resid, lo, hi, xtol=xtol)))


def prbs_like_inputs(m: int, length: int, seed: Optional[int] = None) -> np.ndarray:
    """i.i.d. uniform [0, 1] entries, shape (length, m)."""
    if length < 1:
        raise DataError(f"length must be >= 1, got {length}")
    return np.random.default_rng(seed).uniform(0.0, 1.0, (length, m))


def simulate_lti(model, x0, inputs, innovation_sigma: float = 0.0, seed: Optional[int] = None,
                 sample_period: float = 1.0) -> SignalDataset:
    """Simulate ``x+ = A x + B u + K e``, ``y = C x + e`` with ``e ~ N(0, sigma^2 I)``.

    ``model`` is an :class:`InnovationModel` or an ``(A, B, C)`` triple
    (``K = 0``).
    """
    if not isinstance(model, InnovationModel):
        A, B, C = (np.atleast_2d(np.asarray(a, float)) for a in model)
        model = InnovationModel(A, B, C, np.zeros((A.shape[0], C.shape[0])))
    u = np.asarray(inputs, dtype=float).reshape(len(inputs), -1)
    if u.shape[1] != model.m:
        raise DataError(f"inputs have {u.shape[1]} channels, model expects {model.m}")
    x0 = np.zeros(model.n) if x0 is None else np.asarray(x0, float)
    T = u.shape[0]
    if innovation_sigma:
        e = np.random.default_rng(seed).normal(0.0, innovation_sigma, (T, model.r))
    else:
        e = np.zeros((T, model.r))
    y = kernels.ss_simulate(model.A, np.hstack([model.B, model.K]), model.C, x0, np.hstack([u, e])) + e
    return SignalDataset(u, y, sample_period)


def random_stable_model(n: int, m: int, r: int, seed: Optional[int] = None, radius=(0.3, 0.9),
                        gain: float = 0.0) -> InnovationModel:
    """Random model with real poles in ``radius`` and well-conditioned coordinates.

    ``gain`` in [0, 1) sets ``K = gain * A pinv(C)``; the default is ``K = 0``.
    """
    rng = np.random.default_rng(seed)
    poles = rng.uniform(radius[0], radius[1], n) * rng.choice([-1.0, 1.0], n, p=[0.25, 0.75])
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    A = Q @ np.diag(poles) @ Q.T
    B = rng.normal(size=(n, m))
    C = rng.normal(size=(r, n))
    K = np.zeros((n, r))
    if gain:
        # A - K C = (1 - gain) A when C has full column rank
        K = gain * A @ np.linalg.pinv(C)
    return InnovationModel(A, B, C, K)


def simulate_varx(ar, exo, inputs, sigma: float = 0.0, seed: Optional[int] = None, burn_in: int = 100):
    """Simulate ``y_k = sum_i ar[i] y_{k-1-i} + exo[i] u_{k-1-i} + e_k``.

    ``ar`` has shape (p, r, r), ``exo`` (p, r, m). ``inputs`` (T, m) must
    include ``burn_in`` leading samples, which are discarded.
    """
    ar = np.asarray(ar, float)
    exo = np.asarray(exo, float)
    u = np.asarray(inputs, float)
    p, r = ar.shape[0], ar.shape[1]
    T = u.shape[0]
    e = np.random.default_rng(seed).normal(0.0, sigma, (T, r)) if sigma else np.zeros((T, r))
    y = np.zeros((T, r))
    for k in range(T):
        acc = e[k].copy()
        for i in range(min(p, k)):
            acc += ar[i] @ y[k - 1 - i] + exo[i] @ u[k - 1 - i]
        y[k] = acc
    return SignalDataset(u[burn_in:], y[burn_in:])


def random_varx(p: int, r: int, m: int, seed: Optional[int] = None, scale: float = 0.35,
                max_radius: float = 0.95, min_last_lag: float = 0.15):
    """Random stable VARX coefficients ``(ar, exo)`` of exact order ``p``.

    Draws are rejected until the companion matrix has spectral radius below
    ``max_radius`` and the last autoregressive lag has all singular values
    above ``min_last_lag`` (so the order is identifiable).
    """
    rng = np.random.default_rng(seed)
    for _ in range(10_000):
        ar = rng.normal(size=(p, r, r)) * scale
        comp = np.zeros((p * r, p * r))
        comp[:r] = np.hstack(list(ar))
        comp[r:, :-r] = np.eye((p - 1) * r)
        if (np.max(np.abs(np.linalg.eigvals(comp))) < max_radius
                and np.linalg.svd(ar[-1], compute_uv=False).min() > min_last_lag):
            return ar, rng.normal(size=(p, r, m))
    raise DataError("could not draw a stable VARX model with the requested properties")
