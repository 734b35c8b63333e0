"""Residual autocorrelation and the per-entry white-noise test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pbsid.core import DataError


@dataclass(frozen=True)
class ResidualReport:
    """Lagged autocovariances/autocorrelations of a residual sequence.

    ``autocovariance[i]`` and ``autocorrelation[i]`` are r x r matrices for
    lag ``i``; entry ``(b, s)`` correlates channel ``b`` at time ``k`` with
    channel ``s`` at ``k - i``. Channel and lag indices are 0-based.
    ``violations`` lists ``(b, s, i)`` with ``i > 0`` and
    ``|gamma_bs(i)| > bound``.
    """

    lags: np.ndarray
    autocovariance: np.ndarray
    autocorrelation: np.ndarray
    bound: float
    n_samples: int
    violations: tuple


@dataclass(frozen=True)
class WhitenessVerdict:
    fractions: np.ndarray
    overall_fraction: float
    threshold: float
    passed: bool
    flagged: tuple


def residual_sequence(measured, predicted) -> np.ndarray:
    y = np.asarray(measured, dtype=float)
    yh = np.asarray(predicted, dtype=float)
    if y.shape != yh.shape:
        raise DataError(f"shape mismatch: measured {y.shape} vs predicted {yh.shape}")
    return y - yh


def autocorrelation(residuals, max_lag: int = 20) -> ResidualReport:
    """Biased autocovariance estimates normalized by the lag-0 standard deviations.

    With ``N1 + 1`` residual samples, the mean and every lag use the factor
    ``1 / N1``; the white-noise bound is ``2 / sqrt(N1)``.
    """
    eps = np.asarray(residuals, dtype=float)
    if eps.ndim == 1:
        eps = eps[:, None]
    N1 = eps.shape[0] - 1
    if N1 < 1:
        raise DataError("need at least two residual samples")
    if not 0 <= max_lag < N1:
        raise DataError(f"max lag {max_lag} must satisfy 0 <= l1 < N1 = {N1}")
    flat = np.flatnonzero(np.ptp(eps, axis=0) == 0)
    if flat.size:
        raise DataError(
            f"zero-variance residual channel(s) {[int(b) + 1 for b in flat]}; "
            "autocorrelation undefined"
        )
    mean = eps.sum(axis=0) / N1
    d = eps - mean
    cov = np.empty((max_lag + 1, eps.shape[1], eps.shape[1]))
    for i in range(max_lag + 1):
        cov[i] = d[i:].T @ d[: N1 + 1 - i] / N1
    var = np.diag(cov[0])
    bad = np.flatnonzero(~(var > 0))
    if bad.size:
        raise DataError(
            f"zero-variance residual channel(s) {[int(b) + 1 for b in bad]}; "
            "autocorrelation undefined"
        )
    inv_sd = 1.0 / np.sqrt(var)
    corr = cov * inv_sd[None, :, None] * inv_sd[None, None, :]
    np.fill_diagonal(corr[0], 1.0)
    bound = 2.0 / np.sqrt(N1)
    hits = np.argwhere(np.abs(corr[1:]) > bound)
    violations = tuple((int(b), int(s), int(i) + 1) for i, b, s in hits)
    return ResidualReport(np.arange(max_lag + 1), cov, corr, float(bound), N1 + 1, violations)


def whiteness_verdict(report: ResidualReport, threshold: float = 0.1) -> WhitenessVerdict:
    """Fraction of lags ``1..l1`` outside the bound, per entry pair and overall.

    The test passes when the overall fraction of violating (entry, lag)
    combinations is at most ``threshold``. Entry pairs whose own fraction
    exceeds ``threshold`` are reported in ``flagged`` (0-based).
    """
    g = np.abs(report.autocorrelation[1:])
    r = report.autocorrelation.shape[1]
    if g.shape[0] == 0:
        fr = np.zeros((r, r))
        return WhitenessVerdict(fr, 0.0, threshold, True, ())
    over = g > report.bound
    fractions = over.mean(axis=0)
    overall = float(over.mean())
    flagged = tuple((int(b), int(s)) for b, s in np.argwhere(fractions > threshold))
    return WhitenessVerdict(fractions, overall, threshold, overall <= threshold, flagged)


def residual_report(measured, predicted, max_lag: int = 20, rtol: float = 1e-10) -> ResidualReport:
    """Residuals of a prediction and their autocorrelation.

    A residual channel whose standard deviation is below ``rtol`` times the
    RMS of the measured channel is round-off only and is rejected as zero
    variance, like an exactly constant residual.
    """
    y = np.asarray(measured, dtype=float)
    eps = residual_sequence(y, predicted)
    if eps.ndim == 1:
        eps, y = eps[:, None], y[:, None]
    scale = np.sqrt(np.mean(y**2, axis=0))
    tiny = np.flatnonzero(np.std(eps, axis=0) <= rtol * scale)
    if tiny.size:
        raise DataError(
            f"zero-variance residual channel(s) {[int(b) + 1 for b in tiny]}; "
            "the model reproduces the data exactly and the autocorrelation is undefined"
        )
    return autocorrelation(eps, max_lag)
