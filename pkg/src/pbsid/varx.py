"""VARX one-step-ahead predictor estimation and past-window selection by AIC."""

from __future__ import annotations

import logging
import warnings
from typing import NamedTuple

import numpy as np

from pbsid.core import (
    DataError,
    ExcitationError,
    SignalDataset,
    VarxEstimate,
    build_data_matrix,
    lstsq_rows,
    rank_tolerance,
)

logger = logging.getLogger(__name__)

LOGDET_FLOOR = 1e-300


def min_samples(p: int, m: int, r: int) -> int:
    """Smallest record length N+1 accepted for past window ``p``."""
    return p + (m + r) * p + 1


def regression_matrices(dataset: SignalDataset, p: int):
    """Return ``(Z_{0,p-1}^{(l)}, Y_{p,p}^{(l)})`` with ``l = N - p``."""
    l = dataset.N - p
    Z = build_data_matrix(dataset.z(), 0, p - 1, l)
    Y = build_data_matrix(dataset.outputs, p, p, l)
    return Z, Y


def log_det(cov: np.ndarray):
    """``ln det cov`` and a flag telling whether the floor was needed."""
    eig = np.linalg.eigvalsh(cov)
    degenerate = bool(eig[0] <= LOGDET_FLOOR)
    return float(np.sum(np.log(np.maximum(eig, LOGDET_FLOOR)))), degenerate


def aic_value(logdet: float, p: int, m: int, r: int, l: int) -> float:
    """``ln det(Gamma) + 2 r (m + r) p / (l + 1)``."""
    return logdet + 2.0 * r * (m + r) * p / (l + 1)


def fit_markov(Z: np.ndarray, Y: np.ndarray):
    """Minimum-norm solution ``M`` of ``min ||Y - M Z||_F``; returns ``(M, rank)``."""
    Z = np.asarray(Z, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Z.shape[1] != Y.shape[1]:
        raise DataError(f"Z has {Z.shape[1]} columns but Y has {Y.shape[1]}")
    M, rank, _ = lstsq_rows(Y, Z)
    return M, rank


def estimate_markov(dataset: SignalDataset, p: int) -> VarxEstimate:
    """Least-squares estimate of the Markov matrix ``M_{p-1}``.

    Solves ``min ||Y_{p,p} - M Z_{0,p-1}||_F`` by SVD. The lifted input rows
    of ``Z`` must have full row rank (persistency of excitation); a rank
    deficit that only involves the output rows, as happens for noise-free
    data generated by a low-order system, is allowed and yields the
    minimum-norm solution.
    """
    if p < 1:
        raise DataError(f"past window must be >= 1, got {p}")
    m, r = dataset.m, dataset.r
    need = min_samples(p, m, r)
    if len(dataset) < need:
        raise DataError(
            f"past window p={p} needs at least {need} samples, dataset has {len(dataset)}"
        )
    Z, Y = regression_matrices(dataset, p)
    l = Z.l

    if m:
        Uz = build_data_matrix(dataset.inputs, 0, p - 1, l).values
        su = np.linalg.svd(Uz, compute_uv=False)
        urank = int(np.sum(su > rank_tolerance(su, Uz.shape)))
        if urank < Uz.shape[0]:
            raise ExcitationError(
                f"persistency of excitation violated: lifted input matrix for p={p} "
                f"has rank {urank} < {Uz.shape[0]}"
            )

    M, rank = fit_markov(Z.values, Y.values)
    if rank < Z.values.shape[0]:
        logger.info("Z_{0,%d} row rank %d < %d; using minimum-norm fit", p - 1, rank, Z.values.shape[0])
    E = Y.values - M @ Z.values
    cov = E @ E.T / (l + 1)
    cov = 0.5 * (cov + cov.T)
    ld, degenerate = log_det(cov)
    return VarxEstimate(
        markov=M,
        p=p,
        residual_cov=cov,
        aic=aic_value(ld, p, m, r, l),
        l=l,
        degenerate=degenerate,
        rank=rank,
    )


class AicScan(NamedTuple):
    p_values: np.ndarray
    aic_values: np.ndarray
    p_hat: int
    degenerate: tuple
    estimates: dict


def max_feasible_p(n_samples: int, m: int, r: int) -> int:
    return max(0, (n_samples - 1) // (m + r + 1))


def aic_scan(dataset: SignalDataset, p_max: int = 40) -> AicScan:
    """Evaluate AIC(p) for ``p = 1..p_max`` and pick the minimizer.

    ``p_max`` is reduced, with a warning, to the largest window the record
    length supports. Ties go to the smaller ``p``.
    """
    if p_max < 1:
        raise DataError(f"p_max must be >= 1, got {p_max}")
    feasible = max_feasible_p(len(dataset), dataset.m, dataset.r)
    if feasible < 1:
        raise DataError(
            f"dataset of {len(dataset)} samples is too short for any past window "
            f"(need {min_samples(1, dataset.m, dataset.r)})"
        )
    if p_max > feasible:
        warnings.warn(
            f"p_max={p_max} exceeds the largest window supported by "
            f"{len(dataset)} samples; scanning p=1..{feasible}",
            stacklevel=2,
        )
        p_max = feasible
    ps = np.arange(1, p_max + 1)
    estimates = {int(p): estimate_markov(dataset, int(p)) for p in ps}
    values = np.array([estimates[int(p)].aic for p in ps])
    p_hat = int(ps[int(np.argmin(values))])  # argmin returns the first minimum
    degenerate = tuple(int(p) for p in ps if estimates[int(p)].degenerate)
    return AicScan(ps, values, p_hat, degenerate, estimates)
