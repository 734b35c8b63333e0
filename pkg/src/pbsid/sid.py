"""State-sequence recovery and system-matrix estimation from a VARX fit."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from pbsid.core import (
    DataError,
    DataMatrix,
    InnovationModel,
    SignalDataset,
    VarxEstimate,
    build_data_matrix,
    lstsq_rows,
    rank_tolerance,
)
from pbsid.varx import regression_matrices

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StateRealization:
    model: InnovationModel
    singular_values: np.ndarray
    state_sequence: np.ndarray


def build_q_matrix(markov: VarxEstimate, f: int) -> np.ndarray:
    """Stack ``f`` shifted, truncated copies of the Markov matrix.

    Block-row ``i`` is ``[0_{r x (m+r) i}, M[:, :(m+r)(p-i)]]``.
    """
    p, r, w = markov.p, markov.r, markov.block
    if not 1 <= f <= p:
        raise DataError(f"future window f={f} must satisfy 1 <= f <= p={p}")
    M = markov.markov
    Q = np.zeros((r * f, w * p))
    for i in range(f):
        Q[i * r : (i + 1) * r, w * i :] = M[:, : w * (p - i)]
    return Q


def projection_svd(q_matrix: np.ndarray, Z: DataMatrix):
    """Thin SVD ``(U, s, Vt)`` of ``Q Z``."""
    return np.linalg.svd(q_matrix @ Z.values, full_matrices=False)


def truncate_states(s: np.ndarray, Vt: np.ndarray, n: int) -> np.ndarray:
    """``diag(s[:n])^(1/2) Vt[:n]``, shape (n, l+1)."""
    return np.sqrt(np.maximum(s[:n], 0.0))[:, None] * Vt[:n]


def state_sequence(q_matrix: np.ndarray, Z: DataMatrix, n: int):
    """Estimate the state sequence of order ``n`` from the row space of ``Q Z``.

    Returns ``(singular_values, X)`` where ``X`` has shape (n, l+1) and the
    singular values are the full spectrum of ``Q Z``.
    """
    rows, cols = q_matrix.shape[0], Z.values.shape[1]
    if not 1 <= n <= min(rows, cols):
        raise DataError(f"state order n={n} must lie in [1, {min(rows, cols)}]")
    _, s, Vt = projection_svd(q_matrix, Z)
    numrank = int(np.sum(s > rank_tolerance(s, (rows, cols))))
    if n > numrank:
        warnings.warn(
            f"state order {n} exceeds numerical rank {numrank} of Q Z; "
            "the model is over-parameterized",
            stacklevel=2,
        )
    return s, truncate_states(s, Vt, n)


def estimate_matrices(X, Z_shifted: DataMatrix, Y: DataMatrix, n: int, m: int, r: int):
    """Least-squares estimates of ``[A~ B K]`` and ``C`` from a state sequence.

    ``X`` is the state sequence (n, l+1), ``Z_shifted`` holds ``z_p..z_{p+l-1}``
    and ``Y`` holds ``y_p..y_{p+l}``. Returns an :class:`InnovationModel`
    with ``A = A~ + K C``.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] != n:
        raise DataError(f"state sequence has {X.shape[0]} rows, expected n={n}")
    if X.shape[1] < 2:
        raise DataError("state sequence needs at least 2 columns")
    Zs = Z_shifted.values
    Yv = Y.values
    if Zs.shape != (m + r, X.shape[1] - 1) or Yv.shape != (r, X.shape[1]):
        raise DataError(
            f"inconsistent dimensions: X {X.shape}, Z {Zs.shape}, Y {Yv.shape}"
        )
    S = np.vstack([X[:, :-1], Zs])
    Qhat, srank, ss = lstsq_rows(X[:, 1:], S)
    Chat, crank, _ = lstsq_rows(Yv, X)
    meta = {
        "S_rank": srank,
        "S_rows": S.shape[0],
        "S_cond": float(ss[0] / ss[srank - 1]) if srank else float("inf"),
        "S_rank_deficient": srank < S.shape[0],
    }
    if srank < S.shape[0]:
        logger.debug("S has rank %d < %d; pseudo-inverse solution", srank, S.shape[0])
    At = Qhat[:, :n]
    B = Qhat[:, n : n + m]
    K = Qhat[:, n + m : n + m + r]
    A = At + K @ Chat
    meta["predictor_spectral_radius"] = spectral_radius(At)
    return InnovationModel(A, B, Chat, K, meta=meta)


def _data_for(dataset: SignalDataset, p: int):
    Z, Y = regression_matrices(dataset, p)
    Zs = build_data_matrix(dataset.z(), p, p, Z.l - 1)
    return Z, Zs, Y


def realize_orders(dataset: SignalDataset, markov: VarxEstimate, f: int, orders: Iterable[int]):
    """Realizations for several state orders sharing one ``(p, f)`` SVD.

    Yields ``(n, StateRealization)``. Orders outside the admissible range are
    skipped.
    """
    p = markov.p
    Z, Zs, Y = _data_for(dataset, p)
    Q = build_q_matrix(markov, f)
    _, s, Vt = projection_svd(Q, Z)
    nmax = min(Q.shape[0], Z.values.shape[1])
    for n in orders:
        if not 1 <= n <= nmax:
            continue
        X = truncate_states(s, Vt, n)
        model = estimate_matrices(X, Zs, Y, n, dataset.m, dataset.r)
        model = InnovationModel(model.A, model.B, model.C, model.K, f, p, model.meta)
        yield n, StateRealization(model, s, X)


def realize(dataset: SignalDataset, markov: VarxEstimate, f: int, n: int) -> StateRealization:
    """Full second stage for one ``(n, f)`` pair."""
    out = list(realize_orders(dataset, markov, f, [n]))
    if not out:
        raise DataError(f"state order n={n} is not admissible for f={f}")
    return out[0][1]


def spectral_radius(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    if not np.all(np.isfinite(M)):
        return float("inf")
    return float(np.max(np.abs(np.linalg.eigvals(M))))
