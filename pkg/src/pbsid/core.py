"""Domain types and block-structured data matrices.

Conventions: sequences are time-major arrays, row ``k`` is sample ``k``
(0-based). A lifted vector stacks samples ``q..r_idx`` vertically; a data
matrix collects ``l + 1`` consecutive lifted vectors as columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class PbsidError(Exception):
    """Base class for errors raised by this package."""


class DataError(PbsidError, ValueError):
    """Input data is malformed, inconsistent or too short."""


class NumericalError(PbsidError, ArithmeticError):
    """A numerical step failed (rank loss, non-finite result, ...)."""


class ExcitationError(NumericalError):
    """The regressor data matrix violates persistency of excitation."""


def _as_2d(seq, name="sequence") -> np.ndarray:
    arr = np.asarray(seq, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DataError(f"{name} must be a sequence of vectors, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SignalDataset:
    """Sampled multichannel input/output record ``(u_k, y_k), k = 0..N``.

    ``inputs`` has shape (N+1, m), ``outputs`` (N+1, r). Timestamps default
    to ``k * sample_period``.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    sample_period: float = 1.0
    timestamps: Optional[np.ndarray] = None
    labels: Sequence[str] = field(default=())

    def __post_init__(self):
        u = _as_2d(self.inputs, "inputs")
        y = _as_2d(self.outputs, "outputs")
        if u.shape[0] != y.shape[0]:
            raise DataError(
                f"inputs and outputs differ in length ({u.shape[0]} vs {y.shape[0]})"
            )
        if u.shape[0] < 1:
            raise DataError("a dataset needs at least one sample")
        if not self.sample_period > 0:
            raise DataError(f"sample_period must be positive, got {self.sample_period}")
        if self.timestamps is None:
            t = np.arange(u.shape[0]) * float(self.sample_period)
        else:
            t = np.asarray(self.timestamps, dtype=float).reshape(-1)
            if t.shape[0] != u.shape[0]:
                raise DataError("timestamps length does not match the samples")
            if t.shape[0] > 1 and np.any(np.diff(t) <= 0):
                raise DataError("timestamps must be strictly increasing")
        labels = tuple(self.labels)
        if not labels:
            labels = tuple(f"u{i + 1}" for i in range(u.shape[1])) + tuple(
                f"y{i + 1}" for i in range(y.shape[1])
            )
        elif len(labels) != u.shape[1] + y.shape[1]:
            raise DataError(
                f"expected {u.shape[1] + y.shape[1]} channel labels, got {len(labels)}"
            )
        for arr in (u, y, t):
            arr.setflags(write=False)
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "outputs", y)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sample_period", float(self.sample_period))

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def r(self) -> int:
        return self.outputs.shape[1]

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def N(self) -> int:
        """Index of the last sample (the record holds N + 1 samples)."""
        return len(self) - 1

    def z(self) -> np.ndarray:
        """Stacked regressor samples ``z_k = [u_k; y_k]``, shape (N+1, m+r)."""
        return np.hstack([self.inputs, self.outputs])

    def slice(self, start: int, stop: Optional[int] = None) -> "SignalDataset":
        sl = slice(start, stop)
        return SignalDataset(
            self.inputs[sl],
            self.outputs[sl],
            self.sample_period,
            self.timestamps[sl],
            self.labels,
        )


@dataclass(frozen=True)
class DataMatrix:
    """Block-Hankel data matrix ``W_{q,r_idx}^{(l)}``."""

    values: np.ndarray
    block_dim: int
    q: int
    r_idx: int
    l: int

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class InnovationModel:
    """Kalman innovation model x+ = A x + B u + K e, y = C x + e."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    K: np.ndarray
    f_used: Optional[int] = None
    p_used: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        C = np.asarray(self.C, dtype=float).reshape(-1, n)
        K = np.asarray(self.K, dtype=float).reshape(n, -1)
        if A.shape != (n, n):
            raise DataError(f"A must be square, got {A.shape}")
        if K.shape[1] != C.shape[0]:
            raise DataError(f"K has {K.shape[1]} columns but C has {C.shape[0]} rows")
        for arr in (A, B, C, K):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "K", K)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def r(self) -> int:
        return self.C.shape[0]

    @property
    def A_tilde(self) -> np.ndarray:
        return predictor_matrices(self)[0]

    @property
    def B_tilde(self) -> np.ndarray:
        return predictor_matrices(self)[1]


@dataclass(frozen=True)
class VarxEstimate:
    """Least-squares VARX fit: Markov matrix, residual covariance and AIC."""

    markov: np.ndarray
    p: int
    residual_cov: np.ndarray
    aic: float
    l: int
    degenerate: bool = False
    rank: Optional[int] = None

    def __post_init__(self):
        cols = self.markov.shape[1]
        if self.p < 1 or cols % self.p:
            raise DataError(
                f"Markov matrix with {cols} columns is not compatible with p={self.p}"
            )

    @property
    def r(self) -> int:
        return self.markov.shape[0]

    @property
    def block(self) -> int:
        """Per-lag block width ``m + r``."""
        return self.markov.shape[1] // self.p

    @property
    def m(self) -> int:
        return self.block - self.r


def lift(seq, q: int, r_idx: int) -> np.ndarray:
    """Stack samples ``q..r_idx`` (inclusive) into one vector."""
    arr = _as_2d(seq)
    last = arr.shape[0] - 1
    if not (0 <= q <= r_idx <= last):
        raise IndexError(f"lift window [{q}, {r_idx}] outside sample range [0, {last}]")
    return arr[q : r_idx + 1].reshape(-1).copy()


def build_data_matrix(seq, q: int, r_idx: int, l: int) -> DataMatrix:
    """Data matrix whose column ``j`` is ``lift(seq, q + j, r_idx + j)``."""
    arr = _as_2d(seq)
    last = arr.shape[0] - 1
    if q < 0 or q > r_idx or l < 0:
        raise DataError(f"invalid window q={q}, r_idx={r_idx}, l={l}")
    if r_idx + l > last:
        raise DataError(
            f"data matrix needs {r_idx + l + 1} samples, only {last + 1} available"
        )
    d = arr.shape[1]
    w = r_idx - q + 1
    # windows: (l+1, d, w) -> (l+1, w, d) so each column is a time-ordered stack
    win = sliding_window_view(arr[q : r_idx + l + 1], w, axis=0)
    values = np.ascontiguousarray(win.transpose(0, 2, 1).reshape(l + 1, w * d).T)
    values.setflags(write=False)
    return DataMatrix(values, d, q, r_idx, l)


def predictor_matrices(model: InnovationModel):
    """Return ``(A - K C, [B K])``."""
    At = model.A - model.K @ model.C
    Bt = np.hstack([model.B, model.K])
    return At, Bt


def rank_tolerance(s: np.ndarray, shape) -> float:
    """Singular values below this count as zero."""
    if s.size == 0:
        return 0.0
    return max(shape) * np.finfo(float).eps * float(s[0])


def lstsq_rows(Y: np.ndarray, X: np.ndarray):
    """Minimum-norm solution of ``min ||Y - Theta X||_F`` via truncated SVD.

    Returns ``(Theta, rank, singular_values)``.
    """
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    rank = int(np.sum(s > rank_tolerance(s, X.shape))) if s.size else 0
    if rank == 0:
        return np.zeros((Y.shape[0], X.shape[0])), 0, s
    # Theta = Y V_r S_r^-1 U_r^T
    Theta = ((Y @ Vt[:rank].T) / s[:rank]) @ U[:, :rank].T
    return Theta, rank, s
