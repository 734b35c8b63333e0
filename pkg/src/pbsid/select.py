"""Model-structure selection over (state order, future window) pairs.

Three validation scenarios are supported:

* ``"A"`` -- open-loop simulation of ``(A, B, C)`` driven by the inputs only.
* ``"B"`` -- simulation of the predictor form ``(A - K C, [B K], C)`` where the
  simulated output replaces the measurement after the first step.
* ``"C"`` -- the predictor form driven by the measured outputs
  (one-step-ahead prediction).
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from pbsid import kernels
from pbsid.core import (
    DataError,
    InnovationModel,
    SignalDataset,
    VarxEstimate,
    predictor_matrices,
)
from pbsid.sid import realize_orders
from pbsid.varx import AicScan, aic_scan, estimate_markov

logger = logging.getLogger(__name__)

METHODS = ("A", "B", "C")


def _check_method(method: str) -> str:
    method = str(method).upper()
    if method not in METHODS:
        raise DataError(f"unknown validation method {method!r}; expected one of A, B, C")
    return method


@dataclass(frozen=True)
class SelectionGrid:
    """Admissible pairs ``(n, f)`` with ``ceil(n / r) <= f <= f_max``."""

    n_max: int
    f_max: int
    r: int

    def __post_init__(self):
        if self.n_max < 1 or self.f_max < 1 or self.r < 1:
            raise DataError(f"invalid grid bounds {self}")

    def f_min(self, n: int) -> int:
        return -(-n // self.r)

    @property
    def pairs(self):
        return [
            (n, f)
            for n in range(1, self.n_max + 1)
            for f in range(self.f_min(n), self.f_max + 1)
        ]


class Score(NamedTuple):
    e: float
    vaf: Optional[np.ndarray]


@dataclass
class SelectionResult:
    method: str
    scores: dict
    best: tuple
    model: InnovationModel
    initial_state: np.ndarray
    predicted: np.ndarray
    singular_values: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.best[0]

    @property
    def f(self) -> int:
        return self.best[1]

    @property
    def e(self) -> float:
        return self.scores[self.best].e

    @property
    def vaf(self):
        return self.scores[self.best].vaf


def default_h(n: int, r: int, n_valid: int) -> int:
    """Initial-state window: ``max(ceil(n/r) + 5, 10)`` clipped to a quarter of the record."""
    h = max(-(-n // r) + 5, 10)
    return max(1, min(h, (n_valid - 1) // 4))


def _observability(A, C, h):
    n = A.shape[0]
    blocks = []
    M = np.eye(n)
    for _ in range(h):
        blocks.append(C @ M)
        M = A @ M
    return np.vstack(blocks)


def _toeplitz(A, B, C, h):
    """Block lower-triangular matrix with zero diagonal and ``C A^(i-j-1) B`` below."""
    r, m = C.shape[0], B.shape[1]
    D = np.zeros((h * r, h * m))
    markov = []
    M = B
    for _ in range(h - 1):
        markov.append(C @ M)
        M = A @ M
    for i in range(1, h):
        for j in range(i):
            D[i * r : (i + 1) * r, j * m : (j + 1) * m] = markov[i - j - 1]
    return D


def estimate_initial_state(model: InnovationModel, inputs, outputs, h: int, mode: str = "A"):
    """Least-squares initial state from the first ``h`` validation samples.

    ``mode="A"`` uses ``(A, B, C)`` with the inputs; ``mode="BC"`` (also
    accepts ``"B"``/``"C"``) uses ``(A - K C, [B K], C)`` with ``z = [u; y]``.
    The minimum-norm solution is returned; a warning is issued when the
    observability matrix has rank below ``n``.
    """
    u = np.asarray(inputs, dtype=float).reshape(len(inputs), -1)
    y = np.asarray(outputs, dtype=float).reshape(len(outputs), -1)
    if h < 1 or h > len(y):
        raise DataError(f"initial-state window h={h} outside [1, {len(y)}]")
    mode = str(mode).upper()
    if mode == "A":
        F, G, w = model.A, model.B, u
    elif mode in ("B", "C", "BC"):
        F, G = predictor_matrices(model)
        w = np.hstack([u, y])
    else:
        raise DataError(f"unknown initial-state mode {mode!r}")
    C = model.C
    O = _observability(F, C, h)
    D = _toeplitz(F, G, C, h)
    rhs = y[:h].reshape(-1) - D @ w[:h].reshape(-1)
    with np.errstate(all="ignore"):
        x0, _, rank, sv = np.linalg.lstsq(O, rhs, rcond=None)
    if rank < model.n:
        warnings.warn(
            f"observability matrix over h={h} samples has rank {rank} < n={model.n}; "
            "returning the minimum-norm initial state",
            stacklevel=2,
        )
    return x0


def simulate_method_a(model: InnovationModel, x0, inputs) -> np.ndarray:
    """Open-loop output ``y_k = C d_k`` with ``d_{k+1} = A d_k + B u_k``."""
    with np.errstate(all="ignore"):
        return kernels.ss_simulate(model.A, model.B, model.C, np.asarray(x0, float), inputs)


def simulate_method_b(model: InnovationModel, x0, inputs, measured_outputs=None) -> np.ndarray:
    """Predictor form fed back with its own simulated output.

    The first step uses the measured ``y_0`` when ``measured_outputs`` is
    given; all later steps use ``C x_k``.
    """
    At, _ = predictor_matrices(model)
    u = np.asarray(inputs, dtype=float)
    if measured_outputs is None:
        Y, n_meas = np.zeros((u.shape[0], model.r)), 0
    else:
        Y, n_meas = np.asarray(measured_outputs, dtype=float), 1
    with np.errstate(all="ignore"):
        return kernels.predictor_simulate(At, model.B, model.K, model.C, np.asarray(x0, float), u, Y, n_meas)


def simulate_method_c(model: InnovationModel, x0, inputs, measured_outputs) -> np.ndarray:
    """One-step-ahead predictor driven by the measured outputs."""
    At, _ = predictor_matrices(model)
    u = np.asarray(inputs, dtype=float)
    Y = np.asarray(measured_outputs, dtype=float)
    if Y.shape[0] != u.shape[0]:
        raise DataError("measured outputs and inputs differ in length")
    with np.errstate(all="ignore"):
        return kernels.predictor_simulate(At, model.B, model.K, model.C, np.asarray(x0, float), u, Y, Y.shape[0])


def simulate(model: InnovationModel, x0, dataset: SignalDataset, method: str) -> np.ndarray:
    method = _check_method(method)
    if method == "A":
        return simulate_method_a(model, x0, dataset.inputs)
    if method == "B":
        return simulate_method_b(model, x0, dataset.inputs, dataset.outputs)
    return simulate_method_c(model, x0, dataset.inputs, dataset.outputs)


def relative_error(measured, predicted) -> float:
    """``||y - y_hat|| / ||y||`` over all samples and channels."""
    y = np.asarray(measured, dtype=float)
    yh = np.asarray(predicted, dtype=float)
    if y.shape != yh.shape:
        raise DataError(f"shape mismatch: measured {y.shape} vs predicted {yh.shape}")
    ny = np.linalg.norm(y)
    if ny == 0:
        raise DataError("relative error undefined for an all-zero measured signal")
    with np.errstate(all="ignore"):
        e = float(np.linalg.norm(y - yh) / ny)
    return e if np.isfinite(e) else math.inf


def vaf(measured, predicted) -> np.ndarray:
    """Variance accounted for per channel, in percent, clamped to [0, 100]."""
    y = np.asarray(measured, dtype=float)
    yh = np.asarray(predicted, dtype=float)
    if y.ndim == 1:
        y, yh = y[:, None], yh[:, None]
    if y.shape != yh.shape:
        raise DataError(f"shape mismatch: measured {y.shape} vs predicted {yh.shape}")
    if y.shape[0] < 2:
        raise DataError("VAF needs at least 2 samples per channel")
    var_y = np.var(y, axis=0)
    flat = np.flatnonzero(var_y == 0)
    if flat.size:
        raise DataError(f"zero-variance output channel(s) {[int(i) + 1 for i in flat]}; VAF undefined")
    with np.errstate(all="ignore"):
        ratio = np.var(y - yh, axis=0) / var_y
    ratio = np.where(np.isfinite(ratio), ratio, np.inf)
    return np.clip(1.0 - ratio, 0.0, 1.0) * 100.0


def _same_data(a: SignalDataset, b: SignalDataset) -> bool:
    return (
        a.inputs.shape == b.inputs.shape
        and a.outputs.shape == b.outputs.shape
        and np.array_equal(a.inputs, b.inputs)
        and np.array_equal(a.outputs, b.outputs)
    )


def _thread_count(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("PBSID_THREADS")
    return max(1, int(env)) if env else 1


def _score_f(identification, validation, markov, f, orders, method, h):
    out = []
    sv = None
    N1 = len(validation)
    for n, real in realize_orders(identification, markov, f, orders):
        sv = real.singular_values
        model = real.model
        hh = h if h is not None else default_h(n, validation.r, N1)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                x0 = estimate_initial_state(
                    model, validation.inputs, validation.outputs, hh, "A" if method == "A" else "BC"
                )
                yhat = simulate(model, x0, validation, method)
            e = relative_error(validation.outputs, yhat)
        except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            logger.debug("pair (%d, %d) failed: %s", n, f, exc)
            x0, yhat, e = None, None, math.inf
        v = None
        if math.isfinite(e):
            try:
                v = vaf(validation.outputs, yhat)
            except DataError:
                v = None
        out.append(((n, f), Score(e, v), model, x0, yhat))
    return f, sv, out


def grid_search(
    identification: SignalDataset,
    validation: SignalDataset,
    p_hat,
    grid: SelectionGrid,
    method: str = "A",
    h: Optional[int] = None,
    workers: Optional[int] = None,
    tie_tol: float = 1e-9,
) -> SelectionResult:
    """Score every admissible ``(n, f)`` pair on the validation data.

    ``p_hat`` is the past window or an existing :class:`VarxEstimate` for the
    identification data. Pairs whose simulation diverges score ``inf``. The
    best pair minimizes the relative error; errors within ``tie_tol`` of the
    minimum are ties, resolved toward smaller ``n`` then smaller ``f``.
    """
    method = _check_method(method)
    if identification.m != validation.m or identification.r != validation.r:
        raise DataError("identification and validation data have different channel counts")
    if _same_data(identification, validation):
        warnings.warn("datasets overlap: validation data equals identification data", stacklevel=2)
    markov = p_hat if isinstance(p_hat, VarxEstimate) else estimate_markov(identification, int(p_hat))
    f_max = min(grid.f_max, markov.p)
    by_f = {}
    for n, f in grid.pairs:
        if f <= f_max:
            by_f.setdefault(f, []).append(n)
    if not by_f:
        raise DataError("selection grid is empty for the given past window")

    tasks = sorted(by_f.items())
    nw = _thread_count(workers)
    if nw > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=nw) as ex:
            results = list(
                ex.map(
                    lambda t: _score_f(identification, validation, markov, t[0], t[1], method, h),
                    tasks,
                )
            )
    else:
        results = [_score_f(identification, validation, markov, f, ns, method, h) for f, ns in tasks]

    scores, entries, svals = {}, {}, {}
    for f, sv, out in results:
        if sv is not None:
            svals[f] = sv
        for pair, score, model, x0, yhat in out:
            scores[pair] = score
            entries[pair] = (model, x0, yhat)
    if not scores:
        raise DataError("no admissible (n, f) pair could be evaluated")
    scores = dict(sorted(scores.items()))
    e_min = min(s.e for s in scores.values())
    if not math.isfinite(e_min):
        raise DataError("every candidate model diverged on the validation data")
    best = min(p for p, s in scores.items() if s.e <= e_min + tie_tol)
    model, x0, yhat = entries[best]
    return SelectionResult(method, scores, best, model, x0, yhat, svals)


@dataclass
class IdentificationResult:
    aic: AicScan
    markov: VarxEstimate
    selection: SelectionResult

    @property
    def p_hat(self) -> int:
        return self.aic.p_hat


def identify(
    identification: SignalDataset,
    validation: SignalDataset,
    p_max: int = 40,
    n_max: int = 40,
    method: str = "A",
    h: Optional[int] = None,
    f_max: Optional[int] = None,
    workers: Optional[int] = None,
) -> IdentificationResult:
    """Past-window selection by AIC followed by the (n, f) grid search."""
    scan = aic_scan(identification, p_max)
    markov = scan.estimates[scan.p_hat]
    grid = SelectionGrid(n_max, f_max or scan.p_hat, identification.r)
    sel = grid_search(identification, validation, markov, grid, method, h, workers)
    rho = sel.model.meta.get("predictor_spectral_radius", 0.0)
    if rho >= 1:
        logger.warning("selected predictor matrix has spectral radius %.3f >= 1", rho)
    return IdentificationResult(scan, markov, sel)
