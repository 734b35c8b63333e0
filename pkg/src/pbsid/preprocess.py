"""Signal conditioning: low-pass filtering, detrending, spectra, outliers,
downsampling and step-response diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps

from pbsid.core import DataError, SignalDataset


@dataclass(frozen=True)
class FilterSpec:
    """Digital Butterworth low-pass specification."""

    cutoff_hz: float
    sample_rate_hz: float
    order: int = 4
    kind: str = "lowpass"

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise DataError(f"filter order must be a positive integer, got {self.order}")
        if self.kind != "lowpass":
            raise DataError(f"only low-pass filters are supported, got {self.kind!r}")
        if not self.sample_rate_hz > 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not 0 < self.cutoff_hz < self.sample_rate_hz / 2:
            raise DataError(
                f"cutoff {self.cutoff_hz} Hz must lie strictly between 0 and the "
                f"Nyquist frequency {self.sample_rate_hz / 2} Hz"
            )

    @property
    def normalized_cutoff(self) -> float:
        """Cutoff as a fraction of the Nyquist frequency."""
        return self.cutoff_hz / (self.sample_rate_hz / 2)

    @property
    def transient_samples(self) -> int:
        """Leading samples to treat as filter transient."""
        return math.ceil(3 / self.normalized_cutoff)


def butterworth_sos(spec: FilterSpec) -> np.ndarray:
    """Second-order sections of the bilinear-transform (prewarped) design."""
    return sps.butter(int(spec.order), spec.cutoff_hz, btype="lowpass", fs=spec.sample_rate_hz, output="sos")


def butterworth_lowpass(signal, spec: FilterSpec) -> np.ndarray:
    """Causal single-pass Butterworth filtering.

    Filter state starts at the steady state for the first sample, so a
    constant signal passes through unchanged.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise DataError("butterworth_lowpass expects a 1-D signal")
    if x.size < spec.order + 1:
        raise DataError(f"signal of {x.size} samples is shorter than order + 1 = {spec.order + 1}")
    sos = butterworth_sos(spec)
    zi = sps.sosfilt_zi(sos) * x[0]
    y, _ = sps.sosfilt(sos, x, zi=zi)
    return y


def detrend(signal, mode: str = "mean") -> np.ndarray:
    """Remove the mean (``"mean"``) or the least-squares line (``"linear"``)."""
    x = np.asarray(signal, dtype=float)
    if mode == "mean":
        return x - x.mean() if x.size else x.copy()
    if mode == "linear":
        if x.size < 2:
            raise DataError("linear detrend needs at least 2 samples")
        return sps.detrend(x, type="linear")
    raise DataError(f"unknown detrend mode {mode!r}")


def psd_welch(signal, sample_rate_hz: float, segment_len=None, overlap_frac: float = 0.5):
    """Welch PSD with a Hann window; returns ``(frequencies, density)``.

    ``segment_len`` defaults to ``min(4096, len // 4)``.
    """
    x = np.asarray(signal, dtype=float)
    if segment_len is None:
        segment_len = max(1, min(4096, x.size // 4))
    segment_len = int(segment_len)
    if segment_len > x.size:
        raise DataError(f"segment length {segment_len} exceeds signal length {x.size}")
    if not 0 <= overlap_frac < 1:
        raise DataError(f"overlap fraction must lie in [0, 1), got {overlap_frac}")
    noverlap = int(round(segment_len * overlap_frac))
    f, pxx = sps.welch(
        x, fs=sample_rate_hz, window="hann", nperseg=segment_len, noverlap=noverlap,
        detrend=False, scaling="density", return_onesided=True,
    )
    return f, np.maximum(pxx, 0.0)


def downsample(dataset: SignalDataset, factor: int) -> SignalDataset:
    """Keep every ``factor``-th sample.

    No anti-alias filtering is applied here; filter the outputs first.
    """
    if int(factor) != factor or factor < 1:
        raise DataError(f"downsampling factor must be a positive integer, got {factor}")
    factor = int(factor)
    sl = slice(None, None, factor)
    return SignalDataset(
        dataset.inputs[sl], dataset.outputs[sl], dataset.sample_period * factor,
        dataset.timestamps[sl], dataset.labels,
    )


def remove_outliers(signal, window: int = 11, threshold_sigmas: float = 3.0) -> np.ndarray:
    """Hampel filter: replace samples far from the moving median by that median.

    A sample is an outlier when it deviates from its window median by more
    than ``threshold_sigmas`` robust standard deviations (1.4826 * MAD).
    Edges are padded by repeating the end samples.
    """
    x = np.asarray(signal, dtype=float)
    if window < 3 or window % 2 == 0:
        raise DataError(f"window must be odd and >= 3, got {window}")
    if x.size == 0:
        return x.copy()
    half = window // 2
    padded = np.pad(x, half, mode="edge")
    win = sliding_window_view(padded, window)
    med = np.median(win, axis=1)
    mad = np.median(np.abs(win - med[:, None]), axis=1)
    out = x.copy()
    bad = np.abs(x - med) > threshold_sigmas * 1.4826 * mad
    out[bad] = med[bad]
    return out


@dataclass(frozen=True)
class NonlinearityTrace:
    times: np.ndarray
    w_values: np.ndarray
    valid: np.ndarray
    label: str
    mean_w: float


def nonlinearity_index(y_num, y_den, y0: float, eps: float = 0.5, times=None, label: str = "") -> NonlinearityTrace:
    """Ratio ``(y_num - y0) / (y_den - y0)`` of two responses about the zero-input level.

    For a linear system driven by inputs ``b s(t)`` and ``a s(t)`` the ratio
    is ``b / a`` at every time. Points with ``|y_den - y0| <= eps`` are
    marked invalid (NaN) and excluded from ``mean_w``.
    """
    num = np.asarray(y_num, dtype=float)
    den = np.asarray(y_den, dtype=float)
    if num.shape != den.shape:
        raise DataError(f"responses differ in shape: {num.shape} vs {den.shape}")
    if not eps > 0:
        raise DataError(f"eps must be positive, got {eps}")
    valid = np.abs(den - y0) > eps
    if not valid.any():
        raise DataError("denominator below eps everywhere")
    w = np.full(num.shape, np.nan)
    w[valid] = (num[valid] - y0) / (den[valid] - y0)
    t = np.arange(num.size, dtype=float) if times is None else np.asarray(times, float)
    return NonlinearityTrace(t, w, valid, label, float(np.mean(w[valid])))


def estimate_time_constant(times, response, initial=None, final=None) -> float:
    """First-order time constant: time to cover 63.2 % of the step change.

    ``initial``/``final`` default to the first and last samples. The
    crossing time is linearly interpolated.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(response, dtype=float)
    y_i = y[0] if initial is None else float(initial)
    y_f = y[-1] if final is None else float(final)
    if y_f == y_i:
        raise DataError("step response has no net change")
    frac = (y - y_i) / (y_f - y_i)
    level = 1 - math.exp(-1)
    above = np.flatnonzero(frac >= level)
    if above.size == 0:
        raise DataError("response never reaches 63.2 % of the final change")
    k = above[0]
    if k == 0:
        return 0.0
    t0, t1, f0, f1 = t[k - 1], t[k], frac[k - 1], frac[k]
    return float(t0 + (level - f0) * (t1 - t0) / (f1 - f0) - t[0])
