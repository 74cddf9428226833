"""Peak-, heart-rate- and HRV-level evaluation."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import kernels
from .spectral import rfft_power

__all__ = [
    "MatchResult", "HrvFeatures", "f1_at", "hr_mae", "nn_intervals", "hrv_time",
    "hrv_freq", "hrv_features", "pearson", "bland_altman", "LF_BAND", "HF_BAND",
]

LF_BAND = (0.04, 0.15)
HF_BAND = (0.15, 0.4)
HRV_RESAMPLE_HZ = 4.0
HRV_MIN_SECONDS = 60.0
LOA_Z = 1.96


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: np.ndarray    # (tp, 2) rows of [pred_index, truth_index] into the peak arrays


@dataclass(frozen=True)
class HrvFeatures:
    mean_nn: float
    sdnn: float
    rmssd: float
    sdsd: float
    lf: float = None
    hf: float = None
    lf_hf: float = None


def _peaks(p):
    p = np.asarray(p, dtype=np.int64).ravel()
    if p.size > 1 and np.any(np.diff(p) <= 0):
        raise ValueError("peaks must be strictly increasing")
    return p


def f1_at(pred, truth, radius):
    """Greedy nearest-first one-to-one matching within ``radius`` samples.

    Candidate pairs are taken in order of increasing distance (ties: lower
    truth index, then lower prediction index); each peak is used at most once.

    Returns
    -------
    precision, recall, f1 : float
        Zero where the denominator is zero.
    match : MatchResult
    """
    pred, truth = _peaks(pred), _peaks(truth)
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    pairs = kernels.greedy_match(pred, truth, int(radius))
    tp = len(pairs)
    fp, fn = pred.size - tp, truth.size - tp
    precision = tp / pred.size if pred.size else 0.0
    recall = tp / truth.size if truth.size else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1, MatchResult(tp, fp, fn, pairs)


def hr_mae(pairs):
    """Mean absolute difference over (estimated, reference) heart-rate pairs."""
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no heart-rate pairs")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected (estimate, reference) pairs")
    return float(np.mean(np.abs(arr[:, 0] - arr[:, 1])))


def nn_intervals(peaks, fs):
    """Peak-to-peak intervals in milliseconds."""
    p = _peaks(peaks)
    return np.diff(p) * (1000.0 / fs)


def hrv_time(nn):
    """(mean_nn, sdnn, rmssd, sdsd) in ms; population standard deviations."""
    nn = np.asarray(nn, dtype=np.float64)
    if nn.size < 3:
        raise ValueError(f"need >= 3 intervals, got {nn.size}")
    d = np.diff(nn)
    return (float(nn.mean()), float(nn.std()), float(np.sqrt(np.mean(d * d))), float(d.std()))


def hrv_freq(nn, times=None):
    """LF and HF band powers (ms^2) and their ratio.

    The NN series is placed at the beat times (cumulative sum of the
    intervals unless ``times`` in seconds are given), linearly interpolated to
    4 Hz, mean-removed and passed through a Hann periodogram.  ``lf_hf`` is
    NaN when ``hf`` is zero.
    """
    nn = np.asarray(nn, dtype=np.float64)
    t = np.cumsum(nn) / 1000.0 if times is None else np.asarray(times, dtype=np.float64)
    if t.shape != nn.shape:
        raise ValueError("times and intervals differ in length")
    if nn.size < 2 or t[-1] - t[0] < HRV_MIN_SECONDS:
        raise ValueError(f"frequency-domain HRV needs >= {HRV_MIN_SECONDS:.0f} s of intervals")
    if np.any(np.diff(t) <= 0):
        raise ValueError("interval times must be strictly increasing")
    grid = np.arange(t[0], t[-1], 1.0 / HRV_RESAMPLE_HZ)
    series = np.interp(grid, t, nn)
    series -= series.mean()
    freqs, power = rfft_power(series, HRV_RESAMPLE_HZ)
    lf = float(power[(freqs >= LF_BAND[0]) & (freqs < LF_BAND[1])].sum())
    hf = float(power[(freqs >= HF_BAND[0]) & (freqs <= HF_BAND[1])].sum())
    return lf, hf, (lf / hf if hf > 0 else math.nan)


def hrv_features(nn, times=None):
    """Time-domain features, plus frequency-domain ones when >= 60 s are available."""
    mean_nn, sdnn, rmssd, sdsd = hrv_time(nn)
    t = np.cumsum(nn) / 1000.0 if times is None else np.asarray(times, dtype=np.float64)
    if t[-1] - t[0] < HRV_MIN_SECONDS:
        return HrvFeatures(mean_nn, sdnn, rmssd, sdsd)
    lf, hf, ratio = hrv_freq(nn, times)
    return HrvFeatures(mean_nn, sdnn, rmssd, sdsd, lf, hf, ratio)


def _pair(a, b, min_len):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError("series differ in length")
    if a.size < min_len:
        raise ValueError(f"need at least {min_len} values")
    return a, b


def pearson(a, b):
    """Sample correlation and two-sided p-value (t distribution, n-2 dof)."""
    a, b = _pair(a, b, 3)
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = float(da @ da), float(db @ db)
    if saa == 0 or sbb == 0:
        raise ValueError("correlation undefined for a constant series")
    r = float(np.clip((da @ db) / math.sqrt(saa * sbb), -1.0, 1.0))
    dof = a.size - 2
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt(dof / (1.0 - r * r))
    return r, float(2.0 * stats.t.sf(abs(t), dof))


def bland_altman(a, b):
    """(mean difference, lower, upper limit of agreement) with population std."""
    a, b = _pair(a, b, 1)
    d = a - b
    m, s = float(d.mean()), float(d.std())
    return m, m - LOA_Z * s, m + LOA_Z * s
