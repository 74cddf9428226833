"""Classical time-domain PPG peak detectors used as comparison baselines.

Each detector takes a :class:`~tau_ppg.signal.PpgSegment` (or a bare array
plus ``fs``) and returns strictly increasing int64 peak indices.  None of
them filter the input; callers normally pass the preprocessed signal.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d, uniform_filter1d

from .spectral import envelope

__all__ = [
    "BaselineConfig", "adaptive_threshold_detect", "elgendi_detect", "hilbert_detect",
    "heartpy_detect", "DETECTORS", "run_detector",
]

FLAT_EPS = 1e-12
HEARTPY_TIE_SAMPLES = 1.0


@dataclass(frozen=True)
class BaselineConfig:
    # adaptive threshold
    envelope_window_s: float = 0.75
    smooth_window_s: float = 1.5
    amplitude_frac: float = 0.2
    refractory_s: float = 0.3
    # Elgendi two-moving-average
    peak_window_s: float = 0.111
    beat_window_s: float = 0.667
    beta: float = 0.02
    # Hilbert second-derivative envelope
    hilbert_smooth_s: float = 0.1
    hilbert_window_s: float = 1.0
    hilbert_frac: float = 0.5
    # HeartPy-style moving-average threshold
    ma_window_s: float = 0.75
    elevations: tuple = tuple(range(10, 151, 10))

    def __post_init__(self):
        windows = (self.envelope_window_s, self.smooth_window_s, self.peak_window_s,
                   self.beat_window_s, self.hilbert_smooth_s, self.hilbert_window_s,
                   self.ma_window_s)
        if min(windows) <= 0:
            raise ValueError("window lengths must be positive")
        if self.refractory_s < 0 or self.beta < 0 or not self.elevations:
            raise ValueError("refractory and beta must be nonnegative, elevations nonempty")


DEFAULT = BaselineConfig()


def _unpack(segment, fs):
    if fs is None:
        return np.asarray(segment.samples, dtype=np.float64), float(segment.fs)
    return np.asarray(segment, dtype=np.float64), float(fs)


def _width(seconds, fs):
    return max(1, int(round(seconds * fs)))


def _empty():
    return np.zeros(0, dtype=np.int64)


def _is_flat(x):
    return x.size < 3 or np.ptp(x) <= FLAT_EPS


def _local_maxima(x):
    """Indices rising strictly from the left and not falling to the right."""
    i = np.arange(1, x.size - 1)
    return i[(x[i] > x[i - 1]) & (x[i] >= x[i + 1])]


def _regions(mask):
    """(start, stop) pairs of maximal True runs."""
    d = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    return np.flatnonzero(d == 1), np.flatnonzero(d == -1)


def _argmax_per_region(x, mask, min_width=1):
    starts, stops = _regions(mask)
    out = [s + int(np.argmax(x[s:e])) for s, e in zip(starts, stops) if e - s >= min_width]
    return np.array(out, dtype=np.int64)


def _refractory(peaks, x, gap):
    """Keep the tallest peak of any group closer than ``gap`` samples."""
    if peaks.size < 2 or gap <= 0:
        return peaks
    keep = []
    for p in peaks[np.argsort(-x[peaks], kind="stable")]:
        if all(abs(p - q) >= gap for q in keep):
            keep.append(p)
    return np.array(sorted(keep), dtype=np.int64)


def adaptive_threshold_detect(segment, fs=None, cfg=DEFAULT):
    """Local maxima above an amplitude-adaptive threshold.

    The threshold is the smoothed signal level plus a fraction of the smoothed
    local max-min spread, so it follows both baseline and amplitude changes.
    """
    x, fs = _unpack(segment, fs)
    if _is_flat(x):
        return _empty()
    w_env = _width(cfg.envelope_window_s, fs)
    w_ma = _width(cfg.smooth_window_s, fs)
    spread = maximum_filter1d(x, w_env, mode="nearest") - minimum_filter1d(x, w_env, mode="nearest")
    level = uniform_filter1d(x, w_ma, mode="nearest")
    threshold = level + cfg.amplitude_frac * uniform_filter1d(spread, w_ma, mode="nearest")
    cand = _local_maxima(x)
    cand = cand[x[cand] > threshold[cand]]
    return _refractory(cand, x, _width(cfg.refractory_s, fs))


def elgendi_detect(segment, fs=None, cfg=DEFAULT):
    """Two moving averages over the squared, clipped signal.

    Blocks where the short (systolic-width) average exceeds the long (beat-width)
    average plus ``beta * mean(power)`` are regions of interest; blocks at
    least one short window long yield their maximum.
    """
    x, fs = _unpack(segment, fs)
    if x.size < 3:
        return _empty()
    power = np.clip(x, 0.0, None) ** 2
    if power.max() <= FLAT_EPS:
        return _empty()
    w1 = _width(cfg.peak_window_s, fs)
    w2 = _width(cfg.beat_window_s, fs)
    ma_peak = uniform_filter1d(power, w1, mode="nearest")
    ma_beat = uniform_filter1d(power, w2, mode="nearest")
    blocks = ma_peak > ma_beat + cfg.beta * power.mean()
    return _argmax_per_region(x, blocks, min_width=w1)


def hilbert_detect(segment, fs=None, cfg=DEFAULT):
    """Peaks inside regions of high second-derivative envelope.

    The envelope of the second derivative (FFT Hilbert transform) is smoothed
    and compared with a fraction of its own slower moving average; within each concave
    region above it the tallest local maximum of the original signal is taken.
    """
    x, fs = _unpack(segment, fs)
    if _is_flat(x):
        return _empty()
    d2 = np.gradient(np.gradient(x))
    env = uniform_filter1d(envelope(d2), _width(cfg.hilbert_smooth_s, fs), mode="nearest")
    if env.max() <= FLAT_EPS:
        return _empty()
    # concave stretches with a strong curvature envelope; systolic tops are
    # concave, the feet between beats convex, so beats do not merge
    slow = uniform_filter1d(env, _width(cfg.hilbert_window_s, fs), mode="nearest")
    roi = (d2 < 0) & (env > cfg.hilbert_frac * slow)
    is_max = np.zeros(x.size, dtype=bool)
    is_max[_local_maxima(x)] = True
    peaks = []
    for s, e in zip(*_regions(roi)):
        local = np.flatnonzero(is_max[s:e]) + s
        if local.size:
            peaks.append(local[np.argmax(x[local])])
    return _refractory(np.array(peaks, dtype=np.int64), x, _width(cfg.refractory_s, fs))


def _heartpy_pass(x, rol_mean, elevation):
    threshold = rol_mean + rol_mean.mean() * elevation / 100.0
    return _argmax_per_region(x, x > threshold)


def heartpy_detect(segment, fs=None, cfg=DEFAULT):
    """Moving-average threshold with a variance-minimising elevation sweep.

    The signal is shifted to be nonnegative, a 0.75 s rolling mean is raised
    by each candidate percentage of its own mean, and the elevation whose
    peak-to-peak intervals vary least is kept.  Candidates need at least three
    peaks spanning half the record at a plausible rate (30-240 BPM).
    """
    x, fs = _unpack(segment, fs)
    if _is_flat(x):
        return _empty()
    x = x - x.min()
    rol_mean = uniform_filter1d(x, _width(cfg.ma_window_s, fs), mode="nearest")
    passes, fallback = [], _empty()
    for elevation in cfg.elevations:
        peaks = _heartpy_pass(x, rol_mean, elevation)
        if peaks.size > fallback.size:
            fallback = peaks
        if peaks.size < 3:
            continue
        span = peaks[-1] - peaks[0]
        bpm = 60.0 * fs * (peaks.size - 1) / span
        if span < 0.5 * x.size or not 30.0 <= bpm <= 240.0:
            continue
        passes.append((float(np.std(np.diff(peaks))), peaks))
    if not passes:
        return fallback
    # interval spreads within one sample of the best are a tie; the pass
    # keeping more beats wins so weak edge beats are not traded for variance
    floor = min(sd for sd, _ in passes) + HEARTPY_TIE_SAMPLES
    return max((p for p in passes if p[0] <= floor), key=lambda p: (p[1].size, -p[0]))[1]


DETECTORS = {
    "adaptive": adaptive_threshold_detect,
    "elgendi": elgendi_detect,
    "hilbert": hilbert_detect,
    "heartpy": heartpy_detect,
}


def run_detector(name, segment, fs=None, cfg=DEFAULT):
    try:
        fn = DETECTORS[name]
    except KeyError:
        raise ValueError(f"unknown detector {name!r}; choose from {sorted(DETECTORS)}") from None
    return fn(segment, fs, cfg)
