"""Heart rate from a peak set."""

import numpy as np


class InsufficientPeaks(ValueError):
    """Fewer than two peaks: no interval, no heart rate."""


def heart_rate(peaks, fs):
    """``60 * fs * (len(peaks) - 1) / (last - first)`` in BPM."""
    p = np.asarray(peaks)
    if p.size < 2:
        raise InsufficientPeaks(f"need >= 2 peaks for a heart rate, got {p.size}")
    return 60.0 * fs * (p.size - 1) / float(p[-1] - p[0])


def heart_rate_or_none(peaks, fs):
    try:
        return heart_rate(peaks, fs)
    except InsufficientPeaks:
        return None
