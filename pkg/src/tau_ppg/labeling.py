"""Peak labels: distance transform, scaled distance transform, hard windows,
and the thresholded peak search that inverts them."""

import numpy as np

from . import kernels

__all__ = [
    "check_peaks", "dt_labels", "dt_labels_scaled", "hard_labels", "peak_search",
    "peak_search_hard", "rescale_peaks", "round_half_away",
]

DEFAULT_THRESHOLD = 7.5


def check_peaks(peaks, n=None):
    """Return ``peaks`` as a validated int64 array (strictly increasing, in range)."""
    p = np.asarray(peaks, dtype=np.int64).ravel()
    if p.size:
        if np.any(np.diff(p) <= 0):
            raise ValueError("peak indices must be strictly increasing")
        if p[0] < 0 or (n is not None and p[-1] >= n):
            raise ValueError(f"peak indices must lie in [0, {n})")
    return p


def round_half_away(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def dt_labels(peaks, n):
    """``y[i] = min_j |i - peaks[j]|`` for ``i`` in ``[0, n)``."""
    p = check_peaks(peaks, n)
    if p.size == 0:
        raise ValueError("distance transform needs at least one peak")
    return kernels.distance_transform(p, int(n))


def dt_labels_scaled(peaks_native, n, n_prime):
    """Distance labels of an ``n_prime``-sample view, on the ``n``-sample scale.

    ``y'[i] = round((n / n_prime) * min_j |i - P'_j|)`` with ties rounded
    away from zero.
    """
    if not n >= n_prime >= 1:
        raise ValueError("need n >= n_prime >= 1")
    return round_half_away((n / n_prime) * dt_labels(peaks_native, n_prime))


def hard_labels(peaks, n, radius):
    """1 within ``radius`` samples of any peak, 0 elsewhere."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    p = check_peaks(peaks, n)
    out = np.zeros(int(n))
    for q in p:
        out[max(0, q - radius):min(n, q + radius + 1)] = 1.0
    return out


def peak_search(labels, threshold=DEFAULT_THRESHOLD):
    """Argmin of every maximal run of labels below ``threshold``.

    Ties resolve to the earliest index; runs touching either edge count.
    """
    y = np.ascontiguousarray(labels, dtype=np.float64)
    if not np.isfinite(y).all():
        raise ValueError("labels must be finite")
    return kernels.runs_below_argmin(y, float(threshold))


def peak_search_hard(scores, threshold=0.5):
    """Peak search for hard-label predictions: argmax of runs above ``threshold``."""
    return peak_search(-np.asarray(scores, dtype=np.float64), -threshold)


def rescale_peaks(peaks, n, n_prime):
    """Map full-resolution peak indices onto an ``n_prime``-sample grid.

    Index ``i`` of the coarse grid is centred at ``(i + 0.5) * n / n_prime - 0.5``
    (the convention of the linear resampler); collisions are merged.
    """
    p = check_peaks(peaks, n)
    q = np.floor((p + 0.5) * (n_prime / n)).astype(np.int64)
    return np.unique(np.clip(q, 0, n_prime - 1))
