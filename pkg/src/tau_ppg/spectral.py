"""Hann-windowed periodogram and FFT Hilbert transform."""

import numpy as np

__all__ = ["hann", "rfft_power", "analytic_signal", "envelope"]


def hann(n):
    """Periodic Hann window (DFT-even), so on-bin tones leak only into k+-1."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def rfft_power(x, fs):
    """One-sided Hann periodogram.

    Scaling: ``power[k] = c_k * |FFT(x * w)[k]|**2 / (N * sum(w**2))`` with
    ``c_k = 2`` except at DC (and Nyquist for even N), where it is 1.  By
    Parseval, ``power.sum() == sum((x*w)**2) / sum(w**2)``, i.e. the
    window-compensated mean square of ``x``.  Units are x**2 per bin, so band
    powers are plain sums over bins.

    Returns
    -------
    freqs, power : ndarray
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if x.ndim != 1 or n < 8:
        raise ValueError("rfft_power needs a 1-D signal of at least 8 samples")
    w = hann(n)
    spec = np.fft.rfft(x * w)
    power = np.abs(spec) ** 2 / (n * np.sum(w * w))
    power[1:] *= 2.0
    if n % 2 == 0:
        power[-1] /= 2.0
    return np.fft.rfftfreq(n, 1.0 / fs), power


def analytic_signal(x):
    """``x + i*H[x]`` via the one-sided FFT construction."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    h = np.zeros(n)
    if n == 0:
        return np.zeros(0, dtype=complex)
    h[0] = 1.0
    if n % 2 == 0:
        h[n // 2] = 1.0
        h[1:n // 2] = 2.0
    else:
        h[1:(n + 1) // 2] = 2.0
    return np.fft.ifft(np.fft.fft(x) * h)


def envelope(x):
    return np.abs(analytic_signal(x))
