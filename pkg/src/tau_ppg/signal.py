"""PPG preprocessing: resampling, band-pass filtering, normalisation,
windowing and the heart-rate-band SNR."""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal as sps

from .spectral import rfft_power

__all__ = [
    "PpgSegment", "resample", "bandpass", "zscore", "segment", "preprocess",
    "snr", "snr_db", "PASSBAND", "TARGET_FS",
]

PASSBAND = (0.6, 8.0)
TARGET_FS = 100.0
FILTER_ORDER = 4
SNR_CLAMP_DB = 50.0
SNR_HALF_BAND_HZ = 2.5 / 60.0  # +-2.5 BPM


@dataclass
class PpgSegment:
    samples: np.ndarray
    fs: float
    subject_id: str = ""
    truth_peaks: np.ndarray = None
    ref_hr: float = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("samples must be 1-D")
        if not np.isfinite(self.samples).all():
            raise ValueError("samples contain NaN or Inf")
        if self.truth_peaks is not None:
            p = np.asarray(self.truth_peaks, dtype=np.int64)
            if p.size and (np.any(np.diff(p) <= 0) or p[0] < 0 or p[-1] >= self.samples.size):
                raise ValueError("truth peaks must be strictly increasing and inside the segment")
            self.truth_peaks = p

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.fs

    def with_samples(self, samples):
        return replace(self, samples=samples)


def _filtfilt(sos, x):
    padlen = min(3 * (2 * len(sos) + 1), x.size - 1)
    return sps.sosfiltfilt(sos, x, padlen=max(padlen, 0))


def resample(samples, fs_in, fs_out):
    """Linear-interpolation resampler.

    Output sample ``j`` sits at time ``j / fs_out``; positions beyond the last
    input sample are clamped to it.  When ``fs_out < fs_in / 2`` a zero-phase
    4th-order Butterworth low-pass at ``0.45 * fs_out`` is applied first.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot resample an empty signal")
    if fs_in <= 0 or fs_out <= 0:
        raise ValueError("sampling rates must be positive")
    if fs_in == fs_out:
        return x.copy()
    if fs_out < fs_in / 2 and x.size > 1:
        sos = sps.butter(FILTER_ORDER, 0.45 * fs_out, btype="lowpass", fs=fs_in, output="sos")
        x = _filtfilt(sos, x)
    n_out = int(round(x.size * fs_out / fs_in))
    src = np.minimum(np.arange(n_out) * (fs_in / fs_out), x.size - 1)
    return np.interp(src, np.arange(x.size), x)


def design_bandpass(fs, band=PASSBAND, order=FILTER_ORDER):
    """Butterworth band-pass as second-order sections.

    scipy's digital design maps the analog prototype through the bilinear
    transform with pre-warped band edges.
    """
    if fs <= 2 * band[1]:
        raise ValueError(f"fs={fs} Hz leaves the {band[1]} Hz band edge above Nyquist")
    return sps.butter(order, band, btype="bandpass", fs=fs, output="sos")


def bandpass(samples, fs):
    """Zero-phase (forward-backward) 0.6-8 Hz Butterworth band-pass."""
    x = np.asarray(samples, dtype=np.float64)
    return _filtfilt(design_bandpass(fs), x)


def zscore(samples):
    x = np.asarray(samples, dtype=np.float64)
    sd = x.std()
    if not sd > 1e-12:
        raise ValueError("cannot z-score a (near-)constant signal")
    return (x - x.mean()) / sd


def segment(samples, fs, window_s, overlap_s, subject_id="", truth_peaks=None, ref_hr=None):
    """Cut a recording into fixed windows; the incomplete tail is discarded.

    Truth peaks, when given, are re-expressed relative to each window.
    """
    x = np.asarray(samples, dtype=np.float64)
    if not 0 <= overlap_s < window_s:
        raise ValueError("need 0 <= overlap < window")
    win = int(round(window_s * fs))
    stride = int(round((window_s - overlap_s) * fs))
    if x.size < win:
        raise ValueError(f"signal of {x.size} samples is shorter than one {win}-sample window")
    peaks = None if truth_peaks is None else np.asarray(truth_peaks, dtype=np.int64)
    out = []
    for k, start in enumerate(range(0, x.size - win + 1, stride)):
        p = None
        if peaks is not None:
            p = peaks[(peaks >= start) & (peaks < start + win)] - start
        out.append(PpgSegment(x[start:start + win].copy(), fs, subject_id, p, ref_hr,
                              meta={"start": start, "index": k}))
    return out


def preprocess(samples, fs, target_fs=TARGET_FS):
    """Resample to ``target_fs``, band-pass, then z-score."""
    x = resample(samples, fs, target_fs)
    return zscore(bandpass(x, target_fs))


def snr_db(samples, fs, true_hr):
    """Heart-rate-band SNR in dB, clamped to +-50.

    Signal power is the periodogram power within +-2.5 BPM of ``true_hr``;
    noise is the remaining power inside the 0.6-8 Hz analysis band.  A
    Hann window smears a tone over +-2 bins, so on windows shorter than 48 s
    the signal band is widened to that main lobe (+-2*fs/N Hz); otherwise a
    pure tone would leak half its power into the noise term.
    """
    if not 30 <= true_hr <= 240:
        raise ValueError(f"true HR {true_hr} BPM outside [30, 240]")
    x = np.asarray(samples, dtype=np.float64)
    freqs, power = rfft_power(x, fs)
    f0 = true_hr / 60.0
    half = max(SNR_HALF_BAND_HZ, 2.0 * fs / x.size)
    tol = 1e-9 * fs
    in_sig = np.abs(freqs - f0) <= half + tol
    in_band = (freqs >= PASSBAND[0] - tol) & (freqs <= PASSBAND[1] + tol)
    p_sig = power[in_sig].sum()
    p_noise = power[in_band & ~in_sig].sum()
    if p_sig <= 0 and p_noise <= 0:
        return -SNR_CLAMP_DB
    if p_noise <= 0:
        return SNR_CLAMP_DB
    if p_sig <= 0:
        return -SNR_CLAMP_DB
    return float(np.clip(10.0 * np.log10(p_sig / p_noise), -SNR_CLAMP_DB, SNR_CLAMP_DB))


def snr(segment, true_hr=None):
    """SNR of a :class:`PpgSegment`; ``true_hr`` defaults to its reference HR."""
    hr = segment.ref_hr if true_hr is None else true_hr
    if hr is None:
        raise ValueError("no heart rate given and segment has no ref_hr")
    return snr_db(segment.samples, segment.fs, hr)
