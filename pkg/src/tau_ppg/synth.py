"""Seeded synthetic PPG with ground-truth peaks and a target SNR."""

from dataclasses import dataclass

import numpy as np

from .hr import heart_rate
from .signal import PASSBAND, SNR_HALF_BAND_HZ, PpgSegment, snr_db

__all__ = ["SynthSpec", "generate", "generate_suite", "TIER_SNR_DB", "MAX_BPM_STEP"]

# consecutive beats may not differ by this many BPM or more
MAX_BPM_STEP = 10.0
TIER_SNR_DB = {"clean": 3.0, "mid": -7.0, "noisy": -12.7}
SUITE_HR_RANGE = (45.0, 180.0)

# beat morphology, as fractions of the beat period
SYSTOLIC_WIDTH = 0.15
DIASTOLIC_DELAY = 0.35
DIASTOLIC_WIDTH = 0.18
DIASTOLIC_AMP = 0.3
WANDER_HZ = 0.2
HR_BAND_NOISE_GAIN = 0.1


@dataclass(frozen=True)
class SynthSpec:
    hr_bpm: float = 60.0
    duration_s: float = 10.0
    fs: float = 100.0
    hrv_jitter_ms: float = 20.0
    snr_target_db: float = None      # None -> clean, no noise
    seed: int = 0
    subject_id: str = "synth"

    def __post_init__(self):
        if not 30 <= self.hr_bpm <= 220:
            raise ValueError("hr_bpm must lie in [30, 220]")
        if self.duration_s <= 0 or self.fs <= 0 or self.hrv_jitter_ms < 0:
            raise ValueError("duration, fs must be positive and jitter nonnegative")


def _beat_times(spec, rng):
    """Beat onsets covering the record plus a margin on both sides."""
    base = 60.0 / spec.hr_bpm
    sd = spec.hrv_jitter_ms / 1000.0
    t = -2.0 * base + rng.uniform(0.0, base)
    times, prev = [], base
    while t < spec.duration_s + 2.0 * base:
        times.append(t)
        iv = base + sd * rng.standard_normal()
        # temporal-consistency cap on the instantaneous rate change
        bpm_prev = 60.0 / prev
        bpm = np.clip(60.0 / max(iv, 1e-3), bpm_prev - 0.9 * MAX_BPM_STEP, bpm_prev + 0.9 * MAX_BPM_STEP)
        iv = 60.0 / bpm
        t += iv
        prev = iv
    return np.array(times)


def _render(spec, beats):
    n = int(round(spec.duration_s * spec.fs))
    t = np.arange(n) / spec.fs
    x = np.zeros(n)
    ivs = np.diff(beats, append=beats[-1] + (beats[-1] - beats[-2]))
    for tb, period in zip(beats, ivs):
        ss = SYSTOLIC_WIDTH * period
        sd = DIASTOLIC_WIDTH * period
        x += np.exp(-0.5 * ((t - tb) / ss) ** 2)
        x += DIASTOLIC_AMP * np.exp(-0.5 * ((t - tb - DIASTOLIC_DELAY * period) / sd) ** 2)
    return x, ivs


def _systolic_peaks(x, beats, ivs, fs):
    n = x.size
    peaks = []
    for tb, period in zip(beats, ivs):
        c = int(round(tb * fs))
        if c < 0 or c >= n:
            continue
        half = max(1, int(0.25 * period * fs))
        lo, hi = max(0, c - half), min(n, c + half + 1)
        p = lo + int(np.argmax(x[lo:hi]))
        # a maximum on the record edge is only a peak if it is interior to the window
        if 0 < p < n - 1 and x[p] >= x[p - 1] and x[p] >= x[p + 1]:
            peaks.append(p)
    return np.unique(np.array(peaks, dtype=np.int64))


def _pink_band_noise(n, fs, rng, hr_hz):
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    band = (freqs >= PASSBAND[0]) & (freqs <= PASSBAND[1])
    amp = np.zeros_like(freqs)
    amp[band] = freqs[band] ** -0.25
    # artifacts rarely sit on the pulse rate; without this dip the in-band share
    # of the noise alone caps the reachable SNR near -6 dB at low heart rates
    half = max(SNR_HALF_BAND_HZ, 2.0 * fs / n)
    amp[np.abs(freqs - hr_hz) <= half + 1e-9] *= HR_BAND_NOISE_GAIN
    spec = amp * (rng.standard_normal(freqs.size) + 1j * rng.standard_normal(freqs.size))
    noise = np.fft.irfft(spec, n)
    return noise / noise.std()


def generate(spec):
    """Render one segment; deterministic given ``spec.seed``.

    Noise (band-limited pink noise plus a slow baseline wander) is scaled by
    bisection until the measured SNR is within 0.05 dB of the target.
    """
    rng = np.random.default_rng(spec.seed)
    beats = _beat_times(spec, rng)
    clean, ivs = _render(spec, beats)
    peaks = _systolic_peaks(clean, beats, ivs, spec.fs)
    if peaks.size < 2:
        raise ValueError("record too short to hold two beats")
    ref_hr = heart_rate(peaks, spec.fs)
    meta = {"hr_bpm": spec.hr_bpm, "seed": spec.seed, "snr_target_db": spec.snr_target_db}
    if spec.snr_target_db is None:
        return PpgSegment(clean, spec.fs, spec.subject_id, peaks, ref_hr, meta=meta)

    target = float(spec.snr_target_db)
    if target >= 50.0:
        raise ValueError(f"SNR target {target} dB is unreachable once noise is added")
    intrinsic = snr_db(clean, spec.fs, ref_hr)
    if target >= intrinsic - 0.05:
        raise ValueError(f"SNR target {target} dB is not below the clean signal's {intrinsic:.2f} dB")
    n = clean.size
    t = np.arange(n) / spec.fs
    noise = _pink_band_noise(n, spec.fs, rng, ref_hr / 60.0)
    noise += 0.5 * np.sin(2 * np.pi * WANDER_HZ * t + rng.uniform(0, 2 * np.pi))

    def measured(scale):
        return snr_db(clean + scale * noise, spec.fs, ref_hr)

    lo, hi = 0.0, 1.0
    while measured(hi) > target:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError(f"SNR target {target} dB unreachable")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if measured(mid) > target:
            lo = mid
        else:
            hi = mid
        if abs(measured(hi) - target) < 0.05:
            break
    scale = hi
    meta["noise_scale"] = scale
    return PpgSegment(clean + scale * noise, spec.fs, spec.subject_id, peaks, ref_hr, meta=meta)


def generate_suite(tier, count, seed, duration_s=10.0, fs=100.0, jitter_ms=20.0):
    """``count`` segments at the tier's SNR target with HR ~ U[45, 180] BPM."""
    if tier not in TIER_SNR_DB:
        raise ValueError(f"unknown tier {tier!r}; choose from {sorted(TIER_SNR_DB)}")
    if count <= 0:
        return []
    tier_id = sorted(TIER_SNR_DB).index(tier)
    children = np.random.SeedSequence([int(seed), tier_id]).spawn(count)
    out = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        hr = float(rng.uniform(*SUITE_HR_RANGE))
        seg_seed = int(rng.integers(0, 2 ** 31 - 1))
        spec = SynthSpec(hr_bpm=hr, duration_s=duration_s, fs=fs, hrv_jitter_ms=jitter_ms,
                         snr_target_db=TIER_SNR_DB[tier], seed=seg_seed,
                         subject_id=f"{tier}-{seed}-{i:04d}")
        seg = generate(spec)
        seg.meta["tier"] = tier
        out.append(seg)
    return out
