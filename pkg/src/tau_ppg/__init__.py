"""PPG systolic-peak detection with a temporal-attentive U-Net, classical
baselines, heart-rate / HRV evaluation and a synthetic signal generator."""

__version__ = "0.1.0"

from .hr import InsufficientPeaks, heart_rate, heart_rate_or_none
from .labeling import dt_labels, dt_labels_scaled, hard_labels, peak_search, rescale_peaks
from .signal import PpgSegment, bandpass, preprocess, resample, segment, snr, snr_db, zscore
from .tensor import GradTape, NonFiniteError, Tensor

__all__ = [
    "__version__", "InsufficientPeaks", "heart_rate", "heart_rate_or_none", "dt_labels",
    "dt_labels_scaled", "hard_labels", "peak_search", "rescale_peaks", "PpgSegment",
    "bandpass", "preprocess", "resample", "segment", "snr", "snr_db", "zscore",
    "GradTape", "NonFiniteError", "Tensor",
]
