"""The temporal-attentive U-Net and its lite / ablation configurations."""

import numpy as np

from ..hr import heart_rate_or_none
from ..labeling import peak_search, peak_search_hard
from .config import PRESETS, TAU, TAU_LITE, TAU_SMALL, TauConfig, from_preset, variant
from .network import (ForwardResult, TimeModuleTrace, aux_head, decoder_forward,
                      encoder_forward, forward, phase, predict, time_module)
from .params import WeightsMismatch, count_parameters, init_weights, param_shapes, validate_weights
from .train import AdamWState, fit, segment_loss, target_at, train_step

__all__ = [
    "TauConfig", "TAU", "TAU_LITE", "TAU_SMALL", "PRESETS", "from_preset", "variant",
    "ForwardResult", "TimeModuleTrace", "aux_head", "decoder_forward", "encoder_forward",
    "forward", "phase", "predict", "time_module", "WeightsMismatch", "count_parameters",
    "init_weights", "param_shapes", "validate_weights", "AdamWState", "fit",
    "segment_loss", "target_at", "train_step", "predict_labels", "detect",
]


def predict_labels(samples, cfg, weights):
    """Main label prediction (no tape) for a preprocessed 1-D segment."""
    x = np.asarray(samples, dtype=np.float64)[None, :]
    return forward(x, cfg, weights).y.data


def detect(segment, cfg, weights):
    """Peaks and heart rate of a preprocessed :class:`PpgSegment`.

    ``hr`` is ``None`` ("insufficient peaks") when fewer than two peaks are found.
    """
    y = predict_labels(segment.samples, cfg, weights)
    peaks = peak_search_hard(y) if cfg.hard_labels else peak_search(y, cfg.threshold)
    return peaks, heart_rate_or_none(peaks, segment.fs)
