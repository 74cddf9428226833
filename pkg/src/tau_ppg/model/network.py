"""Forward pass: encoder, time module, attentive decoder, prediction head."""

from dataclasses import dataclass, field

import numpy as np

from .. import kernels, ops
from ..labeling import peak_search
from ..tensor import Tensor
from .params import ATTN_KEYS, conv_stack_plan, upsample_plan


@dataclass
class TimeModuleTrace:
    peaks: np.ndarray                 # encoder-scale indices
    alpha: np.ndarray = None          # peak-to-peak distances, full-resolution units
    m_alpha: float = None
    eta: np.ndarray = None            # (n', k) sample-to-peak distances, full-resolution
    phase_alpha: np.ndarray = None
    phase_eta: np.ndarray = None
    bucket_alpha: np.ndarray = None
    bucket_eta: np.ndarray = None
    y_e: np.ndarray = None
    y_t: np.ndarray = None
    degenerate: bool = False


@dataclass
class ForwardResult:
    y: Tensor                          # (N,) main distance prediction
    deep: list                         # per decoder block (len_l,) predictions
    y_e: Tensor = None                 # encoder-scale auxiliary prediction
    y_t: Tensor = None                 # time-module auxiliary prediction
    trace: TimeModuleTrace = None
    block_lengths: list = field(default_factory=list)


# -- building blocks --------------------------------------------------------

def conv_stack(x, weights, prefix, plan):
    for j, (_, _, dil) in enumerate(plan):
        x = ops.relu(ops.conv1d(x, weights[f"{prefix}.conv{j}.w"], weights[f"{prefix}.conv{j}.b"], dil))
    return x


def double_conv(x, weights, prefix, c_out, cfg):
    return conv_stack(x, weights, prefix, conv_stack_plan(x.shape[0], c_out, cfg.lite))


def aux_head(x, w, b):
    """``ReLU(W x + b)`` over positions: (C, M) -> (M,)."""
    y = ops.relu(ops.add(ops.matmul(w, x), b))
    return ops.reshape(y, (x.shape[1],))


def attn_params(weights, prefix):
    return {key: weights[f"{prefix}.{key}"] for key in ATTN_KEYS}


def phase(eta, m_alpha):
    """Residual distance to the nearest whole number of cycles.

    Returns ``(r, phi)`` with ``r = eta mod m_alpha`` and
    ``phi = min(m_alpha - r, r)`` in ``[0, m_alpha / 2]``.
    """
    if not m_alpha > 0:
        raise ValueError("median cycle length must be positive")
    eta = np.asarray(eta, dtype=np.float64)
    r = np.mod(eta, m_alpha)
    return r, np.minimum(m_alpha - r, r)


def positional_encoding(positions, dim):
    pos = np.asarray(positions, dtype=np.float64)[..., None]
    i = np.arange(dim)
    rates = 1.0 / 10000.0 ** ((i - i % 2) / dim)
    ang = pos * rates
    return np.where(i % 2 == 0, np.sin(ang), np.cos(ang))


# -- modules ----------------------------------------------------------------

def encoder_forward(x, cfg, weights):
    """Returns the bottleneck embedding and the pre-pool features of each block."""
    x = ops.as_tensor(x)
    if x.data.ndim == 1:
        x = ops.reshape(x, (1, x.shape[0]))
    if x.shape[0] != cfg.in_channels:
        raise ValueError(f"expected {cfg.in_channels} input channels, got {x.shape[0]}")
    if x.shape[1] < cfg.min_length:
        raise ValueError(f"segment of {x.shape[1]} samples is shorter than 2**depth = {cfg.min_length}")
    skips = []
    for b, width in enumerate(cfg.encoder_widths):
        x = double_conv(x, weights, f"enc.{b}", width, cfg)
        skips.append(x)
        x = ops.maxpool1d(x)
    x_e = double_conv(x, weights, "enc.bottleneck", cfg.bottleneck_width, cfg)
    return x_e, skips


def time_module(x_e, cfg, weights, full_n):
    """Temporal embeddings from the encoder's own peak estimate.

    Returns ``(x_t, y_e, y_t, trace)``; ``x_t`` has the shape of ``x_e``.
    """
    c_e, n_enc = x_e.shape
    factor = full_n / n_enc
    y_e = aux_head(x_e, weights["time.head_e.w"], weights["time.head_e.b"])
    peaks = peak_search(y_e.data, cfg.threshold)
    trace = TimeModuleTrace(peaks=peaks, y_e=y_e.data)
    if len(peaks) < 2:
        trace.degenerate = True
        trace.y_t = y_e.data
        return Tensor(np.zeros((c_e, n_enc))), y_e, y_e, trace

    e, k = cfg.embed_dim, cfg.k_closest
    alpha = np.diff(peaks) * factor
    m_alpha = float(np.median(alpha))
    eta_enc, which = kernels.nearest_k_peaks(n_enc, peaks, k)
    eta = eta_enc * factor
    _, phi_alpha = phase(alpha, m_alpha)
    _, phi_eta = phase(eta, m_alpha)
    top = cfg.phase_vocab - 1
    b_alpha = np.clip(np.floor(phi_alpha), 0, top).astype(np.int64)
    b_eta = np.clip(np.floor(phi_eta), 0, top).astype(np.int64)

    table = weights["time.embed"]
    # each alpha entry is anchored at the earlier peak of its pair
    t_alpha = ops.add(ops.gather_rows(table, b_alpha), positional_encoding(peaks[:-1], e))
    t_i = ops.add(ops.gather_rows(table, b_eta.ravel()),
                  positional_encoding(peaks[which.ravel()], e))
    o = ops.multi_head_attention(t_i, t_alpha, t_alpha, cfg.heads, attn_params(weights, "time.attn"))
    u = ops.mean(ops.reshape(ops.add(o, t_i), (n_enc, k, e)), axis=1)
    u = ops.transpose(u)                                        # (E, n')
    y_t = aux_head(u, weights["time.head_t.w"], weights["time.head_t.b"])
    x_t = double_conv(u, weights, "time.conv", c_e, cfg)

    trace.alpha, trace.m_alpha, trace.eta = alpha, m_alpha, eta
    trace.phase_alpha, trace.phase_eta = phi_alpha, phi_eta
    trace.bucket_alpha, trace.bucket_eta = b_alpha, b_eta
    trace.y_t = y_t.data
    return x_t, y_e, y_t, trace


def self_attention(x, cfg, weights, prefix):
    """Residual multi-head attention across positions of a (C, N) map."""
    tokens = ops.transpose(x)
    out = ops.multi_head_attention(tokens, tokens, tokens, cfg.heads, attn_params(weights, prefix))
    return ops.add(x, ops.transpose(out))


def decoder_forward(x_e, x_t, skips, cfg, weights):
    """Returns the last block's features and every block's output."""
    h = ops.concat([x_e, x_t]) if cfg.time_module else x_e
    h = double_conv(h, weights, "dec.input", cfg.bottleneck_width, cfg)
    outputs = []
    for l, c_out in enumerate(cfg.decoder_out_channels):
        if cfg.use_decoder_attention:
            h = self_attention(h, cfg, weights, f"dec.{l}.attn")
        c = h.shape[0]
        h = conv_stack(h, weights, f"dec.{l}.up", upsample_plan(c, c, cfg.lite))
        h = ops.upsample_linear2x(h)
        skip = ops.fit_length(skips[cfg.depth - 1 - l], h.shape[1])
        if skip.shape[1] != h.shape[1]:
            raise RuntimeError("skip connection length mismatch")
        h = ops.concat([h, skip])
        h = double_conv(h, weights, f"dec.{l}.conv", c_out, cfg)
        outputs.append(h)
    return h, outputs


def predict(outputs, cfg, weights, n):
    """Main prediction (length ``n``) and one deep-supervision head per block."""
    deep = [aux_head(o, weights[f"dec.{l}.head.w"], weights[f"dec.{l}.head.b"])
            for l, o in enumerate(outputs)]
    ups = []
    fw = cfg.first_width
    for l, o in enumerate(outputs):
        u = conv_stack(o, weights, f"pred.{l}.up", upsample_plan(o.shape[0], fw, cfg.lite))
        ups.append(ops.resize_linear(u, n))
    h = ops.concat(ups)
    h = ops.relu(ops.conv1d(h, weights["pred.out.conv0.w"], weights["pred.out.conv0.b"]))
    h = ops.relu(ops.conv1d(h, weights["pred.out.conv1.w"], weights["pred.out.conv1.b"]))
    y = ops.relu(ops.conv1d(h, weights["pred.out.conv2.w"], weights["pred.out.conv2.b"]))
    return ops.reshape(y, (n,)), deep


def forward(x, cfg, weights):
    x = ops.as_tensor(x)
    n = x.shape[-1]
    x_e, skips = encoder_forward(x, cfg, weights)
    if cfg.time_module:
        x_t, y_e, y_t, trace = time_module(x_e, cfg, weights, n)
    else:
        x_t = y_e = y_t = trace = None
    _, outputs = decoder_forward(x_e, x_t, skips, cfg, weights)
    y, deep = predict(outputs, cfg, weights, n)
    return ForwardResult(y=y, deep=deep, y_e=y_e, y_t=y_t, trace=trace,
                         block_lengths=[o.shape[1] for o in outputs])
