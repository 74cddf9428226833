"""Parameter layout, initialisation and validation for :class:`TauConfig`."""

import numpy as np

from ..tensor import Tensor

ATTN_KEYS = ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")


class WeightsMismatch(ValueError):
    """Weights do not have the shapes the config demands."""


def conv_stack_plan(c_in, c_out, single):
    """(c_in, c_out, dilation) for a double conv (mid width max(in, out))."""
    if single:
        return [(c_in, c_out, 1)]
    mid = max(c_in, c_out)
    return [(c_in, mid, 1), (mid, c_out, 2)]


def upsample_plan(c_in, c_out, single):
    if single:
        return [(c_in, c_out, 1)]
    return [(c_in, c_out, 1), (c_out, c_out, 2)]


def _conv_shapes(prefix, plan, k):
    out = {}
    for j, (ci, co, _) in enumerate(plan):
        out[f"{prefix}.conv{j}.w"] = (co, ci, k)
        out[f"{prefix}.conv{j}.b"] = (co,)
    return out


def _attn_shapes(prefix, e):
    return {f"{prefix}.{key}": ((e, e) if key[0] == "w" else (e,)) for key in ATTN_KEYS}


def param_shapes(cfg):
    """Ordered mapping of parameter name -> shape."""
    k, single = cfg.kernel, cfg.lite
    shapes = {}
    c = cfg.in_channels
    for b, width in enumerate(cfg.encoder_widths):
        shapes.update(_conv_shapes(f"enc.{b}", conv_stack_plan(c, width, single), k))
        c = width
    ce = cfg.bottleneck_width
    shapes.update(_conv_shapes("enc.bottleneck", conv_stack_plan(c, ce, single), k))

    if cfg.time_module:
        e = cfg.embed_dim
        shapes["time.head_e.w"] = (1, ce)
        shapes["time.head_e.b"] = (1,)
        shapes["time.embed"] = (cfg.phase_vocab, e)
        shapes.update(_attn_shapes("time.attn", e))
        shapes["time.head_t.w"] = (1, e)
        shapes["time.head_t.b"] = (1,)
        shapes.update(_conv_shapes("time.conv", conv_stack_plan(e, ce, single), k))
        dec_in = 2 * ce
    else:
        dec_in = ce
    shapes.update(_conv_shapes("dec.input", conv_stack_plan(dec_in, ce, single), k))

    widths = cfg.encoder_widths
    for l, (ci, co) in enumerate(zip(cfg.decoder_in_channels, cfg.decoder_out_channels)):
        skip = widths[cfg.depth - 1 - l]
        if cfg.use_decoder_attention:
            shapes.update(_attn_shapes(f"dec.{l}.attn", ci))
        shapes.update(_conv_shapes(f"dec.{l}.up", upsample_plan(ci, ci, single), k))
        shapes.update(_conv_shapes(f"dec.{l}.conv", conv_stack_plan(ci + skip, co, single), k))
        shapes[f"dec.{l}.head.w"] = (1, co)
        shapes[f"dec.{l}.head.b"] = (1,)

    fw = cfg.first_width
    for l, co in enumerate(cfg.decoder_out_channels):
        shapes.update(_conv_shapes(f"pred.{l}.up", upsample_plan(co, fw, single), k))
    w1, w2 = cfg.output_widths
    plan = [(cfg.depth * fw, w1, 1), (w1, w2, 1), (w2, 1, 1)]
    shapes.update(_conv_shapes("pred.out", plan, k))
    return shapes


def count_parameters(cfg):
    return int(sum(np.prod(s) for s in param_shapes(cfg).values()))


def init_weights(cfg, seed=0):
    """He-normal convolutions, Xavier attention, N(0, 1) phase embeddings, zero biases."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b") or name.split(".")[-1] in ("bq", "bk", "bv", "bo"):
            arr = np.zeros(shape)
        elif name == "time.embed":
            arr = rng.standard_normal(shape)
        elif len(shape) == 3:
            arr = rng.standard_normal(shape) * np.sqrt(2.0 / (shape[1] * shape[2]))
        else:
            arr = rng.standard_normal(shape) * np.sqrt(1.0 / shape[-1])
        weights[name] = Tensor(arr, trainable=True)
    # positive start for every ReLU regression output so none begins dead
    for name in weights:
        if name == "pred.out.conv2.b" or (".head" in name and name.endswith(".b")):
            weights[name].data[:] = 1.0
    return weights


def validate_weights(cfg, weights):
    expected = param_shapes(cfg)
    missing = [n for n in expected if n not in weights]
    extra = [n for n in weights if n not in expected]
    bad = [f"{n}: expected {expected[n]}, got {tuple(weights[n].shape)}"
           for n in expected if n in weights and tuple(weights[n].shape) != expected[n]]
    if missing or extra or bad:
        parts = []
        if missing:
            parts.append(f"missing {missing[:5]}{'...' if len(missing) > 5 else ''}")
        if extra:
            parts.append(f"unexpected {extra[:5]}{'...' if len(extra) > 5 else ''}")
        if bad:
            parts.append("shape mismatch: " + "; ".join(bad[:5]))
        raise WeightsMismatch("weights do not match config: " + " | ".join(parts))
