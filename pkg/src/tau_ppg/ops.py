"""Differentiable primitives.

Each op computes its output eagerly with numpy and, when a :class:`GradTape`
is active and some input needs a gradient, records a vector-Jacobian
closure on the tape.  Shapes follow the channels-first convention: 1-D
signals are ``(C, N)``.
"""

from functools import lru_cache

import numpy as np

from . import kernels
from .tensor import NonFiniteError, Tensor, current_tape

__all__ = [
    "as_tensor", "add", "sub", "mul", "scale", "matmul", "transpose", "reshape",
    "relu", "conv1d", "maxpool1d", "resize_linear", "upsample_linear2x",
    "fit_length", "concat", "softmax", "mean", "total", "gather_rows",
    "linear", "multi_head_attention", "smooth_l1", "weighted_sum",
]


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(data, parents, vjp):
    if not np.isfinite(data).all():
        raise NonFiniteError("operation produced NaN or Inf")
    out = Tensor.__new__(Tensor)
    data = np.asarray(data, dtype=np.float64)
    out.data = data if data.flags.c_contiguous else data.copy()
    out.grad = None
    out.trainable = False
    out._tape = None
    tape = current_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        tape.record(out, parents, vjp)
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise ------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _emit(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _emit(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a, c):
    c = float(c)
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def relu(x):
    mask = x.data > 0
    return _emit(x.data * mask, (x,), lambda g: (g * mask,))


# -- shape ------------------------------------------------------------------

def reshape(x, shape):
    old = x.shape
    return _emit(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes=None):
    axes = tuple(reversed(range(x.data.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _emit(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _emit(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def fit_length(x, n):
    """Symmetric center crop or zero pad of the last axis to length ``n``."""
    m = x.shape[-1]
    if m == n:
        return x
    if m > n:
        lo = (m - n) // 2

        def vjp(g):
            gx = np.zeros(x.shape)
            gx[..., lo:lo + n] = g
            return (gx,)

        return _emit(x.data[..., lo:lo + n], (x,), vjp)
    lo = (n - m) // 2
    out = np.zeros(x.shape[:-1] + (n,))
    out[..., lo:lo + m] = x.data
    return _emit(out, (x,), lambda g: (g[..., lo:lo + m],))


# -- reductions -------------------------------------------------------------

def mean(x, axis=None):
    if axis is None:
        size = x.size
        return _emit(np.array(x.data.mean()), (x,), lambda g: (np.full(x.shape, g / size),))
    size = x.shape[axis]
    return _emit(x.data.mean(axis=axis), (x,),
                 lambda g: (np.broadcast_to(np.expand_dims(g, axis) / size, x.shape).copy(),))


def total(x):
    return _emit(np.array(x.data.sum()), (x,), lambda g: (np.full(x.shape, float(g)),))


def weighted_sum(scalars, weights):
    scalars = list(scalars)
    weights = [float(w) for w in weights]
    value = sum(w * float(s.data) for s, w in zip(scalars, weights))
    return _emit(np.array(value), tuple(scalars),
                 lambda g: tuple(np.array(g * w) for w in weights))


# -- linear algebra ---------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return _emit(a.data @ b.data, (a, b), vjp)


def linear(x, w, b):
    """``x @ w + b`` for ``x`` of shape (M, In), ``w`` (In, Out), ``b`` (Out,)."""
    return add(matmul(x, w), b)


def softmax(x, axis=-1):
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _emit(s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def gather_rows(table, idx):
    idx = np.asarray(idx, dtype=np.int64)

    def vjp(g):
        gt = np.zeros(table.shape)
        np.add.at(gt, idx, g)
        return (gt,)

    return _emit(table.data[idx], (table,), vjp)


# -- 1-D neural ops ---------------------------------------------------------

def conv1d(x, w, b, dilation=1):
    """Dilated "same" convolution: (C_in, N) * (C_out, C_in, K) -> (C_out, N)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 3 or b.data.ndim != 1:
        raise ValueError("conv1d expects x (C_in, N), w (C_out, C_in, K), b (C_out,)")
    c_out, c_in, k = w.shape
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    if x.shape[0] != c_in or b.shape[0] != c_out:
        raise ValueError(f"shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    if dilation < 1:
        raise ValueError("dilation must be a positive integer")
    dilation = int(dilation)
    out = kernels.conv1d_forward(x.data, w.data, b.data, dilation)
    return _emit(out, (x, w, b),
                 lambda g: kernels.conv1d_backward(x.data, w.data, np.ascontiguousarray(g), dilation))


def maxpool1d(x):
    """Pool size 2, stride 2; an odd trailing sample is dropped."""
    c, n = x.shape
    if n < 2:
        raise ValueError("maxpool1d needs at least 2 samples")
    m = n // 2
    pairs = x.data[:, :2 * m].reshape(c, m, 2)
    arg = pairs.argmax(axis=2)
    out = np.take_along_axis(pairs, arg[..., None], axis=2)[..., 0]

    def vjp(g):
        gp = np.zeros((c, m, 2))
        np.put_along_axis(gp, arg[..., None], g[..., None], axis=2)
        gx = np.zeros((c, n))
        gx[:, :2 * m] = gp.reshape(c, 2 * m)
        return (gx,)

    return _emit(out, (x,), vjp)


@lru_cache(maxsize=64)
def _interp_matrix(n_in, n_out):
    # half-sample centred: source position (j + 0.5) * n_in / n_out - 0.5
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    r = np.zeros((n_in, n_out))
    cols = np.arange(n_out)
    np.add.at(r, (i0, cols), 1.0 - frac)
    np.add.at(r, (i1, cols), frac)
    r.setflags(write=False)
    return r


def resize_linear(x, n_out):
    """Linear interpolation of the last axis to ``n_out`` samples."""
    n_in = x.shape[-1]
    if n_in < 1:
        raise ValueError("cannot resize an empty signal")
    if n_in == n_out:
        return x
    r = _interp_matrix(n_in, int(n_out))
    return _emit(x.data @ r, (x,), lambda g: (g @ r.T,))


def upsample_linear2x(x):
    return resize_linear(x, 2 * x.shape[-1])


# -- attention --------------------------------------------------------------

def _split_heads(t, heads):
    m, e = t.shape
    return transpose(reshape(t, (m, heads, e // heads)), (1, 0, 2))


def multi_head_attention(query, key, value, heads, params, return_weights=False):
    """Scaled dot-product attention with learned projections.

    ``params`` maps ``wq, bq, wk, bk, wv, bv, wo, bo`` to tensors with
    ``w*`` of shape (E, E) and ``b*`` of shape (E,).  Returns (M, E), plus
    the (heads, M, P) attention weights when ``return_weights``.
    """
    m, e = query.shape
    if e % heads:
        raise ValueError(f"embedding size {e} not divisible by {heads} heads")
    if key.shape[0] == 0:
        raise ValueError("attention needs at least one key")
    d = e // heads
    q = _split_heads(linear(query, params["wq"], params["bq"]), heads)
    k = transpose(_split_heads(linear(key, params["wk"], params["bk"]), heads), (0, 2, 1))
    v = _split_heads(linear(value, params["wv"], params["bv"]), heads)
    attn = softmax(scale(matmul(q, k), 1.0 / np.sqrt(d)), axis=-1)
    o = reshape(transpose(matmul(attn, v), (1, 0, 2)), (m, e))
    out = linear(o, params["wo"], params["bo"])
    return (out, attn.data) if return_weights else out


# -- loss -------------------------------------------------------------------

def smooth_l1(pred, target):
    """Mean Huber-style loss with unit transition point."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    d = pred.data - target.data
    ad = np.abs(d)
    small = ad < 1.0
    value = np.where(small, 0.5 * d * d, ad - 0.5).mean()
    size = d.size

    def vjp(g):
        gd = np.where(small, d, np.sign(d)) * (float(g) / size)
        return gd, -gd

    return _emit(np.array(value), (pred, target), vjp)
