"""Hot inner loops, each in two flavours.

Every kernel has a ``*_numpy`` reference and a ``*_numba`` twin compiled with
``@njit``.  The un-suffixed name is bound at import time according to
:data:`tau_ppg._accel.USE_NUMBA`; tests check that both flavours agree and
``benchmarks/bench_kernels.py`` times them against each other.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "conv1d_forward",
    "conv1d_backward",
    "distance_transform",
    "runs_below_argmin",
    "nearest_k_peaks",
    "greedy_match",
]


# --------------------------------------------------------------------------
# conv1d, "same" zero padding, odd kernel, arbitrary dilation
# --------------------------------------------------------------------------

def _im2col(x, k, dilation):
    c_in, n = x.shape
    pad = dilation * (k - 1) // 2
    xp = np.zeros((c_in, n + 2 * pad))
    xp[:, pad:pad + n] = x
    # (c_in, k, n) view -> contiguous (c_in*k, n)
    cols = np.empty((c_in, k, n))
    for j in range(k):
        cols[:, j, :] = xp[:, j * dilation:j * dilation + n]
    return cols.reshape(c_in * k, n)


def conv1d_forward_numpy(x, w, b, dilation):
    c_out, c_in, k = w.shape
    cols = _im2col(x, k, dilation)
    return w.reshape(c_out, c_in * k) @ cols + b[:, None]


def conv1d_backward_numpy(x, w, g, dilation):
    c_out, c_in, k = w.shape
    n = x.shape[1]
    pad = dilation * (k - 1) // 2
    cols = _im2col(x, k, dilation)
    gw = (g @ cols.T).reshape(c_out, c_in, k)
    gb = g.sum(axis=1)
    gcols = (w.reshape(c_out, c_in * k).T @ g).reshape(c_in, k, n)
    gxp = np.zeros((c_in, n + 2 * pad))
    for j in range(k):
        gxp[:, j * dilation:j * dilation + n] += gcols[:, j, :]
    return gxp[:, pad:pad + n], gw, gb


@njit
def _im2col_numba(x, k, dilation):
    c_in, n = x.shape
    pad = dilation * (k - 1) // 2
    cols = np.zeros((c_in * k, n))
    for i in range(c_in):
        for j in range(k):
            shift = j * dilation - pad
            lo = max(0, -shift)
            hi = min(n, n - shift)
            row = i * k + j
            for t in range(lo, hi):
                cols[row, t] = x[i, t + shift]
    return cols


@njit
def conv1d_forward_numba(x, w, b, dilation):
    c_out, c_in, k = w.shape
    cols = _im2col_numba(x, k, dilation)
    out = np.dot(np.ascontiguousarray(w).reshape(c_out, c_in * k), cols)
    for c in range(c_out):
        out[c, :] += b[c]
    return out


@njit
def conv1d_backward_numba(x, w, g, dilation):
    c_out, c_in, k = w.shape
    n = x.shape[1]
    pad = dilation * (k - 1) // 2
    cols = _im2col_numba(x, k, dilation)
    gw = np.dot(g, cols.T).reshape(c_out, c_in, k)
    gb = np.zeros(c_out)
    for c in range(c_out):
        gb[c] = g[c, :].sum()
    gcols = np.dot(np.ascontiguousarray(w).reshape(c_out, c_in * k).T, g)
    # col2im: scatter each column row back to its shifted input position
    gx = np.zeros((c_in, n))
    for i in range(c_in):
        for j in range(k):
            shift = j * dilation - pad
            lo = max(0, -shift)
            hi = min(n, n - shift)
            row = i * k + j
            for t in range(lo, hi):
                gx[i, t + shift] += gcols[row, t]
    return gx, gw, gb


# --------------------------------------------------------------------------
# distance transform: y_i = min_j |i - P_j| for sorted P
# --------------------------------------------------------------------------

def distance_transform_numpy(peaks, n):
    idx = np.arange(n)
    pos = np.searchsorted(peaks, idx)
    right = peaks[np.minimum(pos, len(peaks) - 1)]
    left = peaks[np.maximum(pos - 1, 0)]
    return np.minimum(np.abs(idx - left), np.abs(right - idx)).astype(np.float64)


@njit
def distance_transform_numba(peaks, n):
    out = np.empty(n)
    big = 2.0 * n + 1.0
    last = -1
    p = 0
    for i in range(n):
        while p < len(peaks) and peaks[p] <= i:
            last = peaks[p]
            p += 1
        out[i] = (i - last) if last >= 0 else big
    nxt = -1
    p = len(peaks) - 1
    for i in range(n - 1, -1, -1):
        while p >= 0 and peaks[p] >= i:
            nxt = peaks[p]
            p -= 1
        if nxt >= 0 and nxt - i < out[i]:
            out[i] = nxt - i
    return out


# --------------------------------------------------------------------------
# peak search: argmin inside every maximal run of values < threshold
# --------------------------------------------------------------------------

def runs_below_argmin_numpy(values, threshold):
    below = values < threshold
    if not below.any():
        return np.empty(0, dtype=np.int64)
    edges = np.diff(np.concatenate(([0], below.view(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    out = np.empty(len(starts), dtype=np.int64)
    for r, (a, z) in enumerate(zip(starts, stops)):
        out[r] = a + int(np.argmin(values[a:z]))
    return out


@njit
def runs_below_argmin_numba(values, threshold):
    n = len(values)
    out = np.empty(n, dtype=np.int64)
    count = 0
    i = 0
    while i < n:
        if values[i] < threshold:
            best = i
            j = i + 1
            while j < n and values[j] < threshold:
                if values[j] < values[best]:
                    best = j
                j += 1
            out[count] = best
            count += 1
            i = j
        else:
            i += 1
    return out[:count].copy()


# --------------------------------------------------------------------------
# k closest peaks for every position (ties -> earlier peak; cyclic fill)
# --------------------------------------------------------------------------

def nearest_k_peaks_numpy(n, peaks, k):
    dist = np.abs(np.arange(n)[:, None] - peaks[None, :])
    order = np.argsort(dist, axis=1, kind="stable")
    order = order[:, np.arange(k) % len(peaks)]
    return np.take_along_axis(dist, order, axis=1).astype(np.float64), order.astype(np.int64)


@njit
def nearest_k_peaks_numba(n, peaks, k):
    m = len(peaks)
    take = min(k, m)
    dist = np.empty((n, k))
    which = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        # first peak >= i
        hi = 0
        while hi < m and peaks[hi] < i:
            hi += 1
        lo = hi - 1
        for r in range(take):
            if lo < 0:
                pick = hi
                hi += 1
            elif hi >= m:
                pick = lo
                lo -= 1
            elif i - peaks[lo] <= peaks[hi] - i:
                pick = lo
                lo -= 1
            else:
                pick = hi
                hi += 1
            which[i, r] = pick
            dist[i, r] = abs(i - peaks[pick])
        for r in range(take, k):
            which[i, r] = which[i, r % m]
            dist[i, r] = dist[i, r % m]
    return dist, which


# --------------------------------------------------------------------------
# greedy nearest-first one-to-one matching
# --------------------------------------------------------------------------

def greedy_match_numpy(pred, truth, radius):
    lp, lt = len(pred), len(truth)
    if lp == 0 or lt == 0:
        return np.empty((0, 2), dtype=np.int64)
    d = np.abs(pred[:, None] - truth[None, :])
    pi, ti = np.nonzero(d <= radius)
    key = d[pi, ti] * (lp * lt) + ti * lp + pi
    order = np.argsort(key, kind="stable")
    used_p = np.zeros(lp, dtype=bool)
    used_t = np.zeros(lt, dtype=bool)
    pairs = []
    for o in order:
        p, t = pi[o], ti[o]
        if not used_p[p] and not used_t[t]:
            used_p[p] = used_t[t] = True
            pairs.append((p, t))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


@njit
def greedy_match_numba(pred, truth, radius):
    lp, lt = len(pred), len(truth)
    keys = np.empty(lp * lt, dtype=np.int64)
    cnt = 0
    for p in range(lp):
        for t in range(lt):
            d = abs(pred[p] - truth[t])
            if d <= radius:
                keys[cnt] = d * (lp * lt) + t * lp + p
                cnt += 1
    keys = np.sort(keys[:cnt])
    used_p = np.zeros(lp, dtype=np.bool_)
    used_t = np.zeros(lt, dtype=np.bool_)
    pairs = np.empty((min(lp, lt), 2), dtype=np.int64)
    m = 0
    for q in range(cnt):
        rest = keys[q] % (lp * lt)
        t = rest // lp
        p = rest % lp
        if not used_p[p] and not used_t[t]:
            used_p[p] = True
            used_t[t] = True
            pairs[m, 0] = p
            pairs[m, 1] = t
            m += 1
    return pairs[:m].copy()


if USE_NUMBA:
    conv1d_forward = conv1d_forward_numba
    conv1d_backward = conv1d_backward_numba
    distance_transform = distance_transform_numba
    runs_below_argmin = runs_below_argmin_numba
    nearest_k_peaks = nearest_k_peaks_numba
    greedy_match = greedy_match_numba
else:
    conv1d_forward = conv1d_forward_numpy
    conv1d_backward = conv1d_backward_numpy
    distance_transform = distance_transform_numpy
    runs_below_argmin = runs_below_argmin_numpy
    nearest_k_peaks = nearest_k_peaks_numpy
    greedy_match = greedy_match_numpy
