"""Multi-scale targets, deep-supervised loss, AdamW with warm restarts."""

import math
from dataclasses import dataclass, field

import numpy as np

from .. import ops
from ..labeling import dt_labels, dt_labels_scaled, hard_labels, rescale_peaks, round_half_away
from ..tensor import GradTape, NonFiniteError
from .network import forward

AUX_WEIGHT = 0.5


def target_at(peaks, n, length, cfg):
    """Ground-truth labels for a ``length``-sample view of an ``n``-sample segment."""
    peaks = np.asarray(peaks, dtype=np.int64)
    if cfg.hard_labels:
        if length == n:
            return hard_labels(peaks, n, cfg.hard_radius)
        radius = int(round_half_away(cfg.hard_radius * length / n))
        return hard_labels(rescale_peaks(peaks, n, length), length, radius)
    if length == n:
        return dt_labels(peaks, n)
    return dt_labels_scaled(rescale_peaks(peaks, n, length), n, length)


def segment_loss(x, peaks, cfg, weights):
    """Total loss for one segment; returns (loss tensor, forward result)."""
    n = x.shape[-1]
    res = forward(x, cfg, weights)
    terms = [ops.smooth_l1(res.y, target_at(peaks, n, n, cfg))]
    coefs = [1.0]
    if res.y_e is not None:
        tgt = target_at(peaks, n, res.y_e.shape[0], cfg)
        terms += [ops.smooth_l1(res.y_e, tgt), ops.smooth_l1(res.y_t, tgt)]
        coefs += [AUX_WEIGHT, AUX_WEIGHT]
    for d in res.deep:
        terms.append(ops.smooth_l1(d, target_at(peaks, n, d.shape[0], cfg)))
        coefs.append(AUX_WEIGHT)
    return ops.weighted_sum(terms, coefs), res


@dataclass
class AdamWState:
    lr: float = 0.002
    weight_decay: float = 0.05
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    restart_period: int = 100     # steps in the first cosine cycle
    period_mult: int = 1
    min_lr: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def current_lr(self):
        """Cosine annealing with warm restarts evaluated at ``self.step``."""
        t, period = self.step, self.restart_period
        if self.period_mult == 1:
            t = t % period
        else:
            while t >= period:
                t -= period
                period *= self.period_mult
        return self.min_lr + 0.5 * (self.lr - self.min_lr) * (1.0 + math.cos(math.pi * t / period))

    def apply(self, weights):
        lr = self.current_lr()
        b1, b2 = self.betas
        self.step += 1
        c1 = 1.0 - b1 ** self.step
        c2 = 1.0 - b2 ** self.step
        for name, p in weights.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            if lr != 0.0:
                p.data *= 1.0 - lr * self.weight_decay
                p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return lr


def zero_grad(weights):
    for p in weights.values():
        p.grad = None


def train_step(batch, cfg, weights, state):
    """One optimiser step on ``batch`` = [(samples, peaks), ...]; returns the mean loss."""
    if not batch:
        raise ValueError("empty batch")
    zero_grad(weights)
    total = 0.0
    for x, peaks in batch:
        with GradTape() as tape:
            loss, _ = segment_loss(np.asarray(x, dtype=np.float64)[None, :], peaks, cfg, weights)
        value = float(loss.data)
        if not math.isfinite(value):
            raise NonFiniteError("non-finite loss")
        tape.backward(loss)
        total += value
    inv = 1.0 / len(batch)
    for p in weights.values():
        if p.grad is not None:
            p.grad *= inv
    state.apply(weights)
    return total * inv


def fit(data, cfg, weights, *, epochs, batch_size=8, seed=0, state=None, log=None):
    """Shuffle-and-step training loop; deterministic for a given ``seed``.

    ``data`` is a list of (samples, peaks).  Returns the per-epoch mean losses.
    """
    rng = np.random.default_rng(seed)
    if state is None:
        steps = max(1, math.ceil(len(data) / batch_size))
        state = AdamWState(restart_period=steps * max(1, epochs // 2))
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(data))
        losses = []
        for s in range(0, len(order), batch_size):
            batch = [data[i] for i in order[s:s + batch_size]]
            losses.append(train_step(batch, cfg, weights, state))
        history.append(float(np.mean(losses)))
        if log is not None:
            log(epoch, history[-1], state)
    return history
