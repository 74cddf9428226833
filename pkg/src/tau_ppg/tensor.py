"""Dense float64 tensors and a single-use reverse-mode tape.

Usage::

    with GradTape() as tape:
        loss = ops.smooth_l1(ops.conv1d(x, w, b), y)
    tape.backward(loss)        # fills w.grad and b.grad
"""

import threading

import numpy as np

__all__ = ["Tensor", "GradTape", "NonFiniteError", "TapeError", "current_tape"]

MAX_RANK = 3


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


class TapeError(RuntimeError):
    """Misuse of :class:`GradTape` (consumed tape, untaped loss, non-scalar loss)."""


class Tensor:
    """Row-major float64 array of rank <= 3.

    ``trainable`` tensors are leaves whose gradient is accumulated into
    ``.grad`` by :meth:`GradTape.backward`.
    """

    __slots__ = ("data", "grad", "trainable", "_tape")

    def __init__(self, data, trainable=False):
        arr = np.array(data, dtype=np.float64, order="C")
        if arr.ndim > MAX_RANK:
            raise ValueError(f"rank {arr.ndim} exceeds {MAX_RANK}")
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor contains NaN or Inf")
        self.data = arr
        self.grad = None
        self.trainable = trainable
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def requires_grad(self):
        return self.trainable or self._tape is not None

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self._tape is None:
            raise TapeError("tensor was not produced on a gradient tape")
        self._tape.backward(self)

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", trainable" if self.trainable else ""
        return f"Tensor(shape={self.shape}{flag})"


_state = threading.local()


def current_tape():
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


class _Node:
    __slots__ = ("out", "parents", "vjp")

    def __init__(self, out, parents, vjp):
        self.out = out
        self.parents = parents
        self.vjp = vjp


class GradTape:
    """Ordered record of primitive ops; :meth:`backward` may run once."""

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def __enter__(self):
        if not hasattr(_state, "stack"):
            _state.stack = []
        _state.stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.stack.pop()
        return False

    def __len__(self):
        return len(self._nodes)

    def record(self, out, parents, vjp):
        if self._consumed:
            raise TapeError("tape already consumed by backward()")
        out._tape = self
        self._nodes.append(_Node(out, parents, vjp))

    def backward(self, loss):
        if self._consumed:
            raise TapeError("tape already consumed; run the forward pass again")
        if not isinstance(loss, Tensor) or loss._tape is not self:
            raise TapeError("loss was not produced on this tape")
        if loss.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self._nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            parent_grads = node.vjp(g)
            for p, pg in zip(node.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if p._tape is None:  # trainable leaf
                    p.grad = pg.copy() if p.grad is None else p.grad + pg
                else:
                    key = id(p)
                    grads[key] = pg if key not in grads else grads[key] + pg
        self._nodes.clear()
        self._consumed = True
