"""Define-by-run reverse-mode differentiation over float64 numpy arrays."""

from __future__ import annotations

import contextlib
import contextvars
import itertools
from dataclasses import dataclass

import numpy as np

_grad_enabled = contextvars.ContextVar("grad_enabled", default=True)
_sequence = itertools.count()


class NonFiniteError(FloatingPointError):
    """A forward or backward pass produced NaN or Inf."""

    def __init__(self, op, phase="forward"):
        super().__init__(f"non-finite values produced by {op} ({phase})")
        self.op = op
        self.phase = phase


class ShapeError(ValueError):
    pass


@contextlib.contextmanager
def no_grad():
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled():
    return _grad_enabled.get()


class Tensor:
    """An n-d float64 array that records how it was computed.

    Operations on tensors with ``requires_grad`` append a node carrying a
    backward closure; ``backward`` replays those nodes newest-first.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "_seq", "__weakref__")

    def __init__(self, data, requires_grad=False, op="leaf"):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(op)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = op
        self._parents = ()
        self._backward = None
        self._seq = next(_sequence)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data, requires_grad=False, op="detach")

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.add(ops.neg(self), other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward needs an explicit gradient for shape {self.shape}")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            raise ShapeError(f"gradient shape {grad.shape} does not match {self.shape}")
        if not self.requires_grad:
            raise RuntimeError("backward called on a tensor that does not require grad")

        tape = trace(self)
        grads = {id(self): grad}
        for node in reversed(tape.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = g.copy()
                else:
                    node.grad += g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if not np.all(np.isfinite(pg)):
                    raise NonFiniteError(node.op, phase="backward")
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


@dataclass
class Tape:
    """Recorded operations reachable from a root, in recording order."""

    nodes: list

    @property
    def ops(self):
        return [n.op for n in self.nodes]


def trace(root):
    seen = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen or not node.requires_grad:
            continue
        seen[id(node)] = node
        stack.extend(node._parents)
    return Tape(sorted(seen.values(), key=lambda n: n._seq))


def make(data, parents, backward, op):
    """Wrap an op result, recording it when any parent needs gradients."""
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    out._seq = next(_sequence)
    needs = _grad_enabled.get() and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)
