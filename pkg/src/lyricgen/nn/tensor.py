"""Dense float64 tensors with reverse-mode automatic differentiation.

The computation graph is built afresh on every forward pass (define-by-run)
and discarded after ``backward``; nothing is shared between steps, so runs
are bit-reproducible given the same inputs.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A node in the computation graph.

    ``value`` is always a C-contiguous float64 ndarray. Non-leaf nodes hold
    references to their parents and a closure that routes the incoming
    gradient to them.
    """

    __slots__ = ("value", "grad", "parents", "backward_fn")

    def __init__(self, value, parents=(), backward_fn=None):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.value = arr
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def data(self):
        """Row-major flat view of the values."""
        return self.value.reshape(-1)

    def item(self):
        return float(self.value.reshape(-1)[0])

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def backward(self):
        """Reverse-mode sweep from a scalar node."""
        if self.value.size != 1:
            raise ValueError("backward() requires a scalar loss")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node.backward_fn is not None and node.grad is not None:
                node.backward_fn(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"


class Parameter(Tensor):
    """A trainable leaf: persistent gradient plus optimizer slot arrays."""

    __slots__ = ("slots",)

    def __init__(self, value):
        super().__init__(value)
        self.grad = np.zeros_like(self.value)
        self.slots = {}

    def zero_grad(self):
        self.grad[...] = 0.0

    def slot(self, name):
        """Return (creating on first use) a same-shape accumulator."""
        if name not in self.slots:
            self.slots[name] = np.zeros_like(self.value)
        return self.slots[name]

    def __repr__(self):
        return f"Parameter(shape={self.value.shape})"


def constant(value):
    """Wrap a value as a graph leaf that receives no gradient."""
    return Tensor(value)


def uniform_init(shape, rng, scale=0.1):
    """Weight matrices start uniform in [-scale, scale]; biases start at zero
    (see ``zeros_init``) so zero inputs map to zero activations."""
    return Parameter(rng.uniform(-scale, scale, size=shape))


def zeros_init(shape):
    return Parameter(np.zeros(shape))
