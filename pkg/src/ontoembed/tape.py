"""A very small reverse-mode autodiff over numpy arrays.

Only what the logic layer needs: a ``Var`` node carrying a value, an optional
gradient slot, and a closure mapping the upstream gradient to the gradients of
its parents. Operations that write into external parameter buffers (predicate
networks, embedding tables) are simply nodes without parents whose backward
closure has side effects.
"""

import numpy as np


class Var:
    __slots__ = ("value", "grad", "parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self._backward = backward

    def __float__(self):
        return float(self.value)

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var({self.value!r})"

    @property
    def shape(self):
        return self.value.shape

    def backward(self, upstream=1.0):
        """Propagate ``d(self)/d(.)`` through the graph, scaled by ``upstream``."""
        order = _topo(self)
        for node in order:
            node.grad = None
        self.grad = np.broadcast_to(np.asarray(upstream, dtype=np.float64), self.value.shape).copy()
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            if grads is None:
                continue
            for parent, g in zip(node.parents, grads):
                if g is None:
                    continue
                g = unbroadcast(np.asarray(g, dtype=np.float64), parent.value.shape)
                parent.grad = g if parent.grad is None else parent.grad + g


def _topo(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def concat(parts) -> Var:
    parts = [as_var(p) for p in parts]
    sizes = [p.value.size for p in parts]
    value = np.concatenate([p.value.reshape(-1) for p in parts]) if parts else np.zeros(0)
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return [g[bounds[i]:bounds[i + 1]].reshape(parts[i].value.shape) for i in range(len(parts))]

    return Var(value, parts, backward)


def take(x: Var, start: int, stop: int) -> Var:
    """Contiguous 1-d slice ``x[start:stop]``."""

    def backward(g):
        full = np.zeros_like(x.value)
        full[start:stop] = g
        return (full,)

    return Var(x.value[start:stop], (x,), backward)
