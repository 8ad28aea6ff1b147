"""Reverse-mode automatic differentiation on dense float64 arrays.

A ``Tensor`` wraps a numpy array and records the operation that produced
it, so a scalar loss can be backpropagated through the graph with
``loss.backward()``. Gradients accumulate additively across fan-out and
across repeated backward calls; callers zero them between steps.

Every operation checks its output for NaN/Inf and raises
``NumericError`` immediately, so a failed forward pass never leaves a
half-poisoned graph.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError


def _require_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in output of '{op}' (shape {arr.shape})")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes that were broadcast in the forward op."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Node in the differentiation graph holding a float64 array."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents", "op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        _require_finite(arr, _op)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._backward = None
        self._parents = _parents
        self.op = _op

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        """Same values, cut off from the graph."""
        return Tensor(self.data, requires_grad=False)

    def item(self) -> float:
        return float(self.data)

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))

    def _make(self, data, parents, op, backward) -> "Tensor":
        out = Tensor(data, requires_grad=any(p.requires_grad for p in parents),
                     _parents=parents, _op=op)
        if out.requires_grad:
            out._backward = backward
        return out

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = Tensor._lift(other)
        try:
            data = self.data + other.data
        except ValueError:
            raise NumericError(
                f"shape mismatch in 'add': {self.data.shape} vs {other.data.shape}") from None

        def backward(out):
            if self.requires_grad:
                self._accumulate(_unbroadcast(out.grad, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(out.grad, other.data.shape))

        return self._make(data, (self, other), "add", backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(out):
            if self.requires_grad:
                self._accumulate(-out.grad)

        return self._make(-self.data, (self,), "neg", backward)

    def __sub__(self, other):
        return self + (-Tensor._lift(other))

    def __rsub__(self, other):
        return Tensor._lift(other) + (-self)

    def __mul__(self, other):
        other = Tensor._lift(other)
        try:
            data = self.data * other.data
        except ValueError:
            raise NumericError(
                f"shape mismatch in 'mul': {self.data.shape} vs {other.data.shape}") from None

        def backward(out):
            if self.requires_grad:
                self._accumulate(_unbroadcast(out.grad * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(out.grad * self.data, other.data.shape))

        return self._make(data, (self, other), "mul", backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        with np.errstate(divide="ignore", invalid="ignore"):
            data = self.data / other.data
        _require_finite(data, "div")

        def backward(out):
            if self.requires_grad:
                self._accumulate(_unbroadcast(out.grad / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(
                    -out.grad * self.data / (other.data * other.data), other.data.shape))

        return self._make(data, (self, other), "div", backward)

    def __rtruediv__(self, other):
        return Tensor._lift(other) / self

    def pow(self, exponent: float) -> "Tensor":
        """Elementwise power with a constant exponent."""
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            data = self.data ** exponent
        _require_finite(data, "pow")

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad * exponent * self.data ** (exponent - 1.0))

        return self._make(data, (self,), "pow", backward)

    def __matmul__(self, other):
        other = Tensor._lift(other)
        if self.data.shape[-1] != other.data.shape[0]:
            raise NumericError(
                f"shape mismatch in 'matmul': {self.data.shape} @ {other.data.shape}")
        data = self.data @ other.data

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ out.grad)

        return self._make(data, (self, other), "matmul", backward)

    # -- nonlinearities ----------------------------------------------------

    def relu(self):
        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad * (self.data > 0.0))

        return self._make(np.maximum(self.data, 0.0), (self,), "relu", backward)

    def sigmoid(self):
        # stable both directions: s(x) = exp(-|x|+min(x,0)) form via expit-like split
        data = np.where(self.data >= 0,
                        1.0 / (1.0 + np.exp(-np.abs(self.data))),
                        np.exp(-np.abs(self.data)) / (1.0 + np.exp(-np.abs(self.data))))

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad * data * (1.0 - data))

        return self._make(data, (self,), "sigmoid", backward)

    def tanh(self):
        data = np.tanh(self.data)

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad * (1.0 - data * data))

        return self._make(data, (self,), "tanh", backward)

    def softplus(self):
        data = np.logaddexp(0.0, self.data)

        def backward(out):
            if self.requires_grad:
                sig = 1.0 / (1.0 + np.exp(-np.clip(self.data, -500, 500)))
                self._accumulate(out.grad * sig)

        return self._make(data, (self,), "softplus", backward)

    def log(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            data = np.log(self.data)
        _require_finite(data, "log")

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad / self.data)

        return self._make(data, (self,), "log", backward)

    def exp(self):
        with np.errstate(over="ignore"):
            data = np.exp(self.data)
        _require_finite(data, "exp")

        def backward(out):
            if self.requires_grad:
                self._accumulate(out.grad * data)

        return self._make(data, (self,), "exp", backward)

    # -- reductions and shape ops -------------------------------------------

    def sum(self, axis=None):
        data = self.data.sum(axis=axis)

        def backward(out):
            if self.requires_grad:
                g = out.grad
                if axis is not None:
                    g = np.expand_dims(g, axis=axis)
                self._accumulate(np.broadcast_to(g, self.data.shape).copy())

        return self._make(data, (self,), "sum", backward)

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def __getitem__(self, index):
        data = self.data[index]

        def backward(out):
            if self.requires_grad:
                g = np.zeros_like(self.data)
                np.add.at(g, index, out.grad)
                self._accumulate(g)

        return self._make(data, (self,), "slice", backward)

    # -- backward pass -------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar, accumulating into ``grad`` buffers."""
        if self.data.size != 1:
            raise NumericError(f"backward requires a scalar loss, got shape {self.data.shape}")
        if not self.requires_grad:
            raise NumericError("backward on a tensor that does not require grad")

        order: list[Tensor] = []
        seen: set[int] = set()
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
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node)
                for parent in node._parents:
                    if parent.requires_grad and parent.grad is not None:
                        _require_finite(parent.grad, f"grad<{node.op}>")


def concat(tensors, axis: int = 1) -> Tensor:
    """Concatenate tensors along an axis, routing gradients back to each slice."""
    tensors = [Tensor._lift(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    out = Tensor(data, requires_grad=any(t.requires_grad for t in tensors),
                 _parents=tuple(tensors), _op="concat")

    def backward(o):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * data.ndim
                sl[axis] = slice(start, stop)
                t._accumulate(o.grad[tuple(sl)])

    if out.requires_grad:
        out._backward = backward
    return out


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Per-example cross entropy between softmax(logits) and integer labels.

    Returns a vector of length batch; fused so the backward pass is the
    numerically exact ``softmax - onehot``.
    """
    labels = np.asarray(labels)
    if logits.data.ndim != 2 or labels.shape != (logits.data.shape[0],):
        raise NumericError(
            f"shape mismatch in 'softmax_cross_entropy': logits {logits.data.shape}, "
            f"labels {labels.shape}")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)) + zmax
    rows = np.arange(z.shape[0])
    nll = logsumexp[:, 0] - z[rows, labels]
    probs = np.exp(z - logsumexp)

    out = Tensor(nll, requires_grad=logits.requires_grad,
                 _parents=(logits,), _op="softmax_cross_entropy")

    def backward(o):
        if logits.requires_grad:
            g = probs * o.grad[:, None]
            g[rows, labels] -= o.grad
            logits._accumulate(g)

    if out.requires_grad:
        out._backward = backward
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Plain numpy softmax over the last axis (inference-side, no graph)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
