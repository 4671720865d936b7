"""Reverse-mode automatic differentiation over numpy arrays.

Only the operations the two network architectures and their losses need are
implemented. Heavy ops (convolutions, pooling, linear) live in ops.py as
fused graph nodes; this module provides the Tensor container, elementwise
math, reductions, and the backward pass.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class NumericalError(RuntimeError):
    """A non-finite value showed up where the math requires finite ones."""


_grad_enabled = True
_debug_checks = False


class no_grad:
    """Context manager that disables graph construction (evaluation paths)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf assertions after every op (slow; for debugging)."""
    global _debug_checks
    _debug_checks = enabled


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """An ndarray plus the backward closure that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False,
                 parents: Sequence["Tensor"] = (),
                 backward: Optional[Callable[[np.ndarray], None]] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents = tuple(parents)
        self._backward = backward
        if _debug_checks and not np.all(np.isfinite(self.data)):
            raise NumericalError("non-finite values in tensor")

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: Sequence["Tensor"],
              backward: Callable[[np.ndarray], None]) -> "Tensor":
        track = _grad_enabled and any(p.requires_grad for p in parents)
        if not track:
            return Tensor(data)
        return Tensor(data, requires_grad=True, parents=parents, backward=backward)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def accumulate_grad_owned(self, g: np.ndarray) -> None:
        """Accumulate a gradient array the caller guarantees is freshly
        allocated and unaliased; skips the defensive copy."""
        if self.grad is None and g.dtype == self.data.dtype:
            self.grad = g
        else:
            self.accumulate_grad(g)

    def zero_grad(self) -> None:
        self.grad = None

    # -- autodiff --------------------------------------------------------------

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Run reverse-mode accumulation from this tensor."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient requires a scalar")
            grad = np.ones_like(self.data)
        self.accumulate_grad(np.asarray(grad, dtype=self.data.dtype))

        # iterative topological order; graphs can be deep-ish
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if _debug_checks and not np.all(np.isfinite(node.grad)):
                    raise NumericalError("non-finite gradient")

    # -- elementwise arithmetic -------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        out_data = self.data + other.data

        def backward(g):
            if self.requires_grad:
                self.accumulate_grad(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other.accumulate_grad(_unbroadcast(g, other.shape))

        return Tensor._make(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            self.accumulate_grad(-g)
        return Tensor._make(-self.data, (self,), backward)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        out_data = self.data * other.data

        def backward(g):
            if self.requires_grad:
                self.accumulate_grad(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other.accumulate_grad(_unbroadcast(g * self.data, other.shape))

        return Tensor._make(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor) or not np.isscalar(other):
            raise TypeError("division only supported by scalars")
        return self * (1.0 / other)

    def __matmul__(self, other):
        other = self._coerce(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError("matmul expects 2-D tensors")
        out_data = self.data @ other.data

        def backward(g):
            if self.requires_grad:
                self.accumulate_grad(g @ other.data.T)
            if other.requires_grad:
                other.accumulate_grad(self.data.T @ g)

        return Tensor._make(out_data, (self, other), backward)

    # -- nonlinear elementwise ---------------------------------------------------

    def exp(self):
        out_data = np.exp(self.data)

        def backward(g):
            self.accumulate_grad(g * out_data)

        return Tensor._make(out_data, (self,), backward)

    def log(self):
        out_data = np.log(self.data)

        def backward(g):
            self.accumulate_grad(g / self.data)

        return Tensor._make(out_data, (self,), backward)

    def relu(self):
        mask = self.data > 0
        out_data = np.maximum(self.data, 0)

        def backward(g):
            self.accumulate_grad_owned(g * mask)

        return Tensor._make(out_data, (self,), backward)

    def sigmoid(self):
        # clip keeps exp within float32 range; sigmoid is saturated out there
        out_data = 1.0 / (1.0 + np.exp(-np.clip(self.data, -88.0, 88.0)))

        def backward(g):
            self.accumulate_grad_owned(g * out_data * (1.0 - out_data))

        return Tensor._make(out_data, (self,), backward)

    def clip(self, lo: float, hi: float):
        """Clamp values; gradient passes only where lo <= x <= hi."""
        mask = (self.data >= lo) & (self.data <= hi)
        out_data = np.clip(self.data, lo, hi)

        def backward(g):
            self.accumulate_grad(g * mask)

        return Tensor._make(out_data, (self,), backward)

    def square(self):
        return self * self

    # -- reductions / reshaping ----------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self.accumulate_grad(np.broadcast_to(g, self.shape))

        return Tensor._make(out_data, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)
        in_shape = self.shape

        def backward(g):
            self.accumulate_grad(g.reshape(in_shape))

        return Tensor._make(out_data, (self,), backward)

    def __getitem__(self, key):
        out_data = self.data[key]

        def backward(g):
            full = np.zeros_like(self.data)
            full[key] = g
            self.accumulate_grad(full)

        return Tensor._make(out_data, (self,), backward)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, grad={'yes' if self.requires_grad else 'no'})"


def parameter(data: np.ndarray) -> Tensor:
    """A leaf tensor that accumulates gradients."""
    return Tensor(np.asarray(data), requires_grad=True)
