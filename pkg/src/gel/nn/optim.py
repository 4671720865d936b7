"""Named parameter store with Adam state."""

from __future__ import annotations

import numpy as np

from .tensor import NumericalError, Tensor


class ParamStore:
    """Holds named parameters plus per-parameter Adam moments and step count."""

    def __init__(self, named_params: list[tuple[str, Tensor]]):
        names = [n for n, _ in named_params]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate parameter names: {dupes}")
        self.params: dict[str, Tensor] = dict(named_params)
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.t = {n: 0 for n in self.params}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def grads(self) -> dict[str, np.ndarray]:
        return {n: p.grad for n, p in self.params.items()}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for n, p in self.params.items():
            p.data[...] = snap[n]

    def param_norms(self) -> dict[str, float]:
        return {n: float(np.linalg.norm(p.data)) for n, p in self.params.items()}


def adam_step(store: ParamStore, lr: float, weight_decay: float = 0.0,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One Adam update from the gradients on the store's parameters.

    Weight decay is decoupled: applied directly to the parameter, not mixed
    into the moment estimates. Parameters without a gradient are skipped.
    """
    for name, p in store.params.items():
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter '{name}'")
        t = store.t[name] + 1
        store.t[name] = t
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        mhat = m / (1.0 - beta1 ** t)
        vhat = v / (1.0 - beta2 ** t)
        p.data -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(p.data.dtype)
        if weight_decay:
            p.data -= (lr * weight_decay) * p.data
