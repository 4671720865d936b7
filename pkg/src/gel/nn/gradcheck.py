"""Central finite-difference gradient oracle.

The numeric side perturbs every parameter element twice and never touches
the analytic backward pass, so the two routes stay independent. Run models
in float64 here; float32 rounding swamps the h^2 truncation error.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def grad_check(loss_fn: Callable[[], Tensor],
               named_params: list[tuple[str, Tensor]],
               h: float = 1e-5,
               exclude_nonsmooth: bool = False,
               max_excluded_fraction: float = 0.02) -> dict[str, float]:
    """Compare analytic gradients against central differences.

    loss_fn must rebuild the scalar loss from the parameters' current
    values on every call. Returns the max relative error per parameter
    group, where the error is normalized by the largest gradient magnitude
    in the group (elementwise denominators misbehave when a true gradient
    is legitimately ~0).

    With exclude_nonsmooth, left and right one-sided differences are also
    compared; an element where they split apart sits on a subgradient
    point (a relu kink, pool-argmax tie, or clamp edge inside the probe
    interval) where no single derivative exists, so it is excluded from
    the comparison. Whole-network losses need this; the exclusion is
    capped at max_excluded_fraction of the parameter count.
    """
    for _, p in named_params:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {n: p.grad.copy() for n, p in named_params}
    f_zero = loss_fn().item() if exclude_nonsmooth else 0.0

    report: dict[str, float] = {}
    excluded = total = 0
    for name, p in named_params:
        flat = p.data.reshape(-1)
        num = np.zeros_like(flat)
        smooth = np.ones(flat.size, dtype=bool)
        a = analytic[name].reshape(-1)
        gmax = max(np.abs(a).max(), 1e-12)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = loss_fn().item()
            flat[i] = orig - h
            f_minus = loss_fn().item()
            flat[i] = orig
            num[i] = (f_plus - f_minus) / (2.0 * h)
            if exclude_nonsmooth:
                split = abs((f_plus - f_zero) - (f_zero - f_minus)) / h
                if split > 1e-3 * max(abs(num[i]), gmax):
                    smooth[i] = False
        excluded += int((~smooth).sum())
        total += flat.size
        scale = max(gmax, np.abs(num[smooth]).max(initial=0.0), 1e-12)
        report[name] = float(np.abs(a[smooth] - num[smooth]).max(initial=0.0) / scale)
    if exclude_nonsmooth and excluded > max_excluded_fraction * total + 1:
        raise AssertionError(
            f"{excluded}/{total} elements sit on non-smooth points; "
            "the check input is badly placed")
    return report


def input_grad_check(loss_fn: Callable[[Tensor], Tensor], x: Tensor,
                     h: float = 1e-5) -> float:
    """Same oracle for the gradient w.r.t. an input tensor."""
    x.zero_grad()
    loss_fn(x).backward()
    analytic = x.grad.copy()

    flat = x.data.reshape(-1)
    num = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = loss_fn(x).item()
        flat[i] = orig - h
        f_minus = loss_fn(x).item()
        flat[i] = orig
        num[i] = (f_plus - f_minus) / (2.0 * h)
    a = analytic.reshape(-1)
    scale = max(np.abs(a).max(), np.abs(num).max(), 1e-12)
    return float(np.abs(a - num).max() / scale)
