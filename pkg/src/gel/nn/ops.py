"""Fused autodiff nodes: convolutions, pooling, linear, and the two losses.

Array convention is channels-last: images are (N, H, W, C) and sequences
are (N, L, C). Convolutions run as im2col plus one large GEMM; the
transposed convolution reuses the same kernels through the adjoint
relationship (its forward IS the convolution's input-gradient). Everything
preserves the dtype of its inputs so the same code runs in float32 for
training and float64 for gradient checking.

The col2im scatter-accumulate is the one loop numpy cannot express well;
it is JIT-compiled when numba is importable and falls back to blocked
numpy otherwise.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor

try:
    import numba as _nb
except ImportError:  # pragma: no cover
    _nb = None


def conv2d_out_hw(h: int, w: int, k: int, s: int, p: int) -> tuple[int, int]:
    return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1


def deconv2d_out_hw(h: int, w: int, k: int, s: int, p: int) -> tuple[int, int]:
    return (h - 1) * s - 2 * p + k, (w - 1) * s - 2 * p + k


def _pad2d(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    n, h, w, c = x.shape
    xp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=x.dtype)
    xp[:, p:-p, p:-p, :] = x
    return xp


def _im2col2d(x: np.ndarray, k: int, s: int, p: int) -> np.ndarray:
    """(N,H,W,C) -> (N*Ho*Wo, k*k*C) patch matrix."""
    xp = _pad2d(x, p)
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s]
    n, ho, wo = win.shape[:3]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
    return cols.reshape(n * ho * wo, -1)


if _nb is not None:
    @_nb.njit(cache=True, fastmath=True)
    def _col2im_accum(xp, c6, k, s, ho, wo):  # pragma: no cover - exercised via wrapper
        n, _, _, c = xp.shape
        for ni in range(n):
            for hi in range(ho):
                for wi in range(wo):
                    for ki in range(k):
                        row = xp[ni, hi * s + ki]
                        blk = c6[ni, hi, wi, ki]
                        for kj in range(k):
                            dst = row[wi * s + kj]
                            src = blk[kj]
                            for ci in range(c):
                                dst[ci] += src[ci]
else:
    def _col2im_accum(xp, c6, k, s, ho, wo):
        for ki in range(k):
            for kj in range(k):
                xp[:, ki:ki + s * ho:s, kj:kj + s * wo:s, :] += c6[:, :, :, ki, kj, :]


def _col2im2d(cols: np.ndarray, n: int, h: int, w: int, c: int,
              k: int, s: int, p: int, ho: int, wo: int) -> np.ndarray:
    """Scatter-add the inverse of _im2col2d back to (N,H,W,C)."""
    xp = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=cols.dtype)
    _col2im_accum(xp, cols.reshape(n, ho, wo, k, k, c), k, s, ho, wo)
    if p:
        return xp[:, p:-p, p:-p, :]
    return xp


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int, padding: int) -> Tensor:
    """2-D convolution of (N,H,W,C) with kernel (k,k,C,O)."""
    n, h, wd, c = x.data.shape
    k, _, _, o = w.data.shape
    ho, wo = conv2d_out_hw(h, wd, k, stride, padding)
    cols = _im2col2d(x.data, k, stride, padding)
    out = cols @ w.data.reshape(-1, o)
    if b is not None:
        out += b.data
    out_data = out.reshape(n, ho, wo, o)

    def backward(g):
        g2 = g.reshape(-1, o)
        if w.requires_grad:
            w.accumulate_grad_owned((cols.T @ g2).reshape(w.data.shape))
        if b is not None and b.requires_grad:
            b.accumulate_grad_owned(g2.sum(axis=0))
        if x.requires_grad:
            gcols = g2 @ w.data.reshape(-1, o).T
            x.accumulate_grad_owned(
                _col2im2d(gcols, n, h, wd, c, k, stride, padding, ho, wo))

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._make(out_data, parents, backward)


def deconv2d(x: Tensor, w: Tensor, b: Tensor, stride: int, padding: int) -> Tensor:
    """Transposed 2-D convolution of (N,H,W,C_in) with kernel (k,k,C_out,C_in).

    Forward is exactly the input-gradient of a conv2d parameterized the same
    way, so the two ops stay adjoint by construction.
    """
    n, h, wd, ci = x.data.shape
    k, _, co, _ = w.data.shape
    ho, wo = deconv2d_out_hw(h, wd, k, stride, padding)
    w2 = w.data.reshape(-1, ci)  # (k*k*co, ci)
    gcols = x.data.reshape(-1, ci) @ w2.T
    out_data = _col2im2d(gcols, n, ho, wo, co, k, stride, padding, h, wd)
    if b is not None:
        out_data += b.data

    def backward(g):
        cols_g = None
        if w.requires_grad or x.requires_grad:
            cols_g = _im2col2d(g, k, stride, padding)
        if w.requires_grad:
            w.accumulate_grad_owned((cols_g.T @ x.data.reshape(-1, ci)).reshape(w.data.shape))
        if b is not None and b.requires_grad:
            b.accumulate_grad_owned(g.reshape(-1, co).sum(axis=0))
        if x.requires_grad:
            x.accumulate_grad_owned((cols_g @ w2).reshape(x.data.shape))

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._make(out_data, parents, backward)


def _im2col1d(x: np.ndarray, k: int) -> np.ndarray:
    """(N,L,C) -> (N*Lo, k*C) patch matrix, stride 1, no padding."""
    win = sliding_window_view(x, k, axis=1)  # (N, Lo, C, k)
    n, lo = win.shape[:2]
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(n * lo, -1)


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """1-D convolution of (N,L,C), stride 1, valid padding; kernel (k,C,O)."""
    n, l, c = x.data.shape
    k, _, o = w.data.shape
    lo = l - k + 1
    cols = _im2col1d(x.data, k)
    out = cols @ w.data.reshape(-1, o)
    if b is not None:
        out += b.data
    out_data = out.reshape(n, lo, o)

    def backward(g):
        g2 = g.reshape(-1, o)
        if w.requires_grad:
            w.accumulate_grad_owned((cols.T @ g2).reshape(w.data.shape))
        if b is not None and b.requires_grad:
            b.accumulate_grad_owned(g2.sum(axis=0))
        if x.requires_grad:
            gcols = (g2 @ w.data.reshape(-1, o).T).reshape(n, lo, k, c)
            gx = np.zeros_like(x.data)
            for ki in range(k):
                gx[:, ki:ki + lo, :] += gcols[:, :, ki, :]
            x.accumulate_grad_owned(gx)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._make(out_data, parents, backward)


def maxpool1d(x: Tensor, k: int, s: int) -> Tensor:
    """Max pooling over (N,L,C); ties route the gradient to the lowest index."""
    n, l, c = x.data.shape
    lo = (l - k) // s + 1
    win = sliding_window_view(x.data, k, axis=1)[:, ::s]  # (N, Lo, C, k)
    idx = win.argmax(axis=3)
    out_data = np.ascontiguousarray(
        np.take_along_axis(win, idx[..., None], axis=3)[..., 0])

    def backward(g):
        gx = np.zeros((n, l, c), dtype=x.data.dtype)
        flat = gx.reshape(n, l * c)
        ch = np.arange(c)
        pos = (np.arange(lo)[:, None] * s + idx) * c + ch  # (N, Lo, C) flat offsets
        rows = np.repeat(np.arange(n), lo * c)
        np.add.at(flat, (rows, pos.reshape(n, -1).ravel()), g.ravel())
        x.accumulate_grad_owned(gx)

    return Tensor._make(out_data, (x,), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map (N,F) @ (F,O) + (O,)."""
    out_data = x.data @ w.data
    if b is not None:
        out_data += b.data

    def backward(g):
        if w.requires_grad:
            w.accumulate_grad_owned(x.data.T @ g)
        if b is not None and b.requires_grad:
            b.accumulate_grad_owned(g.sum(axis=0))
        if x.requires_grad:
            x.accumulate_grad_owned(g @ w.data.T)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._make(out_data, parents, backward)


def bernoulli_log_likelihood(xhat: Tensor, x: np.ndarray,
                             eps: float = 1e-6) -> Tensor:
    """Sum of x*log(xhat) + (1-x)*log(1-xhat), with xhat clamped to [eps, 1-eps].

    Returns the total over all elements; callers divide by batch size.
    Gradient is zero where the clamp is active.
    """
    xh = np.clip(xhat.data, eps, 1.0 - eps)
    inside = (xhat.data >= eps) & (xhat.data <= 1.0 - eps)
    out_data = np.asarray((x * np.log(xh) + (1.0 - x) * np.log1p(-xh)).sum(),
                          dtype=xhat.data.dtype)

    def backward(g):
        gx = (x / xh - (1.0 - x) / (1.0 - xh)) * inside
        xhat.accumulate_grad_owned(g * gx)

    return Tensor._make(out_data, (xhat,), backward)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of (N,K) logits against integer labels (N,)."""
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    probs = ez / ez.sum(axis=1, keepdims=True)
    n = z.shape[0]
    nll = -(np.log(probs[np.arange(n), labels] + 1e-30)).mean()
    out_data = np.asarray(nll, dtype=z.dtype)

    def backward(g):
        gz = probs.copy()
        gz[np.arange(n), labels] -= 1.0
        logits.accumulate_grad_owned(g * gz / n)

    return Tensor._make(out_data, (logits,), backward)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Plain (non-differentiable) softmax for evaluation paths."""
    zmax = z.max(axis=axis, keepdims=True)
    ez = np.exp(z - zmax)
    return ez / ez.sum(axis=axis, keepdims=True)
