"""Convolution/pool/linear nodes against shape arithmetic and the
finite-difference oracle (float64, central differences)."""

import numpy as np
import pytest

from gel.nn import Tensor, grad_check, parameter
from gel.nn import ops

RNG = np.random.default_rng(42)


def randp(*shape, scale=0.5):
    return parameter(RNG.normal(size=shape, scale=scale))


def project_loss(out_shape):
    """Random fixed projection making a scalar loss out of any output."""
    r = RNG.normal(size=out_shape)

    def to_scalar(t):
        return (t * Tensor(np.asarray(r, dtype=t.dtype))).sum()

    return to_scalar


# -- shape arithmetic (layer-by-layer derivations) ---------------------------

def test_conv2d_output_shape_64_to_32():
    # floor((64 + 2*1 - 4)/2) + 1 = 32
    x = Tensor(RNG.normal(size=(1, 64, 64, 1)).astype(np.float32))
    w = parameter(RNG.normal(size=(4, 4, 1, 32)).astype(np.float32))
    b = parameter(np.zeros(32, dtype=np.float32))
    assert ops.conv2d(x, w, b, 2, 1).shape == (1, 32, 32, 32)


def test_conv2d_identity_kernel():
    x = Tensor(RNG.normal(size=(2, 5, 5, 1)).astype(np.float32))
    w = parameter(np.ones((1, 1, 1, 1), dtype=np.float32))
    out = ops.conv2d(x, w, None, 1, 0)
    np.testing.assert_allclose(out.data, x.data)


def test_deconv2d_output_shape_4_to_8():
    # (4-1)*2 - 2*1 + 4 = 8
    x = Tensor(RNG.normal(size=(1, 4, 4, 64)).astype(np.float32))
    w = parameter(RNG.normal(size=(4, 4, 64, 64)).astype(np.float32))
    assert ops.deconv2d(x, w, None, 2, 1).shape == (1, 8, 8, 64)


def test_maxpool1d_length_40_to_13():
    # floor((40 - 3)/3) + 1 = 13
    x = Tensor(RNG.normal(size=(1, 40, 2)).astype(np.float32))
    assert ops.maxpool1d(x, 3, 3).shape == (1, 13, 2)


def test_deconv_forward_is_conv_input_gradient():
    """Adjoint identity: deconv2d forward equals conv2d backward w.r.t. input."""
    x = parameter(RNG.normal(size=(2, 6, 6, 3)))
    w = randp(4, 4, 3, 5)
    out = ops.conv2d(x, w, None, 2, 1)
    gy = RNG.normal(size=out.shape)
    out.backward(gy)
    # conv weight (k,k,ci,co) viewed as deconv weight (k,k,co=ci',ci=co')
    dec = ops.deconv2d(Tensor(gy), w, None, 2, 1)
    np.testing.assert_allclose(dec.data, x.grad, rtol=1e-10, atol=1e-12)


# -- finite-difference oracle -------------------------------------------------

def test_conv2d_gradients_match_finite_differences():
    x = randp(1, 6, 6, 2)
    w = randp(4, 4, 2, 3)
    b = randp(3, scale=0.1)
    scalar = project_loss((1, 3, 3, 3))
    rep = grad_check(lambda: scalar(ops.conv2d(x, w, b, 2, 1)),
                     [("x", x), ("w", w), ("b", b)])
    assert max(rep.values()) < 1e-5, rep


def test_deconv2d_gradients_match_finite_differences():
    x = randp(1, 3, 3, 4)
    w = randp(4, 4, 2, 4)
    b = randp(2, scale=0.1)
    scalar = project_loss((1, 6, 6, 2))
    rep = grad_check(lambda: scalar(ops.deconv2d(x, w, b, 2, 1)),
                     [("x", x), ("w", w), ("b", b)])
    assert max(rep.values()) < 1e-5, rep


def test_conv1d_gradients_match_finite_differences():
    x = randp(2, 9, 3)
    w = randp(3, 3, 4)
    b = randp(4, scale=0.1)
    scalar = project_loss((2, 7, 4))
    rep = grad_check(lambda: scalar(ops.conv1d(x, w, b)),
                     [("x", x), ("w", w), ("b", b)])
    assert max(rep.values()) < 1e-5, rep


def test_maxpool1d_gradient_matches_finite_differences():
    # distinct values keep the argmax stable under the probe step
    vals = RNG.permutation(2 * 12 * 2).reshape(2, 12, 2).astype(np.float64)
    x = parameter(vals)
    scalar = project_loss((2, 4, 2))
    rep = grad_check(lambda: scalar(ops.maxpool1d(x, 3, 3)), [("x", x)])
    assert max(rep.values()) < 1e-5, rep


def test_maxpool1d_ties_route_to_lowest_index():
    x = parameter(np.zeros((1, 3, 1)))
    out = ops.maxpool1d(x, 3, 3)
    out.backward(np.ones_like(out.data))
    np.testing.assert_allclose(x.grad[0, :, 0], [1.0, 0.0, 0.0])


def test_linear_gradients_match_finite_differences():
    x = randp(4, 5)
    w = randp(5, 3)
    b = randp(3, scale=0.1)
    scalar = project_loss((4, 3))
    rep = grad_check(lambda: scalar(ops.linear(x, w, b)),
                     [("x", x), ("w", w), ("b", b)])
    assert max(rep.values()) < 1e-6, rep


def test_bernoulli_log_likelihood_gradient():
    logits = randp(2, 4, 4, 1)
    target = (RNG.random((2, 4, 4, 1)) < 0.4).astype(np.float64)
    rep = grad_check(
        lambda: ops.bernoulli_log_likelihood(logits.sigmoid(), target),
        [("logits", logits)])
    assert max(rep.values()) < 1e-6, rep


def test_bernoulli_clamps_outside_open_interval():
    xhat = Tensor(np.array([0.0, 1.0], dtype=np.float64))
    x = np.array([0.0, 1.0])
    ll = ops.bernoulli_log_likelihood(xhat, x)
    assert np.isfinite(ll.item())


def test_softmax_cross_entropy_gradient():
    logits = randp(5, 3)
    labels = RNG.integers(0, 3, size=5)
    rep = grad_check(lambda: ops.softmax_cross_entropy(logits, labels),
                     [("logits", logits)])
    assert max(rep.values()) < 1e-6, rep


def test_softmax_cross_entropy_value():
    logits = Tensor(np.zeros((2, 4)))
    labels = np.array([0, 3])
    assert ops.softmax_cross_entropy(logits, labels).item() == pytest.approx(np.log(4.0))
