"""Layer objects with build-time shape checking.

Shapes are per-sample and channels-last: images (H, W, C), sequences
(L, C), vectors (F,). A Sequential resolves its whole shape chain when it
is constructed, so a mis-shaped stack fails immediately with the offending
layer named instead of blowing up mid-training.
"""

from __future__ import annotations

import math

import numpy as np

from . import ops
from .tensor import Tensor, parameter


class ShapeError(ValueError):
    """A layer cannot accept its incoming shape; message names the layer."""


def he_uniform(shape: tuple, fan_in: int, rng: np.random.Generator,
               dtype=np.float32) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    name: str

    def out_shape(self, in_shape: tuple) -> tuple:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def params(self) -> list[tuple[str, Tensor]]:
        return []


class Conv2d(Layer):
    """Square-kernel 2-D convolution; weight (k, k, C_in, C_out)."""

    def __init__(self, name: str, c_in: int, c_out: int, k: int, stride: int,
                 padding: int, rng: np.random.Generator, dtype=np.float32):
        self.name = name
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.stride, self.padding = stride, padding
        self.weight = parameter(he_uniform((k, k, c_in, c_out), c_in * k * k, rng, dtype))
        self.bias = parameter(np.zeros(c_out, dtype=dtype))

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[2] != self.c_in:
            raise ShapeError(f"{self.name}: expected (H,W,{self.c_in}), got {in_shape}")
        h, w = ops.conv2d_out_hw(in_shape[0], in_shape[1], self.k, self.stride, self.padding)
        if h < 1 or w < 1:
            raise ShapeError(f"{self.name}: output {h}x{w} underflows for input {in_shape}")
        return (h, w, self.c_out)

    def __call__(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)

    def params(self):
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]


class Deconv2d(Layer):
    """Transposed 2-D convolution; weight (k, k, C_out, C_in)."""

    def __init__(self, name: str, c_in: int, c_out: int, k: int, stride: int,
                 padding: int, rng: np.random.Generator, dtype=np.float32):
        self.name = name
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.stride, self.padding = stride, padding
        self.weight = parameter(he_uniform((k, k, c_out, c_in), c_in * k * k, rng, dtype))
        self.bias = parameter(np.zeros(c_out, dtype=dtype))

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[2] != self.c_in:
            raise ShapeError(f"{self.name}: expected (H,W,{self.c_in}), got {in_shape}")
        h, w = ops.deconv2d_out_hw(in_shape[0], in_shape[1], self.k, self.stride, self.padding)
        if h < 1 or w < 1:
            raise ShapeError(f"{self.name}: output {h}x{w} underflows for input {in_shape}")
        return (h, w, self.c_out)

    def __call__(self, x):
        return ops.deconv2d(x, self.weight, self.bias, self.stride, self.padding)

    def params(self):
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]


class Conv1d(Layer):
    """Valid (unpadded) stride-1 1-D convolution; weight (k, C_in, C_out)."""

    def __init__(self, name: str, c_in: int, c_out: int, k: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.name = name
        self.c_in, self.c_out, self.k = c_in, c_out, k
        self.weight = parameter(he_uniform((k, c_in, c_out), c_in * k, rng, dtype))
        self.bias = parameter(np.zeros(c_out, dtype=dtype))

    def out_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.c_in:
            raise ShapeError(f"{self.name}: expected (L,{self.c_in}), got {in_shape}")
        lo = in_shape[0] - self.k + 1
        if lo < 1:
            raise ShapeError(f"{self.name}: incoming length {in_shape[0]} < kernel {self.k}")
        return (lo, self.c_out)

    def __call__(self, x):
        return ops.conv1d(x, self.weight, self.bias)

    def params(self):
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]


class MaxPool1d(Layer):
    def __init__(self, name: str, k: int, s: int):
        self.name = name
        self.k, self.s = k, s

    def out_shape(self, in_shape):
        lo = (in_shape[0] - self.k) // self.s + 1
        if lo < 1:
            raise ShapeError(f"{self.name}: incoming length {in_shape[0]} < window {self.k}")
        return (lo, in_shape[1])

    def __call__(self, x):
        return ops.maxpool1d(x, self.k, self.s)


class Linear(Layer):
    """Affine layer; weight (F_in, F_out)."""

    def __init__(self, name: str, f_in: int, f_out: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.name = name
        self.f_in, self.f_out = f_in, f_out
        self.weight = parameter(he_uniform((f_in, f_out), f_in, rng, dtype))
        self.bias = parameter(np.zeros(f_out, dtype=dtype))

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.f_in:
            raise ShapeError(f"{self.name}: expected ({self.f_in},), got {in_shape}")
        return (self.f_out,)

    def __call__(self, x):
        return ops.linear(x, self.weight, self.bias)

    def params(self):
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]


class ReLU(Layer):
    def __init__(self, name: str = "relu"):
        self.name = name

    def out_shape(self, in_shape):
        return in_shape

    def __call__(self, x):
        return x.relu()


class Sigmoid(Layer):
    def __init__(self, name: str = "sigmoid"):
        self.name = name

    def out_shape(self, in_shape):
        return in_shape

    def __call__(self, x):
        return x.sigmoid()


class Flatten(Layer):
    def __init__(self, name: str = "flatten"):
        self.name = name

    def out_shape(self, in_shape):
        n = 1
        for d in in_shape:
            n *= d
        return (n,)

    def __call__(self, x):
        return x.reshape(x.shape[0], -1)


class Reshape(Layer):
    def __init__(self, name: str, target: tuple):
        self.name = name
        self.target = tuple(target)

    def out_shape(self, in_shape):
        n = 1
        for d in in_shape:
            n *= d
        m = 1
        for d in self.target:
            m *= d
        if n != m:
            raise ShapeError(f"{self.name}: cannot reshape {in_shape} to {self.target}")
        return self.target

    def __call__(self, x):
        return x.reshape((x.shape[0],) + self.target)


class Sequential:
    """A layer stack validated against a fixed per-sample input shape."""

    def __init__(self, input_shape: tuple, layers: list[Layer]):
        self.input_shape = tuple(input_shape)
        self.layers = layers
        self.shape_chain = [self.input_shape]
        shape = self.input_shape
        for layer in layers:
            shape = layer.out_shape(shape)
            self.shape_chain.append(shape)
        self.output_shape = shape

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def params(self) -> list[tuple[str, Tensor]]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out
