"""Dense real and complex tensors with split storage.

A complex tensor is stored as two real planes (re, im) of identical shape,
so every complex operation decomposes into real-array arithmetic and real
library kernels can be reused verbatim.  Real tensors are plain numpy
arrays; :class:`ComplexTensor` is a thin pair wrapper.

Tensors are treated as immutable once constructed: operations allocate
fresh outputs and never write into their arguments.  Activations use
row-major (batch, channel, height, width) layout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dtypes import default_dtype


class FfcnetError(Exception):
    """Base class for errors raised by this package."""


class ShapeMismatchError(FfcnetError, ValueError):
    """Operands have incompatible shapes."""


def _require_same_shape(op: str, x: "ComplexTensor", y: "ComplexTensor") -> None:
    if x.shape != y.shape:
        raise ShapeMismatchError(f"{op}: operand shapes differ: {x.shape} vs {y.shape}")


@dataclass
class ComplexTensor:
    """Split-storage complex array: two equally shaped real planes."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        self.re = np.asarray(self.re)
        self.im = np.asarray(self.im)
        if self.re.shape != self.im.shape:
            raise ShapeMismatchError(
                f"ComplexTensor: re shape {self.re.shape} != im shape {self.im.shape}"
            )

    @property
    def shape(self) -> tuple:
        return self.re.shape

    @property
    def ndim(self) -> int:
        return self.re.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.re.dtype

    def copy(self) -> "ComplexTensor":
        return ComplexTensor(self.re.copy(), self.im.copy())

    def astype(self, dtype) -> "ComplexTensor":
        return ComplexTensor(self.re.astype(dtype), self.im.astype(dtype))

    def to_complex(self) -> np.ndarray:
        """Interleaved numpy complex view, mainly for tests and inspection."""
        return self.re.astype(np.float64) + 1j * self.im.astype(np.float64)


def czeros(shape, dtype=None) -> ComplexTensor:
    dt = default_dtype() if dtype is None else np.dtype(dtype)
    return ComplexTensor(np.zeros(shape, dtype=dt), np.zeros(shape, dtype=dt))


def from_real(real: np.ndarray) -> ComplexTensor:
    """Lift a real array to a complex tensor with zero imaginary plane."""
    real = np.asarray(real)
    return ComplexTensor(real, np.zeros_like(real))


def from_complex(z: np.ndarray, dtype=None) -> ComplexTensor:
    """Split an interleaved numpy complex array into (re, im) planes."""
    dt = default_dtype() if dtype is None else np.dtype(dtype)
    z = np.asarray(z)
    return ComplexTensor(z.real.astype(dt), z.imag.astype(dt))


def add(x: ComplexTensor, y: ComplexTensor) -> ComplexTensor:
    _require_same_shape("add", x, y)
    return ComplexTensor(x.re + y.re, x.im + y.im)


def sub(x: ComplexTensor, y: ComplexTensor) -> ComplexTensor:
    _require_same_shape("sub", x, y)
    return ComplexTensor(x.re - y.re, x.im - y.im)


def cmul(x: ComplexTensor, y: ComplexTensor) -> ComplexTensor:
    """Elementwise complex product: (a+bi)(c+di) = (ac - bd) + (ad + bc)i."""
    _require_same_shape("cmul", x, y)
    return ComplexTensor(
        x.re * y.re - x.im * y.im,
        x.re * y.im + x.im * y.re,
    )


def scale(x: ComplexTensor, factor: float) -> ComplexTensor:
    return ComplexTensor(x.re * factor, x.im * factor)


def magnitude(x: ComplexTensor) -> np.ndarray:
    """Elementwise modulus sqrt(re^2 + im^2), always >= 0."""
    return np.hypot(x.re, x.im)


def reshape(x: ComplexTensor, shape) -> ComplexTensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != x.re.size:
        raise ShapeMismatchError(
            f"reshape: cannot view {x.shape} ({x.re.size} elements) as {shape}"
        )
    return ComplexTensor(x.re.reshape(shape), x.im.reshape(shape))


def slice_axis(x: ComplexTensor, axis: int, start: int, stop: int) -> ComplexTensor:
    n = x.shape[axis]
    if not (0 <= start <= stop <= n):
        raise ShapeMismatchError(
            f"slice_axis: [{start}:{stop}] out of bounds for axis {axis} of length {n}"
        )
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    return ComplexTensor(x.re[index].copy(), x.im[index].copy())


def concat_channels(parts: list, axis: int = 0) -> ComplexTensor:
    if not parts:
        raise ValueError("concat_channels: empty input list")
    return ComplexTensor(
        np.concatenate([p.re for p in parts], axis=axis),
        np.concatenate([p.im for p in parts], axis=axis),
    )
