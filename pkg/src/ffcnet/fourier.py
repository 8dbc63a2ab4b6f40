"""2D discrete Fourier transforms on split-storage complex tensors.

Two routes with one mathematical contract:

* :func:`dft2_naive` evaluates the defining double sum
  ``F(u,v) = sum_{x,y} f(x,y) * exp(-j*2*pi*(u*x/H + v*y/W))``
  directly in O(H^2 W^2).  It works for any dimensions and serves as the
  correctness oracle.
* :func:`fft2` is the radix-2 Cooley-Tukey fast path, restricted to
  power-of-two dimensions.

Both transform the last two axes, so a stack of patches transforms in one
call.  The inverse carries the 1/(H*W) normalization.
"""
from __future__ import annotations

import numpy as np

from .tensor import ComplexTensor, FfcnetError


class TransformSizeError(FfcnetError, ValueError):
    """Dimensions not supported by the fast transform."""


def _require_pow2(n: int, what: str) -> None:
    if n < 1 or (n & (n - 1)) != 0:
        raise TransformSizeError(
            f"fft2: {what} = {n} is not a power of two; resize the image so "
            f"patch dimensions are powers of two, or use dft2_naive"
        )


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev = (rev << 1) | ((idx >> b) & 1)
    return rev


def _fft_last_axis(re: np.ndarray, im: np.ndarray, sign: float):
    """Iterative radix-2 transform along the last axis, batched over the rest."""
    n = re.shape[-1]
    if n == 1:
        return re.copy(), im.copy()
    order = _bit_reverse_indices(n)
    re = np.ascontiguousarray(re[..., order])
    im = np.ascontiguousarray(im[..., order])
    size = 2
    while size <= n:
        half = size // 2
        ang = sign * 2.0 * np.pi * np.arange(half) / size
        wr = np.cos(ang).astype(re.dtype)
        wi = np.sin(ang).astype(re.dtype)
        shape = re.shape[:-1] + (n // size, size)
        re_v = re.reshape(shape)
        im_v = im.reshape(shape)
        or_ = re_v[..., half:]
        oi_ = im_v[..., half:]
        tr = or_ * wr - oi_ * wi
        ti = or_ * wi + oi_ * wr
        # butterflies: (even, odd) -> (even + t, even - t); the subtraction
        # must be formed before the in-place update of the even half
        hi_r = re_v[..., :half] - tr
        hi_i = im_v[..., :half] - ti
        re_v[..., :half] += tr
        im_v[..., :half] += ti
        re_v[..., half:] = hi_r
        im_v[..., half:] = hi_i
        size *= 2
    return re, im


def _fft2_arrays(re: np.ndarray, im: np.ndarray, sign: float):
    re, im = _fft_last_axis(re, im, sign)
    re = re.swapaxes(-1, -2)
    im = im.swapaxes(-1, -2)
    re, im = _fft_last_axis(re, im, sign)
    return re.swapaxes(-1, -2), im.swapaxes(-1, -2)


def fft2(x: ComplexTensor) -> ComplexTensor:
    """Forward 2D FFT over the last two axes.  Dims must be powers of two."""
    if x.ndim < 2:
        raise TransformSizeError(f"fft2: need at least 2 dims, got shape {x.shape}")
    h, w = x.shape[-2], x.shape[-1]
    _require_pow2(h, "height")
    _require_pow2(w, "width")
    re, im = _fft2_arrays(x.re, x.im, sign=-1.0)
    return ComplexTensor(re, im)


def idft2(x: ComplexTensor) -> ComplexTensor:
    """Inverse of :func:`fft2`, with 1/(H*W) normalization."""
    if x.ndim < 2:
        raise TransformSizeError(f"idft2: need at least 2 dims, got shape {x.shape}")
    h, w = x.shape[-2], x.shape[-1]
    _require_pow2(h, "height")
    _require_pow2(w, "width")
    re, im = _fft2_arrays(x.re, x.im, sign=+1.0)
    norm = 1.0 / (h * w)
    return ComplexTensor(re * norm, im * norm)


def dft2_naive(x: ComplexTensor) -> ComplexTensor:
    """Direct evaluation of the 2D DFT double sum over the last two axes.

    O(H^2 W^2) per image; any dimensions.  This is the reference the fast
    path is checked against.
    """
    if x.ndim < 2:
        raise TransformSizeError(f"dft2_naive: need at least 2 dims, got shape {x.shape}")
    h, w = x.shape[-2], x.shape[-1]
    rows = np.arange(h).reshape(h, 1)
    cols = np.arange(w).reshape(1, w)
    out_re = np.empty_like(x.re)
    out_im = np.empty_like(x.im)
    for u in range(h):
        for v in range(w):
            ang = -2.0 * np.pi * (u * rows / h + v * cols / w)
            c = np.cos(ang)
            s = np.sin(ang)
            out_re[..., u, v] = np.sum(x.re * c - x.im * s, axis=(-2, -1))
            out_im[..., u, v] = np.sum(x.re * s + x.im * c, axis=(-2, -1))
    return ComplexTensor(out_re, out_im)
