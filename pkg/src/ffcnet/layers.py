"""Complex-valued layers: convolution, ReLU, pooling, and the real head.

Complex convolution realizes one complex kernel bank Q = c + di as two real
banks and four real cross-correlations:

    out_re = conv(a, c) - conv(b, d)
    out_im = conv(a, d) + conv(b, c)

for input P = a + bi.  Complex ReLU clips the real and imaginary planes
independently.  All backward passes are split-real reverse mode: the two
planes are treated as independent real channels, which is exact for a
real-valued final loss.  Gradients at the ReLU kink are fixed to 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dtypes import default_dtype
from .tensor import ComplexTensor, ShapeMismatchError, magnitude

BRIDGE_MODES = ("magnitude", "real", "concat")


# ---------------------------------------------------------------------------
# real convolution plumbing (im2col / col2im)

def _conv_out_dim(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    """Gather conv patches of (B, C, H, W) into columns (B, C*kh*kw, Ho*Wo)."""
    b, c, h, w = x.shape
    ho = _conv_out_dim(h, kh, stride, pad)
    wo = _conv_out_dim(w, kw, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeMismatchError(
            f"conv: kernel {kh}x{kw} stride {stride} pad {pad} does not fit input {h}x{w}"
        )
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((b, c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride]
    return cols.reshape(b, c * kh * kw, ho * wo), ho, wo


def _col2im(cols: np.ndarray, xshape, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add columns back to the input layout; adjoint of _im2col."""
    b, c, h, w = xshape
    ho = _conv_out_dim(h, kh, stride, pad)
    wo = _conv_out_dim(w, kw, stride, pad)
    out = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols = cols.reshape(b, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(out)


# ---------------------------------------------------------------------------
# complex convolution

@dataclass
class ComplexConvParams:
    """Two real kernel banks simulating one complex bank Q = c + di."""

    kernel_re: np.ndarray  # (Cout, Cin, k, k)
    kernel_im: np.ndarray
    bias_re: np.ndarray | None = None  # (Cout,)
    bias_im: np.ndarray | None = None
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kernel_re.shape != self.kernel_im.shape:
            raise ShapeMismatchError(
                f"conv params: kernel bank shapes differ: "
                f"{self.kernel_re.shape} vs {self.kernel_im.shape}"
            )


@dataclass
class ConvGrads:
    kernel_re: np.ndarray
    kernel_im: np.ndarray
    bias_re: np.ndarray | None
    bias_im: np.ndarray | None
    input: ComplexTensor


def init_conv(
    cin: int,
    cout: int,
    k: int,
    rng: np.random.Generator,
    stride: int = 1,
    padding: int = 0,
    bias: bool = False,
    dtype=None,
) -> ComplexConvParams:
    """He-style init: each bank gets variance 1/(2*fan_in) so the complex
    kernel's expected squared magnitude matches 1/fan_in scaling."""
    dtype = default_dtype() if dtype is None else np.dtype(dtype)
    fan_in = cin * k * k
    std = np.sqrt(1.0 / (2.0 * fan_in))
    shape = (cout, cin, k, k)
    kr = rng.normal(0.0, std, size=shape).astype(dtype)
    ki = rng.normal(0.0, std, size=shape).astype(dtype)
    br = np.zeros(cout, dtype=dtype) if bias else None
    bi = np.zeros(cout, dtype=dtype) if bias else None
    return ComplexConvParams(kr, ki, br, bi, stride=stride, padding=padding)


def conv_output_shape(xshape, params: ComplexConvParams):
    b, c, h, w = xshape
    cout, cin, kh, kw = params.kernel_re.shape
    if c != cin:
        raise ShapeMismatchError(
            f"conv: input has {c} channels but kernels expect {cin}"
        )
    ho = _conv_out_dim(h, kh, params.stride, params.padding)
    wo = _conv_out_dim(w, kw, params.stride, params.padding)
    return b, cout, ho, wo


def complex_conv2d(x: ComplexTensor, params: ComplexConvParams) -> ComplexTensor:
    b, cout, ho, wo = conv_output_shape(x.shape, params)
    _, cin, kh, kw = params.kernel_re.shape
    cols_a, _, _ = _im2col(x.re, kh, kw, params.stride, params.padding)
    cols_b, _, _ = _im2col(x.im, kh, kw, params.stride, params.padding)
    wc = params.kernel_re.reshape(cout, cin * kh * kw)
    wd = params.kernel_im.reshape(cout, cin * kh * kw)
    out_re = np.matmul(wc, cols_a) - np.matmul(wd, cols_b)
    out_im = np.matmul(wd, cols_a) + np.matmul(wc, cols_b)
    if params.bias_re is not None:
        out_re += params.bias_re[:, None]
        out_im += params.bias_im[:, None]
    return ComplexTensor(
        out_re.reshape(b, cout, ho, wo),
        out_im.reshape(b, cout, ho, wo),
    )


def complex_conv2d_backward(
    x: ComplexTensor, params: ComplexConvParams, grad_out: ComplexTensor
) -> ConvGrads:
    out_shape = conv_output_shape(x.shape, params)
    if grad_out.shape != out_shape:
        raise ShapeMismatchError(
            f"conv backward: grad shape {grad_out.shape} != forward output {out_shape}"
        )
    b, cout, ho, wo = out_shape
    _, cin, kh, kw = params.kernel_re.shape
    ck = cin * kh * kw
    cols_a, _, _ = _im2col(x.re, kh, kw, params.stride, params.padding)
    cols_b, _, _ = _im2col(x.im, kh, kw, params.stride, params.padding)
    gr = grad_out.re.reshape(b, cout, ho * wo)
    gi = grad_out.im.reshape(b, cout, ho * wo)
    wc = params.kernel_re.reshape(cout, ck)
    wd = params.kernel_im.reshape(cout, ck)

    # out_re = wc.a - wd.b ; out_im = wd.a + wc.b
    axes = ([0, 2], [0, 2])  # sum over batch and spatial position
    g_wc = np.tensordot(gr, cols_a, axes) + np.tensordot(gi, cols_b, axes)
    g_wd = np.tensordot(gi, cols_a, axes) - np.tensordot(gr, cols_b, axes)

    g_cols_a = np.matmul(wc.T, gr) + np.matmul(wd.T, gi)
    g_cols_b = np.matmul(wc.T, gi) - np.matmul(wd.T, gr)
    gx_re = _col2im(g_cols_a, x.shape, kh, kw, params.stride, params.padding)
    gx_im = _col2im(g_cols_b, x.shape, kh, kw, params.stride, params.padding)

    if params.bias_re is not None:
        g_br = gr.sum(axis=(0, 2))
        g_bi = gi.sum(axis=(0, 2))
    else:
        g_br = g_bi = None
    return ConvGrads(
        kernel_re=g_wc.reshape(params.kernel_re.shape),
        kernel_im=g_wd.reshape(params.kernel_im.shape),
        bias_re=g_br,
        bias_im=g_bi,
        input=ComplexTensor(gx_re, gx_im),
    )


# ---------------------------------------------------------------------------
# complex ReLU

def complex_relu(x: ComplexTensor) -> ComplexTensor:
    """ReLU(a) + ReLU(b)i, clipping each plane independently."""
    return ComplexTensor(np.maximum(x.re, 0), np.maximum(x.im, 0))


def complex_relu_backward(x: ComplexTensor, grad_out: ComplexTensor) -> ComplexTensor:
    if grad_out.shape != x.shape:
        raise ShapeMismatchError(
            f"relu backward: grad shape {grad_out.shape} != input {x.shape}"
        )
    return ComplexTensor(
        np.where(x.re > 0, grad_out.re, 0),
        np.where(x.im > 0, grad_out.im, 0),
    )


# ---------------------------------------------------------------------------
# pooling

def complex_avg_pool(x: ComplexTensor, window: int) -> ComplexTensor:
    """Mean over non-overlapping window x window blocks, per plane."""
    b, c, h, w = x.shape
    if h % window or w % window:
        raise ShapeMismatchError(
            f"avg_pool: window {window} does not divide spatial dims {h}x{w}"
        )
    ho, wo = h // window, w // window

    def pool(plane):
        return plane.reshape(b, c, ho, window, wo, window).mean(axis=(3, 5))

    return ComplexTensor(pool(x.re), pool(x.im))


def complex_avg_pool_backward(x: ComplexTensor, window: int, grad_out: ComplexTensor) -> ComplexTensor:
    b, c, h, w = x.shape
    ho, wo = h // window, w // window
    if grad_out.shape != (b, c, ho, wo):
        raise ShapeMismatchError(
            f"avg_pool backward: grad shape {grad_out.shape} != {(b, c, ho, wo)}"
        )
    scale = 1.0 / (window * window)

    def spread(g):
        g = (g * scale)[:, :, :, None, :, None]
        return np.broadcast_to(g, (b, c, ho, window, wo, window)).reshape(b, c, h, w).copy()

    return ComplexTensor(spread(grad_out.re), spread(grad_out.im))


def global_avg_pool(x: ComplexTensor) -> ComplexTensor:
    """Mean over all spatial positions: (B, C, H, W) -> (B, C)."""
    return ComplexTensor(x.re.mean(axis=(2, 3)), x.im.mean(axis=(2, 3)))


def global_avg_pool_backward(x: ComplexTensor, grad_out: ComplexTensor) -> ComplexTensor:
    b, c, h, w = x.shape
    if grad_out.shape != (b, c):
        raise ShapeMismatchError(
            f"global pool backward: grad shape {grad_out.shape} != {(b, c)}"
        )
    scale = 1.0 / (h * w)
    gre = np.broadcast_to((grad_out.re * scale)[:, :, None, None], x.shape).copy()
    gim = np.broadcast_to((grad_out.im * scale)[:, :, None, None], x.shape).copy()
    return ComplexTensor(gre, gim)


# ---------------------------------------------------------------------------
# complex -> real bridge

def bridge_forward(x: ComplexTensor, mode: str) -> np.ndarray:
    """Turn complex features (B, F) into real features for the classifier."""
    if mode == "magnitude":
        return magnitude(x)
    if mode == "real":
        return x.re.copy()
    if mode == "concat":
        return np.concatenate([x.re, x.im], axis=1)
    raise ValueError(f"bridge: unknown mode {mode!r}, expected one of {BRIDGE_MODES}")


def bridge_backward(x: ComplexTensor, mode: str, grad_out: np.ndarray) -> ComplexTensor:
    if mode == "magnitude":
        mag = magnitude(x)
        safe = np.where(mag > 0, mag, 1.0)
        # modulus is non-differentiable at 0; subgradient fixed to 0 there
        g = np.where(mag > 0, grad_out / safe, 0.0)
        return ComplexTensor(g * x.re, g * x.im)
    if mode == "real":
        return ComplexTensor(grad_out.copy(), np.zeros_like(grad_out))
    if mode == "concat":
        f = x.shape[1]
        return ComplexTensor(grad_out[:, :f].copy(), grad_out[:, f:].copy())
    raise ValueError(f"bridge: unknown mode {mode!r}, expected one of {BRIDGE_MODES}")


def bridge_features(channels: int, mode: str) -> int:
    return 2 * channels if mode == "concat" else channels


# ---------------------------------------------------------------------------
# real linear head

@dataclass
class LinearParams:
    weight: np.ndarray  # (F, O)
    bias: np.ndarray  # (O,)


@dataclass
class LinearGrads:
    weight: np.ndarray
    bias: np.ndarray
    input: np.ndarray


def init_linear(fin: int, fout: int, rng: np.random.Generator, dtype=None) -> LinearParams:
    dtype = default_dtype() if dtype is None else np.dtype(dtype)
    std = np.sqrt(1.0 / fin)
    w = rng.normal(0.0, std, size=(fin, fout)).astype(dtype)
    b = np.zeros(fout, dtype=dtype)
    return LinearParams(w, b)


def linear_real(x: np.ndarray, params: LinearParams) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != params.weight.shape[0]:
        raise ShapeMismatchError(
            f"linear: input shape {x.shape} incompatible with weight {params.weight.shape}"
        )
    return x @ params.weight + params.bias


def linear_real_backward(x: np.ndarray, params: LinearParams, grad_out: np.ndarray) -> LinearGrads:
    if grad_out.shape != (x.shape[0], params.weight.shape[1]):
        raise ShapeMismatchError(
            f"linear backward: grad shape {grad_out.shape} != "
            f"{(x.shape[0], params.weight.shape[1])}"
        )
    return LinearGrads(
        weight=x.T @ grad_out,
        bias=grad_out.sum(axis=0),
        input=grad_out @ params.weight.T,
    )
