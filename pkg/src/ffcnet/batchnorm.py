"""Complex batch normalization by 2x2 covariance whitening.

Each complex activation is treated as a 2-vector (re, im).  Per channel,
over the batch x spatial population, the layer computes the mean and the
2x2 covariance V, whitens by the inverse principal square root of
V + eps*I, then applies a learnable symmetric PSD 2x2 scale and a complex
shift:

    out = Gamma @ (V + eps*I)^(-1/2) @ (z - mean) + beta

The inverse square root uses the closed form for 2x2 SPD matrices: with
A = V + eps*I, s = sqrt(det A) and t = sqrt(tr A + 2 s), the principal
square root is (A + s*I)/t, whose determinant is s.  This is branch-free
and differentiable, so the backward pass can chain through it exactly.

Packed symmetric storage everywhere: (m_rr, m_ii, m_ri).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dtypes import default_dtype
from .tensor import ComplexTensor, FfcnetError, ShapeMismatchError


class NotPositiveDefiniteError(FfcnetError, ValueError):
    pass


@dataclass
class ComplexBNParams:
    gamma: np.ndarray  # (C, 3): gamma_rr, gamma_ii, gamma_ri
    beta: np.ndarray  # (C, 2): real, imaginary shift
    running_mean: np.ndarray  # (C, 2)
    running_cov: np.ndarray  # (C, 3), packed like gamma
    momentum: float = 0.1
    epsilon: float = 1e-5


@dataclass
class BNGrads:
    gamma: np.ndarray  # (C, 3)
    beta: np.ndarray  # (C, 2)
    input: ComplexTensor


def init_bn(channels: int, momentum: float = 0.1, epsilon: float = 1e-5,
            dtype=None) -> ComplexBNParams:
    """gamma = (1/sqrt(2)) I so the post-BN complex variance is 1 split
    evenly between the planes; beta = 0."""
    dtype = default_dtype() if dtype is None else np.dtype(dtype)
    gamma = np.zeros((channels, 3), dtype=dtype)
    gamma[:, 0] = gamma[:, 1] = 1.0 / np.sqrt(2.0)
    beta = np.zeros((channels, 2), dtype=dtype)
    rmean = np.zeros((channels, 2), dtype=dtype)
    rcov = np.zeros((channels, 3), dtype=dtype)
    rcov[:, 0] = rcov[:, 1] = 1.0
    return ComplexBNParams(gamma, beta, rmean, rcov, momentum=momentum, epsilon=epsilon)


def check_gamma_psd(gamma: np.ndarray, tol: float = -1e-6):
    """Return per-channel indices where gamma is not PSD within tolerance."""
    g_rr, g_ii, g_ri = gamma[:, 0], gamma[:, 1], gamma[:, 2]
    det = g_rr * g_ii - g_ri * g_ri
    bad = (g_rr < tol) | (g_ii < tol) | (det < tol)
    return np.nonzero(bad)[0].tolist()


def _inv_sqrt_packed(a11, a12, a22):
    """Closed-form (A)^(-1/2) for packed SPD 2x2 matrices.

    Returns (r11, r12, r22, s, t, s11, s12, s22) where S = sqrt(A) and
    R = S^(-1); the extra factors feed the backward pass.
    """
    det = a11 * a22 - a12 * a12
    if np.any(det <= 0) or np.any(a11 + a22 <= 0):
        raise NotPositiveDefiniteError(
            "covariance + eps*I is not positive definite; epsilon too small or "
            "statistics corrupted"
        )
    s = np.sqrt(det)
    t = np.sqrt(a11 + a22 + 2.0 * s)
    s11 = (a11 + s) / t
    s12 = a12 / t
    s22 = (a22 + s) / t
    # inverse of S, using det(S) = s
    r11 = s22 / s
    r12 = -s12 / s
    r22 = s11 / s
    return r11, r12, r22, s, t, s11, s12, s22


def inv_sqrt_2x2(v: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Principal inverse square root of symmetric PSD matrices (..., 2, 2).

    The result R is symmetric positive definite and satisfies
    R @ (V + eps*I) @ R = I.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-2:] != (2, 2):
        raise ShapeMismatchError(f"inv_sqrt_2x2: expected (..., 2, 2), got {v.shape}")
    a11 = v[..., 0, 0] + eps
    a22 = v[..., 1, 1] + eps
    a12 = 0.5 * (v[..., 0, 1] + v[..., 1, 0])
    r11, r12, r22, *_ = _inv_sqrt_packed(a11, a12, a22)
    out = np.empty(v.shape, dtype=np.float64)
    out[..., 0, 0] = r11
    out[..., 0, 1] = r12
    out[..., 1, 0] = r12
    out[..., 1, 1] = r22
    return out


def _population_view(x: ComplexTensor):
    """(B, C, H, W) complex -> per-channel (C, N) planes, N = B*H*W."""
    b, c, h, w = x.shape
    zr = x.re.transpose(1, 0, 2, 3).reshape(c, b * h * w)
    zi = x.im.transpose(1, 0, 2, 3).reshape(c, b * h * w)
    return zr, zi


def _channel_stats(zr: np.ndarray, zi: np.ndarray):
    """Population mean (C, 2) and packed covariance (C, 3)."""
    mu_r = zr.mean(axis=1)
    mu_i = zi.mean(axis=1)
    cr = zr - mu_r[:, None]
    ci = zi - mu_i[:, None]
    v_rr = np.mean(cr * cr, axis=1)
    v_ii = np.mean(ci * ci, axis=1)
    v_ri = np.mean(cr * ci, axis=1)
    return mu_r, mu_i, cr, ci, v_rr, v_ii, v_ri


def complex_bn_forward(x: ComplexTensor, params: ComplexBNParams, training: bool) -> ComplexTensor:
    """Whiten, scale, shift.  Training mode uses batch statistics and updates
    the running ones in place; eval mode uses the running statistics."""
    b, c, h, w = x.shape
    if c != params.gamma.shape[0]:
        raise ShapeMismatchError(
            f"bn: input has {c} channels but params have {params.gamma.shape[0]}"
        )
    zr, zi = _population_view(x)
    n = zr.shape[1]
    if training:
        if n < 2:
            raise ShapeMismatchError(f"bn: training needs a population >= 2, got {n}")
        mu_r, mu_i, cr, ci, v_rr, v_ii, v_ri = _channel_stats(zr, zi)
        m = params.momentum
        params.running_mean[:, 0] = (1 - m) * params.running_mean[:, 0] + m * mu_r
        params.running_mean[:, 1] = (1 - m) * params.running_mean[:, 1] + m * mu_i
        params.running_cov[:, 0] = (1 - m) * params.running_cov[:, 0] + m * v_rr
        params.running_cov[:, 1] = (1 - m) * params.running_cov[:, 1] + m * v_ii
        params.running_cov[:, 2] = (1 - m) * params.running_cov[:, 2] + m * v_ri
    else:
        mu_r = params.running_mean[:, 0]
        mu_i = params.running_mean[:, 1]
        cr = zr - mu_r[:, None]
        ci = zi - mu_i[:, None]
        v_rr = params.running_cov[:, 0]
        v_ii = params.running_cov[:, 1]
        v_ri = params.running_cov[:, 2]

    eps = params.epsilon
    r11, r12, r22, *_ = _inv_sqrt_packed(v_rr + eps, v_ri, v_ii + eps)

    xt_r = r11[:, None] * cr + r12[:, None] * ci
    xt_i = r12[:, None] * cr + r22[:, None] * ci

    g_rr = params.gamma[:, 0][:, None]
    g_ii = params.gamma[:, 1][:, None]
    g_ri = params.gamma[:, 2][:, None]
    y_r = g_rr * xt_r + g_ri * xt_i + params.beta[:, 0][:, None]
    y_i = g_ri * xt_r + g_ii * xt_i + params.beta[:, 1][:, None]

    out_re = np.ascontiguousarray(y_r.reshape(c, b, h, w).transpose(1, 0, 2, 3))
    out_im = np.ascontiguousarray(y_i.reshape(c, b, h, w).transpose(1, 0, 2, 3))
    return ComplexTensor(out_re, out_im)


def complex_bn_backward(x: ComplexTensor, params: ComplexBNParams,
                        grad_out: ComplexTensor) -> BNGrads:
    """Exact reverse mode through mean, covariance, inverse square root, and
    the affine map, under the training-mode graph (statistics depend on x)."""
    if grad_out.shape != x.shape:
        raise ShapeMismatchError(
            f"bn backward: grad shape {grad_out.shape} != input {x.shape}"
        )
    b, c, h, w = x.shape
    zr, zi = _population_view(x)
    gr, gi = _population_view(grad_out)
    n = zr.shape[1]
    if n < 2:
        raise ShapeMismatchError(f"bn backward: population must be >= 2, got {n}")

    mu_r, mu_i, cr, ci, v_rr, v_ii, v_ri = _channel_stats(zr, zi)
    eps = params.epsilon
    a11 = v_rr + eps
    a12 = v_ri
    a22 = v_ii + eps
    r11, r12, r22, s, t, s11, s12, s22 = _inv_sqrt_packed(a11, a12, a22)

    xt_r = r11[:, None] * cr + r12[:, None] * ci
    xt_i = r12[:, None] * cr + r22[:, None] * ci

    g_rr = params.gamma[:, 0][:, None]
    g_ii = params.gamma[:, 1][:, None]
    g_ri = params.gamma[:, 2][:, None]

    # beta and gamma gradients (gamma_ri feeds both off-diagonal slots)
    g_beta = np.stack([gr.sum(axis=1), gi.sum(axis=1)], axis=1)
    g_gamma = np.stack(
        [
            np.sum(gr * xt_r, axis=1),
            np.sum(gi * xt_i, axis=1),
            np.sum(gr * xt_i + gi * xt_r, axis=1),
        ],
        axis=1,
    )

    # through the affine scale: H = Gamma @ G
    hr = g_rr * gr + g_ri * gi
    hi = g_ri * gr + g_ii * gi

    # adjoint w.r.t. R (only its symmetric part matters)
    m11 = np.sum(hr * cr, axis=1)
    m22 = np.sum(hi * ci, axis=1)
    m12 = 0.5 * (np.sum(hr * ci, axis=1) + np.sum(hi * cr, axis=1))

    # through R = S^(-1):  G_S = -R G_R R
    rm11 = r11 * m11 + r12 * m12
    rm12 = r11 * m12 + r12 * m22
    rm21 = r12 * m11 + r22 * m12
    rm22 = r12 * m12 + r22 * m22
    gs11 = -(rm11 * r11 + rm12 * r12)
    gs12 = -(rm11 * r12 + rm12 * r22)
    gs22 = -(rm21 * r12 + rm22 * r22)

    # through S = (A + s I)/t with s = sqrt(det A), t = sqrt(tr A + 2 s):
    #   dL/dA = G_S/t + (tr G_S)/t * ds/dA - <G_S, S>/t * dt/dA
    #   ds/dA = adj(A)/(2 s),  dt/dA = I/(2 t) + adj(A)/(2 s t)
    tr_gs = gs11 + gs22
    gs_dot_s = gs11 * s11 + gs22 * s22 + 2.0 * gs12 * s12
    ps11 = a22 / (2.0 * s)
    ps22 = a11 / (2.0 * s)
    ps12 = -a12 / (2.0 * s)
    pt11 = 1.0 / (2.0 * t) + ps11 / t
    pt22 = 1.0 / (2.0 * t) + ps22 / t
    pt12 = ps12 / t
    ga11 = gs11 / t + (tr_gs / t) * ps11 - (gs_dot_s / t) * pt11
    ga22 = gs22 / t + (tr_gs / t) * ps22 - (gs_dot_s / t) * pt22
    ga12 = gs12 / t + (tr_gs / t) * ps12 - (gs_dot_s / t) * pt12

    # through V = (1/N) sum c c^T and x_tilde = R c, then centering
    gc_r = r11[:, None] * hr + r12[:, None] * hi \
        + (2.0 / n) * (ga11[:, None] * cr + ga12[:, None] * ci)
    gc_i = r12[:, None] * hr + r22[:, None] * hi \
        + (2.0 / n) * (ga12[:, None] * cr + ga22[:, None] * ci)
    gz_r = gc_r - gc_r.mean(axis=1, keepdims=True)
    gz_i = gc_i - gc_i.mean(axis=1, keepdims=True)

    gx_re = np.ascontiguousarray(gz_r.reshape(c, b, h, w).transpose(1, 0, 2, 3))
    gx_im = np.ascontiguousarray(gz_i.reshape(c, b, h, w).transpose(1, 0, 2, 3))
    return BNGrads(gamma=g_gamma, beta=g_beta, input=ComplexTensor(gx_re, gx_im))
