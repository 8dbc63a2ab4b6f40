import numpy as np
import pytest

from conftest import numeric_grad, rel_err

from ffcnet import layers as L
from ffcnet.tensor import ComplexTensor, ShapeMismatchError


def conv_oracle(x: ComplexTensor, params: L.ComplexConvParams) -> ComplexTensor:
    """Quadruple-loop complex convolution; no shared code with the fast path.

    (a+bi) * (c+di) decomposition done on scalars, one output element at a
    time, straight from the cross-correlation definition.
    """
    b, cin, h, w = x.shape
    cout, cin_k, kh, kw = params.kernel_re.shape
    assert cin == cin_k
    s, pad = params.stride, params.padding
    ho = (h + 2 * pad - kh) // s + 1
    wo = (w + 2 * pad - kw) // s + 1
    out_re = np.zeros((b, cout, ho, wo))
    out_im = np.zeros((b, cout, ho, wo))
    for bi in range(b):
        for oc in range(cout):
            for oy in range(ho):
                for ox in range(wo):
                    acc_re = acc_im = 0.0
                    for ic in range(cin):
                        for ky in range(kh):
                            for kx in range(kw):
                                iy = oy * s + ky - pad
                                ix = ox * s + kx - pad
                                if 0 <= iy < h and 0 <= ix < w:
                                    a = x.re[bi, ic, iy, ix]
                                    bb = x.im[bi, ic, iy, ix]
                                    c = params.kernel_re[oc, ic, ky, kx]
                                    d = params.kernel_im[oc, ic, ky, kx]
                                    acc_re += a * c - bb * d
                                    acc_im += bb * c + a * d
                    if params.bias_re is not None:
                        acc_re += params.bias_re[oc]
                        acc_im += params.bias_im[oc]
                    out_re[bi, oc, oy, ox] = acc_re
                    out_im[bi, oc, oy, ox] = acc_im
    return ComplexTensor(out_re, out_im)


def randc(shape, seed):
    rng = np.random.default_rng(seed)
    return ComplexTensor(rng.standard_normal(shape), rng.standard_normal(shape))


def make_conv(cin, cout, k, stride, padding, seed, bias=True):
    rng = np.random.default_rng(seed)
    return L.ComplexConvParams(
        kernel_re=rng.standard_normal((cout, cin, k, k)),
        kernel_im=rng.standard_normal((cout, cin, k, k)),
        bias_re=rng.standard_normal(cout) if bias else None,
        bias_im=rng.standard_normal(cout) if bias else None,
        stride=stride,
        padding=padding,
    )


CONV_CONFIGS = [
    # (cin, cout, k, stride, padding, h, w, batch)
    (1, 1, 1, 1, 0, 4, 4, 1),
    (1, 2, 3, 1, 1, 5, 5, 2),
    (2, 3, 3, 2, 1, 6, 8, 2),
    (3, 2, 1, 2, 0, 4, 4, 1),
    (2, 2, 3, 1, 0, 7, 5, 3),
    (1, 4, 5, 2, 2, 8, 8, 2),
    (4, 1, 3, 3, 1, 9, 9, 1),
]


@pytest.mark.parametrize("cin,cout,k,stride,padding,h,w,batch", CONV_CONFIGS)
def test_conv_matches_quadruple_loop(cin, cout, k, stride, padding, h, w, batch):
    x = randc((batch, cin, h, w), seed=hash((cin, cout, k)) % 1000)
    params = make_conv(cin, cout, k, stride, padding, seed=cin * 10 + cout)
    fast = L.complex_conv2d(x, params)
    slow = conv_oracle(x, params)
    assert fast.shape == slow.shape
    assert np.max(np.abs(fast.re - slow.re)) <= 1e-10
    assert np.max(np.abs(fast.im - slow.im)) <= 1e-10


def test_conv_no_bias():
    x = randc((1, 2, 4, 4), seed=42)
    params = make_conv(2, 2, 3, 1, 1, seed=43, bias=False)
    fast = L.complex_conv2d(x, params)
    slow = conv_oracle(x, params)
    assert np.max(np.abs(fast.re - slow.re)) <= 1e-10


def test_conv_channel_mismatch_error():
    x = randc((1, 3, 4, 4), seed=1)
    params = make_conv(2, 2, 3, 1, 1, seed=2)
    with pytest.raises(ShapeMismatchError):
        L.complex_conv2d(x, params)


def weighted_loss(out: ComplexTensor, wr, wi) -> float:
    return float(np.sum(out.re * wr) + np.sum(out.im * wi))


def test_conv_backward_matches_finite_differences():
    x = randc((2, 2, 5, 5), seed=10)
    params = make_conv(2, 3, 3, 2, 1, seed=11)
    out = L.complex_conv2d(x, params)
    rng = np.random.default_rng(12)
    wr = rng.standard_normal(out.shape)
    wi = rng.standard_normal(out.shape)
    grads = L.complex_conv2d_backward(x, params, ComplexTensor(wr, wi))

    def loss():
        return weighted_loss(L.complex_conv2d(x, params), wr, wi)

    for arr, got in [
        (params.kernel_re, grads.kernel_re),
        (params.kernel_im, grads.kernel_im),
        (params.bias_re, grads.bias_re),
        (params.bias_im, grads.bias_im),
        (x.re, grads.input.re),
        (x.im, grads.input.im),
    ]:
        assert rel_err(got, numeric_grad(loss, arr)) < 1e-7


def test_init_conv_variance():
    rng = np.random.default_rng(0)
    params = L.init_conv(64, 64, 3, rng)
    fan_in = 64 * 9
    # each plane targets var 1/(2 fan_in) so |w|^2 has var 1/fan_in
    for plane in (params.kernel_re, params.kernel_im):
        assert np.var(plane) == pytest.approx(1.0 / (2 * fan_in), rel=0.1)
    assert params.bias_re is None


def test_relu_and_backward():
    x = ComplexTensor(np.array([[-1.0, 2.0]]), np.array([[3.0, -4.0]]))
    y = L.complex_relu(x)
    assert y.re.tolist() == [[0.0, 2.0]]
    assert y.im.tolist() == [[3.0, 0.0]]
    g = L.complex_relu_backward(x, ComplexTensor(np.ones((1, 2)), np.ones((1, 2))))
    assert g.re.tolist() == [[0.0, 1.0]]
    assert g.im.tolist() == [[1.0, 0.0]]


def test_relu_subgradient_at_zero_is_zero():
    x = ComplexTensor(np.zeros((1, 1)), np.zeros((1, 1)))
    g = L.complex_relu_backward(x, ComplexTensor(np.full((1, 1), 5.0), np.full((1, 1), 5.0)))
    assert g.re[0, 0] == 0.0 and g.im[0, 0] == 0.0


def test_relu_backward_matches_fd_away_from_kink():
    x = randc((2, 3, 4, 4), seed=20)
    # keep values away from 0 so central differences are valid
    x.re[np.abs(x.re) < 0.1] += 0.2
    x.im[np.abs(x.im) < 0.1] += 0.2
    rng = np.random.default_rng(21)
    wr = rng.standard_normal(x.shape)
    wi = rng.standard_normal(x.shape)
    got = L.complex_relu_backward(x, ComplexTensor(wr, wi))

    def loss():
        return weighted_loss(L.complex_relu(x), wr, wi)

    assert rel_err(got.re, numeric_grad(loss, x.re)) < 1e-7
    assert rel_err(got.im, numeric_grad(loss, x.im)) < 1e-7


def test_avg_pool_forward_and_backward():
    x = randc((2, 2, 4, 4), seed=30)
    y = L.complex_avg_pool(x, 2)
    assert y.shape == (2, 2, 2, 2)
    assert y.re[0, 0, 0, 0] == pytest.approx(np.mean(x.re[0, 0, :2, :2]))
    rng = np.random.default_rng(31)
    wr = rng.standard_normal(y.shape)
    wi = rng.standard_normal(y.shape)
    got = L.complex_avg_pool_backward(x, 2, ComplexTensor(wr, wi))

    def loss():
        return weighted_loss(L.complex_avg_pool(x, 2), wr, wi)

    assert rel_err(got.re, numeric_grad(loss, x.re)) < 1e-7


def test_global_avg_pool():
    x = randc((2, 3, 4, 4), seed=40)
    y = L.global_avg_pool(x)
    assert y.shape == (2, 3)
    assert y.re[1, 2] == pytest.approx(np.mean(x.re[1, 2]))
    rng = np.random.default_rng(41)
    wr = rng.standard_normal(y.shape)
    wi = rng.standard_normal(y.shape)
    got = L.global_avg_pool_backward(x, ComplexTensor(wr, wi))

    def loss():
        return weighted_loss(L.global_avg_pool(x), wr, wi)

    assert rel_err(got.re, numeric_grad(loss, x.re)) < 1e-7
    assert rel_err(got.im, numeric_grad(loss, x.im)) < 1e-7


@pytest.mark.parametrize("mode", L.BRIDGE_MODES)
def test_bridge_modes_shapes_and_grads(mode):
    x = randc((3, 5), seed=50)
    # keep magnitudes clear of zero for the FD check
    feats = L.bridge_forward(x, mode)
    assert feats.shape == (3, L.bridge_features(5, mode))
    rng = np.random.default_rng(51)
    w = rng.standard_normal(feats.shape)
    got = L.bridge_backward(x, mode, w)

    def loss():
        return float(np.sum(L.bridge_forward(x, mode) * w))

    assert rel_err(got.re, numeric_grad(loss, x.re)) < 1e-6
    assert rel_err(got.im, numeric_grad(loss, x.im)) < 1e-6


def test_magnitude_bridge_values():
    x = ComplexTensor(np.array([[3.0]]), np.array([[4.0]]))
    assert L.bridge_forward(x, "magnitude")[0, 0] == pytest.approx(5.0)
    assert L.bridge_forward(x, "real")[0, 0] == pytest.approx(3.0)
    both = L.bridge_forward(x, "concat")
    assert both.tolist() == [[3.0, 4.0]]


def test_magnitude_bridge_zero_input_zero_grad():
    x = ComplexTensor(np.zeros((1, 1)), np.zeros((1, 1)))
    g = L.bridge_backward(x, "magnitude", np.ones((1, 1)))
    assert g.re[0, 0] == 0.0 and g.im[0, 0] == 0.0


def test_linear_forward_and_backward():
    rng = np.random.default_rng(60)
    params = L.init_linear(6, 4, rng)
    x = rng.standard_normal((3, 6))
    y = L.linear_real(x, params)
    assert y.shape == (3, 4)
    assert np.allclose(y, x @ params.weight + params.bias)
    w = rng.standard_normal((3, 4))
    grads = L.linear_real_backward(x, params, w)

    def loss():
        return float(np.sum(L.linear_real(x, params) * w))

    assert rel_err(grads.weight, numeric_grad(loss, params.weight)) < 1e-7
    assert rel_err(grads.bias, numeric_grad(loss, params.bias)) < 1e-7
    assert rel_err(grads.input, numeric_grad(loss, x)) < 1e-7
