"""Residual complex classifier assembled from the layer primitives.

Backbone shape follows the classic residual recipe: a stem convolution,
stages of residual blocks (each block: two 3x3 complex convolutions with
complex BN plus one connection path, post-activation ordering), a global
complex average pool, a complex-to-real bridge, and a real linear head.

Two stock architectures: a full 18-layer shape (stages 2-2-2-2) and a
"mini" desk-scale variant (one block per stage, 16/32/64 channels).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from .batchnorm import (
    BNGrads,
    ComplexBNParams,
    complex_bn_backward,
    complex_bn_forward,
    init_bn,
)
from .dtypes import default_dtype
from .rng import derive_rng
from .tensor import ComplexTensor, ShapeMismatchError, add


@dataclass(frozen=True)
class ArchitectureSpec:
    in_channels: int
    num_classes: int
    stem_channels: int = 16
    stem_kernel: int = 3
    stem_stride: int = 1
    stages: tuple = ((1, 16, 1), (1, 32, 2), (1, 64, 2))
    bridge: str = "magnitude"

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"architecture: num_classes must be >= 2, got {self.num_classes}")
        if self.in_channels < 1 or self.stem_channels < 1:
            raise ValueError("architecture: channel counts must be positive")
        if self.stem_kernel % 2 == 0:
            raise ValueError(f"architecture: stem kernel must be odd, got {self.stem_kernel}")
        prev = 0
        for blocks, channels, stride in self.stages:
            if blocks < 1 or channels < 1 or stride < 1:
                raise ValueError(f"architecture: bad stage spec {(blocks, channels, stride)}")
            if channels < prev:
                raise ValueError("architecture: stage channels must be non-decreasing")
            prev = channels
        if self.bridge not in L.BRIDGE_MODES:
            raise ValueError(
                f"architecture: bridge must be one of {L.BRIDGE_MODES}, got {self.bridge!r}"
            )


def mini_spec(in_channels: int, num_classes: int = 4, bridge: str = "magnitude") -> ArchitectureSpec:
    return ArchitectureSpec(in_channels=in_channels, num_classes=num_classes, bridge=bridge)


def resnet18_spec(in_channels: int, num_classes: int = 4, bridge: str = "magnitude") -> ArchitectureSpec:
    return ArchitectureSpec(
        in_channels=in_channels,
        num_classes=num_classes,
        stem_channels=64,
        stem_kernel=7,
        stem_stride=2,
        stages=((2, 64, 1), (2, 128, 2), (2, 256, 2), (2, 512, 2)),
        bridge=bridge,
    )


class ConvUnit:
    def __init__(self, name: str, params: L.ComplexConvParams):
        self.name = name
        self.params = params
        self._x = None
        self.grads: L.ConvGrads | None = None

    def forward(self, x: ComplexTensor, training: bool) -> ComplexTensor:
        if training:
            self._x = x
        return L.complex_conv2d(x, self.params)

    def backward(self, grad: ComplexTensor) -> ComplexTensor:
        self.grads = L.complex_conv2d_backward(self._x, self.params, grad)
        return self.grads.input

    def named_params(self):
        yield f"{self.name}.kernel_re", self.params.kernel_re
        yield f"{self.name}.kernel_im", self.params.kernel_im
        if self.params.bias_re is not None:
            yield f"{self.name}.bias_re", self.params.bias_re
            yield f"{self.name}.bias_im", self.params.bias_im

    def named_grads(self):
        yield f"{self.name}.kernel_re", self.grads.kernel_re
        yield f"{self.name}.kernel_im", self.grads.kernel_im
        if self.params.bias_re is not None:
            yield f"{self.name}.bias_re", self.grads.bias_re
            yield f"{self.name}.bias_im", self.grads.bias_im


class BNUnit:
    def __init__(self, name: str, params: ComplexBNParams):
        self.name = name
        self.params = params
        self._x = None
        self.grads: BNGrads | None = None

    def forward(self, x: ComplexTensor, training: bool) -> ComplexTensor:
        if training:
            self._x = x
        return complex_bn_forward(x, self.params, training)

    def backward(self, grad: ComplexTensor) -> ComplexTensor:
        self.grads = complex_bn_backward(self._x, self.params, grad)
        return self.grads.input

    def named_params(self):
        yield f"{self.name}.gamma", self.params.gamma
        yield f"{self.name}.beta", self.params.beta

    def named_grads(self):
        yield f"{self.name}.gamma", self.grads.gamma
        yield f"{self.name}.beta", self.grads.beta

    def named_state(self):
        yield f"{self.name}.running_mean", self.params.running_mean
        yield f"{self.name}.running_cov", self.params.running_cov


class ResidualBlock:
    """conv-BN-ReLU-conv-BN, complex addition on the connection path, ReLU."""

    def __init__(self, name: str, cin: int, cout: int, stride: int, seed: int, dtype):
        self.name = name
        self.conv1 = ConvUnit(
            f"{name}.conv1",
            _init_conv_named(cin, cout, 3, stride, 1, seed, f"{name}.conv1", dtype),
        )
        self.bn1 = BNUnit(f"{name}.bn1", init_bn(cout, dtype=dtype))
        self.conv2 = ConvUnit(
            f"{name}.conv2",
            _init_conv_named(cout, cout, 3, 1, 1, seed, f"{name}.conv2", dtype),
        )
        self.bn2 = BNUnit(f"{name}.bn2", init_bn(cout, dtype=dtype))
        if stride != 1 or cin != cout:
            self.proj_conv = ConvUnit(
                f"{name}.proj_conv",
                _init_conv_named(cin, cout, 1, stride, 0, seed, f"{name}.proj_conv", dtype),
            )
            self.proj_bn = BNUnit(f"{name}.proj_bn", init_bn(cout, dtype=dtype))
        else:
            self.proj_conv = None
            self.proj_bn = None
        self._pre1 = None
        self._pre_out = None

    def forward(self, x: ComplexTensor, training: bool) -> ComplexTensor:
        y = self.conv1.forward(x, training)
        y = self.bn1.forward(y, training)
        if training:
            self._pre1 = y
        y = L.complex_relu(y)
        y = self.conv2.forward(y, training)
        y = self.bn2.forward(y, training)
        if self.proj_conv is not None:
            sc = self.proj_conv.forward(x, training)
            sc = self.proj_bn.forward(sc, training)
        else:
            sc = x
        out = add(y, sc)
        if training:
            self._pre_out = out
        return L.complex_relu(out)

    def backward(self, grad: ComplexTensor) -> ComplexTensor:
        grad = L.complex_relu_backward(self._pre_out, grad)
        gb = self.bn2.backward(grad)
        gb = self.conv2.backward(gb)
        gb = L.complex_relu_backward(self._pre1, gb)
        gb = self.bn1.backward(gb)
        gb = self.conv1.backward(gb)
        if self.proj_conv is not None:
            gs = self.proj_bn.backward(grad)
            gs = self.proj_conv.backward(gs)
        else:
            gs = grad
        return add(gb, gs)

    def units(self):
        out = [self.conv1, self.bn1, self.conv2, self.bn2]
        if self.proj_conv is not None:
            out.extend([self.proj_conv, self.proj_bn])
        return out


def _init_conv_named(cin, cout, k, stride, padding, seed, name, dtype):
    rng = derive_rng(seed, "init", name)
    return L.init_conv(cin, cout, k, rng, stride=stride, padding=padding, dtype=dtype)


class Model:
    """Stem, residual stages, global pool, bridge, real linear head."""

    def __init__(self, arch: ArchitectureSpec, seed: int, dtype=None):
        dtype = default_dtype() if dtype is None else np.dtype(dtype)
        self.arch = arch
        self.seed = seed
        self.stem_conv = ConvUnit(
            "stem.conv",
            _init_conv_named(
                arch.in_channels,
                arch.stem_channels,
                arch.stem_kernel,
                arch.stem_stride,
                arch.stem_kernel // 2,
                seed,
                "stem.conv",
                dtype,
            ),
        )
        self.stem_bn = BNUnit("stem.bn", init_bn(arch.stem_channels, dtype=dtype))
        self.blocks: list[ResidualBlock] = []
        cin = arch.stem_channels
        for si, (blocks, channels, stride) in enumerate(arch.stages, start=1):
            for bi in range(1, blocks + 1):
                bstride = stride if bi == 1 else 1
                blk = ResidualBlock(f"stage{si}.block{bi}", cin, channels, bstride, seed, dtype)
                self.blocks.append(blk)
                cin = channels
        feats = L.bridge_features(cin, arch.bridge)
        lin_rng = derive_rng(seed, "init", "head.linear")
        self.linear = L.init_linear(feats, arch.num_classes, lin_rng, dtype=dtype)
        self.linear_grads: L.LinearGrads | None = None
        self._stem_pre = None
        self._pool_in = None
        self._bridge_in = None
        self._feats = None

    # -- forward / backward ------------------------------------------------

    def forward(self, x: ComplexTensor, training: bool) -> np.ndarray:
        if x.ndim != 4:
            raise ShapeMismatchError(f"model: expected (B, C, H, W) input, got {x.shape}")
        if x.shape[1] != self.arch.in_channels:
            raise ShapeMismatchError(
                f"model: input has {x.shape[1]} channels but the architecture "
                f"expects {self.arch.in_channels} (image channels x K^2)"
            )
        y = self.stem_conv.forward(x, training)
        y = self.stem_bn.forward(y, training)
        if training:
            self._stem_pre = y
        y = L.complex_relu(y)
        for blk in self.blocks:
            y = blk.forward(y, training)
        if training:
            self._pool_in = y
        pooled = L.global_avg_pool(y)
        if training:
            self._bridge_in = pooled
        feats = L.bridge_forward(pooled, self.arch.bridge)
        if training:
            self._feats = feats
        return L.linear_real(feats, self.linear)

    def backward(self, grad_logits: np.ndarray) -> ComplexTensor:
        lg = L.linear_real_backward(self._feats, self.linear, grad_logits)
        self.linear_grads = lg
        g = L.bridge_backward(self._bridge_in, self.arch.bridge, lg.input)
        g = L.global_avg_pool_backward(self._pool_in, g)
        for blk in reversed(self.blocks):
            g = blk.backward(g)
        g = L.complex_relu_backward(self._stem_pre, g)
        g = self.stem_bn.backward(g)
        return self.stem_conv.backward(g)

    # -- parameter traversal ----------------------------------------------

    def _units(self):
        out = [self.stem_conv, self.stem_bn]
        for blk in self.blocks:
            out.extend(blk.units())
        return out

    def named_params(self):
        for unit in self._units():
            yield from unit.named_params()
        yield "head.linear.weight", self.linear.weight
        yield "head.linear.bias", self.linear.bias

    def named_grads(self):
        for unit in self._units():
            yield from unit.named_grads()
        yield "head.linear.weight", self.linear_grads.weight
        yield "head.linear.bias", self.linear_grads.bias

    def named_state(self):
        for unit in self._units():
            if isinstance(unit, BNUnit):
                yield from unit.named_state()

    def bn_units(self):
        return [u for u in self._units() if isinstance(u, BNUnit)]

    def param_count(self) -> int:
        return sum(int(a.size) for _, a in self.named_params())

    def set_param(self, name: str, value: np.ndarray) -> None:
        for pname, arr in self.named_params():
            if pname == name:
                if arr.shape != value.shape:
                    raise ShapeMismatchError(
                        f"set_param {name}: shape {value.shape} != {arr.shape}"
                    )
                arr[...] = value
                return
        raise KeyError(name)


def build(arch: ArchitectureSpec, seed: int, dtype=None) -> Model:
    """Deterministically initialized model: same seed, bit-identical params."""
    return Model(arch, seed, dtype=dtype)
