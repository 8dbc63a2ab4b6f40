"""Frequency-domain complex-valued CNN library.

Images are diced into a K x K patch grid, each patch is mapped to its 2D
discrete Fourier spectrum, and (during training only) the patch positions
are shuffled with probability p.  A complex-valued residual network
classifies the resulting spectral stack.  Everything runs on numpy arrays
with explicit forward/backward passes; no autodiff framework involved.
"""
from .batchnorm import ComplexBNParams, complex_bn_forward, init_bn, inv_sqrt_2x2
from .dtypes import default_dtype, precision, set_default_dtype
from .fourier import dft2_naive, fft2, idft2
from .network import ArchitectureSpec, Model, build, mini_spec, resnet18_spec
from .psm import PsmConfig, apply_psm, assemble, input_channels, partition
from .rng import derive_rng
from .tensor import ComplexTensor, FfcnetError, from_complex, from_real
from .train import TrainConfig, cross_entropy, evaluate, sweep, train

__version__ = "0.1.0"

__all__ = [
    "ArchitectureSpec",
    "ComplexBNParams",
    "ComplexTensor",
    "FfcnetError",
    "Model",
    "PsmConfig",
    "TrainConfig",
    "apply_psm",
    "assemble",
    "build",
    "complex_bn_forward",
    "cross_entropy",
    "default_dtype",
    "derive_rng",
    "dft2_naive",
    "evaluate",
    "fft2",
    "from_complex",
    "from_real",
    "idft2",
    "init_bn",
    "input_channels",
    "inv_sqrt_2x2",
    "mini_spec",
    "partition",
    "precision",
    "resnet18_spec",
    "set_default_dtype",
    "sweep",
    "train",
]
