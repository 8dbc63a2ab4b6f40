"""Patch shuffling pipeline: dice an image, transform each patch, shuffle.

An image of shape (C, H, W) is uniformly partitioned into K x K patches per
channel, each patch goes through the 2D FFT, and during training the K^2
patch positions are permuted uniformly at random with probability p (one
permutation shared by all channels of a sample).  At evaluation time dicing
and the transform still run but shuffling is disabled.

The spectral patches are stacked along the channel axis by default, giving
network input shape (C*K^2, H/K, W/K).  A "mosaic" layout that tiles the
patch spectra back into an H x W plane is available for sweep experiments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor
from .fourier import fft2
from .rng import derive_rng
from .tensor import ComplexTensor, FfcnetError

LAYOUTS = ("channels", "mosaic")


class PartitionError(FfcnetError, ValueError):
    """Image dimensions not divisible into the requested patch grid."""


@dataclass(frozen=True)
class PsmConfig:
    """Patch grid size K, shuffle probability p, and the shuffle seed."""

    k: int = 4
    p: float = 0.3
    seed: int = 0
    layout: str = "channels"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"PsmConfig: k must be >= 1, got {self.k}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"PsmConfig: p must be in [0, 1], got {self.p}")
        if self.layout not in LAYOUTS:
            raise ValueError(f"PsmConfig: layout must be one of {LAYOUTS}, got {self.layout!r}")


@dataclass
class PermutationRecord:
    """What the shuffle did to one sample.

    ``perm[q]`` is the source slot of the patch now at slot q; ``triggered``
    says whether the probability-p shuffle fired at all (a fired shuffle can
    still coincidentally draw the identity for small K).
    """

    perm: np.ndarray
    triggered: bool

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.perm, np.arange(len(self.perm))))


def identity_record(k: int) -> PermutationRecord:
    return PermutationRecord(np.arange(k * k, dtype=np.intp), triggered=False)


@dataclass
class SpectralSample:
    """A PSM-processed image: spectral patches plus label and provenance."""

    patches: ComplexTensor
    label: int
    permutation: PermutationRecord
    source_id: str = ""


def partition(image: np.ndarray, k: int) -> np.ndarray:
    """Split (C, H, W) into (C, K^2, H/K, W/K), patches in row-major grid order."""
    image = np.asarray(image)
    if image.ndim != 3:
        raise PartitionError(f"partition: expected (C, H, W) image, got shape {image.shape}")
    c, h, w = image.shape
    if h % k != 0 or w % k != 0:
        raise PartitionError(
            f"partition: K={k} does not divide image dims {h}x{w}; resize upstream"
        )
    hp, wp = h // k, w // k
    tiles = image.reshape(c, k, hp, k, wp).transpose(0, 1, 3, 2, 4)
    return np.ascontiguousarray(tiles.reshape(c, k * k, hp, wp))


def assemble(patches: np.ndarray, k: int) -> np.ndarray:
    """Inverse of :func:`partition`: (C, K^2, Hp, Wp) back to (C, H, W)."""
    c, kk, hp, wp = patches.shape
    if kk != k * k:
        raise PartitionError(f"assemble: expected {k * k} patches, got {kk}")
    tiles = patches.reshape(c, k, k, hp, wp).transpose(0, 1, 3, 2, 4)
    return np.ascontiguousarray(tiles.reshape(c, k * hp, k * wp))


def shuffle_patches(patches: ComplexTensor, p: float, rng: np.random.Generator):
    """Permute patch slots (axis 1) with probability p.

    Returns the (possibly) shuffled patches and the permutation record.  The
    same permutation applies to every channel of the sample.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"shuffle_patches: p must be in [0, 1], got {p}")
    kk = patches.shape[1]
    triggered = bool(rng.random() < p)
    if not triggered:
        rec = PermutationRecord(np.arange(kk, dtype=np.intp), triggered=False)
        return patches, rec
    perm = rng.permutation(kk).astype(np.intp)
    shuffled = ComplexTensor(patches.re[:, perm], patches.im[:, perm])
    return shuffled, PermutationRecord(perm, triggered=True)


def apply_psm(
    image: np.ndarray,
    cfg: PsmConfig,
    training: bool,
    rng: np.random.Generator | None = None,
    label: int = 0,
    source_id: str = "",
) -> SpectralSample:
    """Run the full pipeline on one image: partition, per-patch FFT, shuffle.

    Shuffling happens only when ``training`` is true; at evaluation time the
    permutation is always the identity.  Pass ``rng`` to supply a derived
    per-sample stream; otherwise one is derived from ``cfg.seed``.
    """
    tiles = partition(image, cfg.k)
    spectra = fft2(tensor.from_real(tiles))
    if training and cfg.p > 0.0:
        if rng is None:
            rng = derive_rng(cfg.seed, "psm")
        spectra, record = shuffle_patches(spectra, cfg.p, rng)
    else:
        record = identity_record(cfg.k)

    c, kk, hp, wp = spectra.shape
    if cfg.layout == "channels":
        patches = tensor.reshape(spectra, (c * kk, hp, wp))
    else:
        patches = ComplexTensor(assemble(spectra.re, cfg.k), assemble(spectra.im, cfg.k))
    return SpectralSample(patches=patches, label=label, permutation=record, source_id=source_id)


def input_channels(image_channels: int, cfg: PsmConfig) -> int:
    """Channel count the network sees for a given image channel count."""
    if cfg.layout == "channels":
        return image_channels * cfg.k * cfg.k
    return image_channels


def stack_samples(samples: list) -> ComplexTensor:
    """Stack per-sample patch tensors into a batch (B, C, Hp, Wp)."""
    return ComplexTensor(
        np.stack([s.patches.re for s in samples]),
        np.stack([s.patches.im for s in samples]),
    )
