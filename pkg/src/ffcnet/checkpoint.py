"""Checkpoint I/O ("FFCW" format).

Binary, little-endian: magic "FFCW", version u16, a manifest of
(name, tensor shape) entries, then the float32 tensors in manifest order.
Includes BN running statistics.  Loading validates shapes against the
target model and checks the PSD constraint on BN scale matrices.
"""
from __future__ import annotations

import struct

import numpy as np

from .batchnorm import check_gamma_psd
from .tensor import FfcnetError

MAGIC = b"FFCW"
VERSION = 1


class CheckpointError(FfcnetError, ValueError):
    pass


def _entries(model):
    out = list(model.named_params())
    out.extend(model.named_state())
    return out


def save_checkpoint(path, model) -> None:
    entries = _entries(model)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(entries)))
        for name, arr in entries:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_checkpoint(path) -> dict:
    """Read a checkpoint into an ordered {name: float32 array} dict."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, expected {MAGIC!r}")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        (count,) = struct.unpack("<I", fh.read(4))
        manifest = []
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            manifest.append((name, shape))
        out = {}
        for name, shape in manifest:
            n = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * n)
            if len(raw) < 4 * n:
                raise CheckpointError(f"{path}: truncated data for {name}")
            out[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        return out


def load_into(model, path, psd_tol: float = -1e-6) -> None:
    """Copy checkpoint tensors into a model, validating every shape."""
    stored = read_checkpoint(path)
    targets = dict(_entries(model))
    missing = sorted(set(targets) - set(stored))
    extra = sorted(set(stored) - set(targets))
    if missing or extra:
        raise CheckpointError(
            f"{path}: checkpoint/architecture mismatch; missing={missing} extra={extra}"
        )
    for name, arr in targets.items():
        value = stored[name]
        if arr.shape != value.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {name}: checkpoint {value.shape} "
                f"vs model {arr.shape}"
            )
        arr[...] = value.astype(arr.dtype)
    for unit in model.bn_units():
        bad = check_gamma_psd(unit.params.gamma.astype(np.float64), tol=psd_tol)
        if bad:
            raise CheckpointError(
                f"{path}: BN scale matrix not PSD within tolerance for "
                f"{unit.name} channels {bad}"
            )
