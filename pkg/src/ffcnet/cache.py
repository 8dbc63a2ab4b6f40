"""Spectral cache file I/O ("FFCS" format).

Binary, little-endian: magic "FFCS", format version u16=1, u16 fields
C, K, Hp, Wp, u32 sample count; per sample a u16 label, a u64 source-id
hash, then K^2*C*Hp*Wp float32 real values followed by the same count of
imaginary values, row-major.  Written bit-exactly; readers reject bad
magic or version.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .tensor import ComplexTensor, FfcnetError

MAGIC = b"FFCS"
VERSION = 1

_HEADER = struct.Struct("<4sHHHHHI")
_SAMPLE_HEAD = struct.Struct("<HQ")


class CacheFormatError(FfcnetError, ValueError):
    pass


def source_hash(source_id: str) -> int:
    digest = hashlib.sha256(source_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class CachedSample:
    patches: ComplexTensor  # (C*K^2, Hp, Wp), float32
    label: int
    source_hash: int


def write_cache(path, samples: list, channels: int, k: int) -> None:
    """Write PSM outputs (channel-stacked layout) to a cache file."""
    if not samples:
        raise CacheFormatError("write_cache: no samples to write")
    first = samples[0].patches
    ckk, hp, wp = first.shape
    if ckk != channels * k * k:
        raise CacheFormatError(
            f"write_cache: patch tensor has {ckk} channels, expected C*K^2 = {channels * k * k}"
        )
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, channels, k, hp, wp, len(samples)))
        for s in samples:
            if s.patches.shape != (ckk, hp, wp):
                raise CacheFormatError(
                    f"write_cache: inconsistent sample shape {s.patches.shape}, "
                    f"expected {(ckk, hp, wp)}"
                )
            sid = getattr(s, "source_id", None)
            h = source_hash(sid) if sid is not None else s.source_hash
            fh.write(_SAMPLE_HEAD.pack(int(s.label), h))
            fh.write(np.ascontiguousarray(s.patches.re, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(s.patches.im, dtype="<f4").tobytes())


def read_cache(path):
    """Read a cache file back; returns (samples, channels, k)."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise CacheFormatError(f"{path}: truncated header")
        magic, version, channels, k, hp, wp, count = _HEADER.unpack(head)
        if magic != MAGIC:
            raise CacheFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise CacheFormatError(f"{path}: unsupported version {version}, expected {VERSION}")
        ckk = channels * k * k
        plane = ckk * hp * wp
        samples = []
        for i in range(count):
            shead = fh.read(_SAMPLE_HEAD.size)
            if len(shead) < _SAMPLE_HEAD.size:
                raise CacheFormatError(f"{path}: truncated sample header at sample {i}")
            label, shash = _SAMPLE_HEAD.unpack(shead)
            raw = fh.read(2 * plane * 4)
            if len(raw) < 2 * plane * 4:
                raise CacheFormatError(f"{path}: truncated sample data at sample {i}")
            flat = np.frombuffer(raw, dtype="<f4")
            re = flat[:plane].reshape(ckk, hp, wp).copy()
            im = flat[plane:].reshape(ckk, hp, wp).copy()
            samples.append(CachedSample(ComplexTensor(re, im), label, shash))
        return samples, channels, k
