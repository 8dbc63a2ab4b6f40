"""Dataset ingestion, deterministic splitting, and the synthetic generator.

Real data is a folder-per-class tree of lossless raster images.  The
synthetic generator stands in for data that cannot ship with the code: four
classes of band-limited textures, each built from a fixed per-class template
whose spectral energy lives in a disjoint radial frequency band.  Per-sample
nuisance factors mirror what makes the classification problem hard in the
wild: a uniform brightness offset, a random circular shift (the template is
fully translation-covariant), and additive Gaussian noise.  By construction
the task is solvable from whole-image spectral band energy alone, which
gives an exact reference classifier to ceiling-check the learned model.

Pixel values are normalized to [0, 1] before any spectral processing, so a
patch's DC bin equals patch_mean * (H/K) * (W/K).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .dtypes import default_dtype
from .rng import derive_rng
from .tensor import FfcnetError

SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.6, 0.2, 0.2)


class DataError(FfcnetError, ValueError):
    pass


# ---------------------------------------------------------------------------
# index and splits

@dataclass
class DatasetEntry:
    path: Path
    label: int
    split: str = ""

    @property
    def source_id(self) -> str:
        return str(self.path)


@dataclass
class DatasetIndex:
    entries: list
    class_names: list
    seed: int = 0

    def split_entries(self, split: str) -> list:
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}, expected one of {SPLITS}")
        return [e for e in self.entries if e.split == split]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


def _split_sizes(n: int):
    n_train = int(n * SPLIT_FRACTIONS[0] + 0.5)
    n_val = int(n * SPLIT_FRACTIONS[1] + 0.5)
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def assign_splits(index: DatasetIndex, seed: int) -> DatasetIndex:
    """Stratified 6:2:2 assignment, one independent shuffle per class.

    The per-class stream is derived from the class NAME, so adding files to
    one class never moves another class's files between splits.
    """
    index.seed = seed
    for label, cname in enumerate(index.class_names):
        members = [e for e in index.entries if e.label == label]
        rng = derive_rng(seed, "split", cname)
        order = rng.permutation(len(members))
        n_train, n_val, _ = _split_sizes(len(members))
        for rank, midx in enumerate(order):
            if rank < n_train:
                members[midx].split = "train"
            elif rank < n_train + n_val:
                members[midx].split = "val"
            else:
                members[midx].split = "test"
    return index


def load_folder(root) -> DatasetIndex:
    """Index a folder-per-class tree; deterministic lexicographic ordering."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DataError(f"dataset root {root} contains no class directories")
    entries = []
    names = []
    for label, cdir in enumerate(class_dirs):
        files = sorted(p for p in cdir.iterdir() if p.is_file())
        if not files:
            raise DataError(f"class directory {cdir} is empty")
        names.append(cdir.name)
        for f in files:
            entries.append(DatasetEntry(path=f, label=label))
    return DatasetIndex(entries=entries, class_names=names)


def load_image(path, grayscale: bool = True) -> np.ndarray:
    """Decode an image file to a (C, H, W) float array in [0, 1]."""
    try:
        with Image.open(path) as img:
            img = img.convert("L" if grayscale else "RGB")
            arr = np.asarray(img, dtype=default_dtype()) / 255.0
    except FfcnetError:
        raise
    except Exception as exc:
        raise DataError(f"cannot decode image file {path}: {exc}") from exc
    if arr.ndim == 2:
        return arr[None, :, :]
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


# ---------------------------------------------------------------------------
# resize

def resize(image: np.ndarray, target: int) -> np.ndarray:
    """Bilinear resize of (C, H, W) to (C, target, target), half-pixel centers."""
    c, h, w = image.shape
    if h == target and w == target:
        return image.copy()

    def axis_coords(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        lo = np.floor(pos).astype(int)
        frac = pos - lo
        lo0 = np.clip(lo, 0, n_in - 1)
        lo1 = np.clip(lo + 1, 0, n_in - 1)
        return lo0, lo1, frac.astype(image.dtype)

    r0, r1, rf = axis_coords(h, target)
    c0, c1, cf = axis_coords(w, target)
    top = image[:, r0][:, :, c0] * (1 - cf) + image[:, r0][:, :, c1] * cf
    bot = image[:, r1][:, :, c0] * (1 - cf) + image[:, r1][:, :, c1] * cf
    return top * (1 - rf[None, :, None]) + bot * rf[None, :, None]


# ---------------------------------------------------------------------------
# synthetic generator

DEFAULT_BANDS = ((2.0, 5.0), (7.0, 11.0), (13.0, 18.0), (20.0, 26.0))


@dataclass(frozen=True)
class SynthSpec:
    """Four frequency-separated texture classes with nuisance factors."""

    image_size: int = 64
    per_class: int = 400
    bands: tuple = DEFAULT_BANDS
    patterns: tuple = ("iso", "iso", "iso", "iso")
    brightness: float = 0.3  # uniform offset in [-brightness, +brightness]
    max_shift: float = 1.0  # fraction of the image size, full wrap by default
    noise_sigma: float = 0.05
    amplitude: float = 0.35

    def __post_init__(self):
        if len(self.bands) != len(self.patterns):
            raise DataError("SynthSpec: bands and patterns must have equal length")
        for i, (lo, hi) in enumerate(self.bands):
            if not 0 < lo < hi:
                raise DataError(f"SynthSpec: bad band {i}: ({lo}, {hi})")
            for j, (lo2, hi2) in enumerate(self.bands):
                if i < j and not (hi <= lo2 or hi2 <= lo):
                    raise DataError(f"SynthSpec: bands {i} and {j} overlap")
        if not 0.0 <= self.brightness <= 0.5:
            raise DataError("SynthSpec: brightness jitter must be in [0, 0.5]")
        if not 0.0 <= self.max_shift <= 1.0:
            raise DataError("SynthSpec: max_shift must be in [0, 1]")

    @property
    def num_classes(self) -> int:
        return len(self.bands)


def _radius_grid(n: int) -> np.ndarray:
    freq = np.minimum(np.arange(n), n - np.arange(n))  # cycles per image, wrapped
    return np.sqrt(freq[:, None] ** 2 + freq[None, :] ** 2)


def _angle_grid(n: int) -> np.ndarray:
    freq = np.where(np.arange(n) <= n // 2, np.arange(n), np.arange(n) - n)
    return np.arctan2(freq[:, None], freq[None, :])


def class_template(spec: SynthSpec, label: int, seed: int) -> np.ndarray:
    """Fixed band-limited texture for one class, values in [0, 1].

    Band-pass filtering white noise keeps the spectrum support inside the
    class band; the result is shifted and jittered per sample, never
    regenerated, so same-class samples share one spectral magnitude.
    """
    n = spec.image_size
    rng = derive_rng(seed, "synth-template", label)
    white = rng.standard_normal((n, n))
    spectrum = np.fft.fft2(white)
    lo, hi = spec.bands[label]
    radius = _radius_grid(n)
    mask = (radius >= lo) & (radius < hi)
    if spec.patterns[label] == "wedge":
        ang = _angle_grid(n)
        # quarter-plane wedge plus its reflection keeps the spectrum Hermitian
        sector = (np.abs(ang) < np.pi / 4) | (np.abs(ang) > 3 * np.pi / 4)
        mask &= sector
    elif spec.patterns[label] != "iso":
        raise DataError(f"SynthSpec: unknown pattern {spec.patterns[label]!r}")
    texture = np.real(np.fft.ifft2(spectrum * mask))
    peak = np.max(np.abs(texture))
    if peak == 0:
        raise DataError(f"SynthSpec: band {spec.bands[label]} selects no frequency bins")
    return 0.5 + spec.amplitude * texture / peak


def synth_image(spec: SynthSpec, label: int, sample: int, seed: int,
                template: np.ndarray | None = None):
    """One synthetic sample: (image (1, H, W) in [0, 1], shift, brightness)."""
    n = spec.image_size
    if template is None:
        template = class_template(spec, label, seed)
    rng = derive_rng(seed, "synth-sample", label, sample)
    max_px = int(round(spec.max_shift * n))
    if max_px > 0:
        dy = int(rng.integers(0, max_px))
        dx = int(rng.integers(0, max_px))
    else:
        dy = dx = 0
    delta = float(rng.uniform(-spec.brightness, spec.brightness)) if spec.brightness else 0.0
    img = np.roll(template, (dy, dx), axis=(0, 1)) + delta
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, size=(n, n))
    img = np.clip(img, 0.0, 1.0)
    return img[None, :, :].astype(default_dtype()), (dy, dx), delta


def generate_synthetic(spec: SynthSpec, seed: int, out_dir) -> DatasetIndex:
    """Write the dataset as folder-per-class 8-bit grayscale PNGs.

    Fully reproducible: the same (spec, seed) produce byte-identical files.
    Returns the index of the written tree (splits not yet assigned).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    names = []
    for label in range(spec.num_classes):
        cname = f"class_{label}"
        names.append(cname)
        cdir = out_dir / cname
        cdir.mkdir(exist_ok=True)
        template = class_template(spec, label, seed)
        for i in range(spec.per_class):
            img, _, _ = synth_image(spec, label, i, seed, template=template)
            quantized = np.round(img[0] * 255.0).astype(np.uint8)
            path = cdir / f"sample_{i:05d}.png"
            Image.fromarray(quantized, mode="L").save(path)
            entries.append(DatasetEntry(path=path, label=label))
    return DatasetIndex(entries=entries, class_names=names)


def band_energy(image: np.ndarray, band) -> float:
    """Spectral energy of a (C, H, W) image inside a radial band, DC excluded."""
    lo, hi = band
    spectrum = np.fft.fft2(image, axes=(-2, -1))
    radius = _radius_grid(image.shape[-1])
    mask = (radius >= lo) & (radius < hi)
    mask[0, 0] = False
    return float(np.sum(np.abs(spectrum) ** 2 * mask))


def classify_by_band_energy(image: np.ndarray, bands=DEFAULT_BANDS) -> int:
    """Reference classifier: argmax of per-band spectral energy.

    Solves the synthetic task exactly at low noise; ceiling oracle for any
    learned model.
    """
    energies = [band_energy(image, band) for band in bands]
    return int(np.argmax(energies))


@dataclass
class SplitData:
    """One split held in memory: images are (C, H, W) floats in [0, 1]."""

    images: list
    labels: np.ndarray
    source_ids: list
    class_names: list

    def __len__(self) -> int:
        return len(self.images)


def load_split(index: DatasetIndex, split: str, image_size: int = 0,
               grayscale: bool = True) -> SplitData:
    """Load one split's images; image_size > 0 resizes to a square."""
    entries = index.split_entries(split)
    if not entries:
        raise DataError(f"split {split!r} is empty; were splits assigned?")
    images = []
    for e in entries:
        img = load_image(e.path, grayscale=grayscale)
        if image_size and img.shape[-1] != image_size:
            img = resize(img, image_size)
        images.append(img)
    return SplitData(
        images=images,
        labels=np.array([e.label for e in entries], dtype=np.int64),
        source_ids=[e.source_id for e in entries],
        class_names=list(index.class_names),
    )


def dataset_fingerprint(root) -> str:
    """SHA-256 over sorted file bytes, for reproducibility checks."""
    root = Path(root)
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            h.update(str(path.relative_to(root)).encode())
            h.update(path.read_bytes())
    return h.hexdigest()
