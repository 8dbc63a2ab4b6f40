"""Run configuration: one INI file drives every command.

Sections group related knobs ([run], [data], [synth], [psm], [arch],
[train], [sweep]).  Every key has a default, so an empty file is a valid
config; unknown sections or keys are hard errors, catching typos before a
long run burns time.  Command-line flags override file values.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .tensor import FfcnetError


class ConfigError(FfcnetError, ValueError):
    pass


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"not a float list: {text!r}") from exc


def _parse_ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"not an int list: {text!r}") from exc


def parse_bands(text: str) -> tuple:
    """"2-5,7-11" -> ((2.0, 5.0), (7.0, 11.0))"""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        if not sep:
            raise ConfigError(f"band {part!r} is not of the form lo-hi")
        try:
            out.append((float(lo), float(hi)))
        except ValueError as exc:
            raise ConfigError(f"band {part!r} has non-numeric bounds") from exc
    if not out:
        raise ConfigError("empty band list")
    return tuple(out)


def parse_stages(text: str) -> tuple:
    """"1x16s1,1x32s2" -> ((1, 16, 1), (1, 32, 2)); BxCsS per stage."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            blocks, rest = part.split("x")
            channels, stride = rest.split("s")
            out.append((int(blocks), int(channels), int(stride)))
        except ValueError as exc:
            raise ConfigError(
                f"stage {part!r} is not of the form <blocks>x<channels>s<stride>"
            ) from exc
    if not out:
        raise ConfigError("empty stage list")
    return tuple(out)


@dataclass
class RunConfig:
    # [run]
    out: str = "runs/out"
    seed: int = 0
    precision: str = "f32"
    workers: int = 1
    deterministic: bool = False
    checkpoint: str = ""
    # [data]
    data_root: str = ""
    image_size: int = 64
    grayscale: bool = True
    # [synth]
    synth_per_class: int = 400
    synth_bands: tuple = ((2.0, 5.0), (7.0, 11.0), (13.0, 18.0), (20.0, 26.0))
    synth_patterns: tuple = ("iso", "iso", "iso", "iso")
    synth_noise_sigma: float = 0.05
    synth_brightness: float = 0.3
    synth_max_shift: float = 1.0
    synth_amplitude: float = 0.35
    # [psm]
    k: int = 4
    p: float = 0.3
    layout: str = "channels"
    # [arch]
    preset: str = "mini"
    bridge: str = "magnitude"
    stem_channels: int = 16
    stem_kernel: int = 3
    stem_stride: int = 1
    stages: tuple = ((1, 16, 1), (1, 32, 2), (1, 64, 2))
    num_classes: int = 0  # 0: infer from the dataset
    # [train]
    learning_rate: float = 0.1
    batch_size: int = 32
    epochs: int = 60
    momentum: float = 0.9
    hflip: bool = True
    vflip: bool = True
    schedule: str = "step"
    milestones: tuple = (0.5, 0.75)
    lr_factor: float = 0.1
    early_stop_patience: int = 20
    # [sweep]
    sweep_k: tuple = (1, 2, 4, 8)
    sweep_p: tuple = (0.0, 0.1, 0.3, 0.5)

    def to_psm(self):
        from .psm import PsmConfig

        return PsmConfig(k=self.k, p=self.p, seed=self.seed, layout=self.layout)

    def to_train(self):
        from .train import TrainConfig

        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            momentum=self.momentum,
            psm=self.to_psm(),
            hflip=self.hflip,
            vflip=self.vflip,
            seed=self.seed,
            precision=self.precision,
            schedule=self.schedule,
            milestones=self.milestones,
            lr_factor=self.lr_factor,
            early_stop_patience=self.early_stop_patience,
            deterministic=self.deterministic,
        )

    def to_synth(self):
        from .data import SynthSpec

        return SynthSpec(
            image_size=self.image_size,
            per_class=self.synth_per_class,
            bands=self.synth_bands,
            patterns=self.synth_patterns,
            brightness=self.synth_brightness,
            max_shift=self.synth_max_shift,
            noise_sigma=self.synth_noise_sigma,
            amplitude=self.synth_amplitude,
        )

    def to_arch(self, in_channels: int, num_classes: int):
        from .network import ArchitectureSpec, mini_spec, resnet18_spec

        if self.preset == "mini":
            return mini_spec(in_channels, num_classes, bridge=self.bridge)
        if self.preset == "resnet18":
            return resnet18_spec(in_channels, num_classes, bridge=self.bridge)
        if self.preset == "custom":
            return ArchitectureSpec(
                in_channels=in_channels,
                num_classes=num_classes,
                stem_channels=self.stem_channels,
                stem_kernel=self.stem_kernel,
                stem_stride=self.stem_stride,
                stages=self.stages,
                bridge=self.bridge,
            )
        raise ConfigError(f"unknown architecture preset {self.preset!r}")


# section -> key -> (RunConfig field, parser)
_SCHEMA = {
    "run": {
        "out": ("out", str),
        "seed": ("seed", int),
        "precision": ("precision", str),
        "workers": ("workers", int),
        "deterministic": ("deterministic", _parse_bool),
        "checkpoint": ("checkpoint", str),
    },
    "data": {
        "root": ("data_root", str),
        "image_size": ("image_size", int),
        "grayscale": ("grayscale", _parse_bool),
    },
    "synth": {
        "per_class": ("synth_per_class", int),
        "bands": ("synth_bands", parse_bands),
        "patterns": ("synth_patterns",
                     lambda t: tuple(s.strip() for s in t.split(",") if s.strip())),
        "noise_sigma": ("synth_noise_sigma", float),
        "brightness": ("synth_brightness", float),
        "max_shift": ("synth_max_shift", float),
        "amplitude": ("synth_amplitude", float),
    },
    "psm": {
        "k": ("k", int),
        "p": ("p", float),
        "layout": ("layout", str),
    },
    "arch": {
        "preset": ("preset", str),
        "bridge": ("bridge", str),
        "stem_channels": ("stem_channels", int),
        "stem_kernel": ("stem_kernel", int),
        "stem_stride": ("stem_stride", int),
        "stages": ("stages", parse_stages),
        "num_classes": ("num_classes", int),
    },
    "train": {
        "learning_rate": ("learning_rate", float),
        "batch_size": ("batch_size", int),
        "epochs": ("epochs", int),
        "momentum": ("momentum", float),
        "hflip": ("hflip", _parse_bool),
        "vflip": ("vflip", _parse_bool),
        "schedule": ("schedule", str),
        "milestones": ("milestones", _parse_floats),
        "lr_factor": ("lr_factor", float),
        "early_stop_patience": ("early_stop_patience", int),
    },
    "sweep": {
        "k_values": ("sweep_k", _parse_ints),
        "p_values": ("sweep_p", _parse_floats),
    },
}


def load_config(path=None) -> RunConfig:
    """Parse the INI file (or defaults when path is None); typo-safe."""
    cfg = RunConfig()
    if path is None:
        return cfg
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    updates = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"{path}: unknown section [{section}]; "
                f"expected one of {sorted(_SCHEMA)}")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"{path}: unknown key {key!r} in [{section}]; "
                    f"expected one of {sorted(_SCHEMA[section])}")
            field_name, parse = _SCHEMA[section][key]
            try:
                updates[field_name] = parse(raw)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(
                    f"{path}: bad value {raw!r} for [{section}] {key}: {exc}"
                ) from exc
    return replace(cfg, **updates)


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply non-None keyword overrides (command-line flags win)."""
    known = {f.name for f in fields(RunConfig)}
    updates = {}
    for name, value in overrides.items():
        if name not in known:
            raise ConfigError(f"unknown config override {name!r}")
        if value is not None:
            updates[name] = value
    return replace(cfg, **updates) if updates else cfg


def validate(cfg: RunConfig, needs_data: bool = False,
             needs_checkpoint: bool = False) -> None:
    """Fail fast, before any side effect touches the filesystem."""
    if cfg.precision not in ("f32", "f64"):
        raise ConfigError(f"precision must be f32 or f64, got {cfg.precision!r}")
    if cfg.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {cfg.workers}")
    if cfg.image_size < 2:
        raise ConfigError(f"image_size must be >= 2, got {cfg.image_size}")
    if needs_data:
        if not cfg.data_root:
            raise ConfigError("no dataset root configured ([data] root or gen-data first)")
        if not Path(cfg.data_root).is_dir():
            raise ConfigError(f"dataset root {cfg.data_root} does not exist")
    if needs_checkpoint:
        if not cfg.checkpoint:
            raise ConfigError("no checkpoint configured ([run] checkpoint or --checkpoint)")
        if not Path(cfg.checkpoint).is_file():
            raise ConfigError(f"checkpoint {cfg.checkpoint} does not exist")
    # constructing the derived configs runs their own validators
    cfg.to_psm()
    cfg.to_train()
