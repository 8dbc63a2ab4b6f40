"""Command-line entry point: gen-data, preprocess, train, eval, sweep, inspect.

One binary, subcommands, config file plus flag overrides (flags win).
Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
Log verbosity comes from FFCNET_LOG={error,warn,info,debug}.

Heavy imports are deferred until after argument parsing so that
--deterministic can pin numeric thread pools via the environment before
the array library starts them.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger("ffcnet.cli")

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the contract reserves 2 for
    # runtime failures, so route usage problems to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    name = os.environ.get("FFCNET_LOG", "warn").strip().lower()
    level = _LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run config file")
    common.add_argument("--seed", type=int, help="base seed for all derived streams")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--workers", type=int,
                        help="parallelism cap for preprocessing/eval (1 = sequential)")
    common.add_argument("--deterministic", action=argparse.BooleanOptionalAction,
                        default=None,
                        help="single-threaded numerics, omit wall times from history")
    common.add_argument("--precision", choices=("f32", "f64"),
                        help="run-wide float precision")

    parser = _Parser(prog="ffcnet",
                     description="frequency-domain complex CNN tooling")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    sub.add_parser("gen-data", parents=[common],
                   help="write the synthetic dataset + manifest")
    sub.add_parser("preprocess", parents=[common],
                   help="write per-split spectral caches (no shuffling)")
    sub.add_parser("train", parents=[common],
                   help="train; writes checkpoints and metrics history")
    p_eval = sub.add_parser("eval", parents=[common],
                            help="evaluate a checkpoint on one split")
    p_eval.add_argument("--checkpoint", metavar="PATH", help="checkpoint to load")
    p_eval.add_argument("--split", choices=("train", "val", "test"), default="test")
    sub.add_parser("sweep", parents=[common],
                   help="grid over patch count K and shuffle probability p")
    p_ins = sub.add_parser("inspect", parents=[common],
                           help="write per-patch magnitude/phase images")
    p_ins.add_argument("image", help="image file to inspect")
    p_ins.add_argument("--centered", action="store_true",
                       help="center the zero-frequency bin in magnitude images")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    if getattr(args, "deterministic", None):
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, "1")

    from .checkpoint import CheckpointError
    from .config import ConfigError, apply_overrides, load_config
    from .tensor import FfcnetError

    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(
            cfg,
            seed=args.seed,
            out=args.out,
            workers=args.workers,
            precision=args.precision,
            deterministic=args.deterministic,
            checkpoint=getattr(args, "checkpoint", None),
        )
        handler = _HANDLERS[args.command]
        return handler(cfg, args)
    except (ConfigError, CheckpointError) as exc:
        print(f"ffcnet: error: {exc}", file=sys.stderr)
        return 1
    except FfcnetError as exc:
        print(f"ffcnet: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last-resort diagnostics
        log.exception("unhandled failure")
        print(f"ffcnet: internal error: {exc}", file=sys.stderr)
        return 2


# ---------------------------------------------------------------------------
# command implementations

def _out_dir(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_splits(cfg, which):
    from .data import assign_splits, load_folder, load_split

    index = assign_splits(load_folder(cfg.data_root), cfg.seed)
    return [load_split(index, s, cfg.image_size, cfg.grayscale) for s in which]


def cmd_gen_data(cfg, args) -> int:
    from .config import validate
    from .data import dataset_fingerprint, generate_synthetic
    from .dtypes import set_default_dtype

    validate(cfg)
    spec = cfg.to_synth()
    set_default_dtype(cfg.precision)
    data_dir = Path(cfg.data_root) if cfg.data_root else _out_dir(cfg) / "data"
    generate_synthetic(spec, cfg.seed, data_dir)
    # a stale manifest from an earlier run must not feed the fingerprint
    (data_dir / "manifest.txt").unlink(missing_ok=True)
    manifest = [
        f"seed={cfg.seed}",
        f"image_size={spec.image_size}",
        f"per_class={spec.per_class}",
        "bands=" + ",".join(f"{lo:g}-{hi:g}" for lo, hi in spec.bands),
        "patterns=" + ",".join(spec.patterns),
        f"noise_sigma={spec.noise_sigma:g}",
        f"brightness={spec.brightness:g}",
        f"max_shift={spec.max_shift:g}",
        f"amplitude={spec.amplitude:g}",
        f"classes={spec.num_classes}",
        f"fingerprint={dataset_fingerprint(data_dir)}",
    ]
    (data_dir / "manifest.txt").write_text("\n".join(manifest) + "\n")
    print(f"wrote {spec.num_classes * spec.per_class} images to {data_dir}")
    return 0


def cmd_preprocess(cfg, args) -> int:
    from .cache import write_cache
    from .config import validate
    from .data import SPLITS
    from .dtypes import set_default_dtype
    from .psm import apply_psm

    validate(cfg, needs_data=True)
    set_default_dtype(cfg.precision)
    psm = cfg.to_psm()
    out = _out_dir(cfg)
    for split, data in zip(SPLITS, _load_splits(cfg, SPLITS)):
        samples = [
            apply_psm(img, psm, training=False, label=int(lbl), source_id=sid)
            for img, lbl, sid in zip(data.images, data.labels, data.source_ids)
        ]
        channels = data.images[0].shape[0]
        path = out / f"{split}.ffcs"
        write_cache(path, samples, channels, psm.k)
        print(f"wrote {len(samples)} spectra to {path}")
    return 0


def _train_setup(cfg):
    from .psm import input_channels

    train_data, val_data, test_data = _load_splits(cfg, ("train", "val", "test"))
    tcfg = cfg.to_train()
    c = train_data.images[0].shape[0]
    classes = cfg.num_classes or len(train_data.class_names)
    arch = cfg.to_arch(input_channels(c, tcfg.psm), classes)
    return train_data, val_data, test_data, tcfg, arch


def cmd_train(cfg, args) -> int:
    from .checkpoint import save_checkpoint
    from .config import validate
    from .dtypes import set_default_dtype
    from .train import history_text, restore_snapshot, train

    validate(cfg, needs_data=True)
    set_default_dtype(cfg.precision)
    train_data, val_data, _, tcfg, arch = _train_setup(cfg)
    out = _out_dir(cfg)
    state, history = train(train_data, val_data, tcfg, arch=arch)
    (out / "history.txt").write_text(history_text(history))
    save_checkpoint(out / "last.ffcw", state.model)
    restore_snapshot(state.model, state.best_snapshot)
    save_checkpoint(out / "best.ffcw", state.model)
    print(f"best val accuracy {state.best_val * 100:.2f} at epoch "
          f"{state.best_epoch}; checkpoints in {out}")
    return 0


def cmd_eval(cfg, args) -> int:
    from .checkpoint import load_into
    from .config import validate
    from .dtypes import set_default_dtype
    from .metrics import counts_csv, heatmap_svg, percent_csv, summary_text, summarize
    from .network import build
    from .train import evaluate

    validate(cfg, needs_data=True, needs_checkpoint=True)
    set_default_dtype(cfg.precision)
    train_data, val_data, test_data, tcfg, arch = _train_setup(cfg)
    data = {"train": train_data, "val": val_data, "test": test_data}[args.split]
    model = build(arch, cfg.seed)
    load_into(model, cfg.checkpoint)
    cm, loss = evaluate(model, data, tcfg)
    summary = summarize(cm)
    out = _out_dir(cfg)
    (out / f"metrics_{args.split}.txt").write_text(summary_text(summary))
    (out / f"confusion_{args.split}_counts.csv").write_text(counts_csv(cm))
    (out / f"confusion_{args.split}_percent.csv").write_text(percent_csv(cm))
    (out / f"confusion_{args.split}.svg").write_text(
        heatmap_svg(cm, title=f"confusion matrix ({args.split})"))
    print(summary_text(summary), end="")
    print(f"mean loss {loss:.6f}; artifacts in {out}")
    return 0


def cmd_sweep(cfg, args) -> int:
    from .config import validate
    from .dtypes import set_default_dtype
    from .train import sweep, sweep_csv

    validate(cfg, needs_data=True)
    set_default_dtype(cfg.precision)
    train_data, val_data, test_data, tcfg, _ = _train_setup(cfg)
    rows = sweep(train_data, val_data, test_data, cfg.sweep_k, cfg.sweep_p, tcfg)
    out = _out_dir(cfg)
    text = sweep_csv(rows)
    (out / "sweep.csv").write_text(text)
    print(text, end="")
    return 0


def cmd_inspect(cfg, args) -> int:
    import numpy as np
    from PIL import Image

    from .config import ConfigError, validate
    from .data import load_image, resize
    from .dtypes import set_default_dtype
    from . import tensor
    from .fourier import fft2
    from .psm import partition

    validate(cfg)
    if not Path(args.image).is_file():
        raise ConfigError(f"image {args.image} does not exist")
    set_default_dtype(cfg.precision)
    img = load_image(args.image, grayscale=cfg.grayscale)
    if img.shape[-1] != cfg.image_size or img.shape[-2] != cfg.image_size:
        img = resize(img, cfg.image_size)
    patches = fft2(tensor.from_real(partition(img, cfg.k)))  # (C, K^2, Hp, Wp)
    mag = np.hypot(patches.re, patches.im)
    phase = np.arctan2(patches.im, patches.re)
    out = _out_dir(cfg) / "inspect"
    out.mkdir(exist_ok=True)
    stem = Path(args.image).stem
    c_count, kk, hp, wp = mag.shape
    for c in range(c_count):
        for pi in range(kk):
            m = np.log1p(mag[c, pi])
            if args.centered:
                m = np.roll(m, (hp // 2, wp // 2), axis=(0, 1))
            peak = float(m.max())
            m8 = np.round(m / peak * 255.0).astype(np.uint8) if peak > 0 else \
                np.zeros_like(m, dtype=np.uint8)
            ph8 = np.round((phase[c, pi] + np.pi) / (2 * np.pi) * 255.0).astype(np.uint8)
            Image.fromarray(m8, mode="L").save(out / f"{stem}_c{c}_p{pi:02d}_mag.png")
            Image.fromarray(ph8, mode="L").save(out / f"{stem}_c{c}_p{pi:02d}_phase.png")
    print(f"wrote {2 * c_count * kk} spectrum images to {out}")
    return 0


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "inspect": cmd_inspect,
}


if __name__ == "__main__":
    sys.exit(main())
