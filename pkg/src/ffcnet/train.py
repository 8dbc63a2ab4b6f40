"""SGD training loop, loss, augmentation, evaluation, and the sweep harness.

The loop is deliberately plain: per epoch, shuffle the training order,
augment each image in the time domain, transform to patch spectra (with
probabilistic shuffling on), run forward/backward, and take a momentum SGD
step.  Validation runs each epoch in eval mode, where patch shuffling is
structurally disabled; the permutation record of every evaluated sample is
checked to be the identity.

Every random choice is drawn from a stream derived from (seed, purpose,
epoch, sample index), never from a shared global generator, so runs are
reproducible bit for bit and the per-sample noise does not depend on the
shuffled batch order.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .metrics import ConfusionMatrix, summarize
from .network import ArchitectureSpec, Model, build, mini_spec
from .psm import PsmConfig, apply_psm, input_channels, stack_samples
from .rng import derive_rng
from .tensor import FfcnetError

log = logging.getLogger("ffcnet.train")


class TrainingError(FfcnetError, ValueError):
    pass


class TrainingDivergedError(TrainingError):
    """Loss became non-finite; message carries epoch and step."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 32
    epochs: int = 60  # desk default; full protocol runs use 600
    momentum: float = 0.9
    psm: PsmConfig = field(default_factory=PsmConfig)
    hflip: bool = True
    vflip: bool = True
    seed: int = 0
    precision: str = "f32"
    schedule: str = "step"  # "none" keeps the learning rate constant
    milestones: tuple = (0.5, 0.75)  # fractions of total epochs
    lr_factor: float = 0.1
    early_stop_patience: int = 20  # 0 disables early stopping
    deterministic: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise TrainingError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 2:
            raise TrainingError(
                f"batch_size must be >= 2 (normalization needs a population), "
                f"got {self.batch_size}")
        if self.epochs < 1:
            raise TrainingError(f"epochs must be >= 1, got {self.epochs}")
        if self.momentum < 0:
            raise TrainingError(f"momentum must be >= 0, got {self.momentum}")
        if self.schedule not in ("none", "step"):
            raise TrainingError(f"unknown schedule {self.schedule!r}")
        if not 0 < self.lr_factor <= 1:
            raise TrainingError(f"lr_factor must be in (0, 1], got {self.lr_factor}")
        if self.early_stop_patience < 0:
            raise TrainingError("early_stop_patience must be >= 0")

    def lr_at(self, epoch: int) -> float:
        if self.schedule == "none":
            return self.learning_rate
        drops = sum(1 for frac in self.milestones if epoch >= int(self.epochs * frac))
        return self.learning_rate * self.lr_factor ** drops


@dataclass
class TrainState:
    model: Model
    velocity: dict
    epoch: int = 0
    best_val: float = -1.0
    best_epoch: int = -1
    best_snapshot: dict | None = None


# ---------------------------------------------------------------------------
# loss and optimizer

def cross_entropy(logits: np.ndarray, labels) -> tuple:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits.

    Stabilized by row-max subtraction; gradient is (softmax - onehot) / B.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise TrainingError(
            f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    b, c = logits.shape
    if np.any(labels < 0) or np.any(labels >= c):
        bad = labels[(labels < 0) | (labels >= c)]
        raise TrainingError(f"labels {bad.tolist()} outside [0, {c})")
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    p = ez / denom
    rows = np.arange(b)
    loss = float(np.mean(np.log(denom[:, 0]) - z[rows, labels]))
    grad = p.copy()
    grad[rows, labels] -= 1.0
    grad /= b
    return loss, grad.astype(logits.dtype)


def init_velocity(model: Model) -> dict:
    return {name: np.zeros_like(arr) for name, arr in model.named_params()}


def sgd_step(state: TrainState, lr: float, momentum: float) -> None:
    """v <- momentum*v + g; theta <- theta - lr*v, all in place."""
    grads = dict(state.model.named_grads())
    for name, param in state.model.named_params():
        v = state.velocity[name]
        v *= momentum
        v += grads[name]
        param -= lr * v


# ---------------------------------------------------------------------------
# augmentation and batch assembly

def augment(image: np.ndarray, rng, hflip: bool, vflip: bool) -> np.ndarray:
    """Independent 50% flips of a (C, H, W) image, time domain."""
    if hflip and rng.random() < 0.5:
        image = image[:, :, ::-1]
    if vflip and rng.random() < 0.5:
        image = image[:, ::-1, :]
    return np.ascontiguousarray(image)


def _batch_spectra(data, indices, cfg: TrainConfig, epoch: int, training: bool):
    """Spectral batch for the given canonical sample indices."""
    samples = []
    for idx in indices:
        img = data.images[idx]
        if training:
            img = augment(img, derive_rng(cfg.seed, "augment", epoch, int(idx)),
                          cfg.hflip, cfg.vflip)
            rng = derive_rng(cfg.seed, "psm", epoch, int(idx))
        else:
            rng = None
        sample = apply_psm(img, cfg.psm, training=training, rng=rng,
                           label=int(data.labels[idx]),
                           source_id=data.source_ids[idx])
        if not training and not sample.permutation.is_identity:
            raise TrainingError(
                f"eval-mode sample {data.source_ids[idx]} carries a non-identity "
                f"patch permutation")
        samples.append(sample)
    x = stack_samples(samples)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return x, labels


def _snapshot(model: Model) -> dict:
    snap = {name: arr.copy() for name, arr in model.named_params()}
    snap.update({name: arr.copy() for name, arr in model.named_state()})
    return snap


def restore_snapshot(model: Model, snap: dict) -> None:
    live = dict(model.named_params())
    live.update(dict(model.named_state()))
    for name, arr in snap.items():
        live[name][...] = arr


# ---------------------------------------------------------------------------
# evaluation

def evaluate(model: Model, data, cfg: TrainConfig, batch_size: int | None = None):
    """Eval-mode pass over a split: (ConfusionMatrix, mean loss)."""
    if len(data.images) == 0:
        raise TrainingError("cannot evaluate an empty split")
    bs = batch_size or cfg.batch_size
    cm = ConfusionMatrix(class_names=list(data.class_names))
    total_loss = 0.0
    n = len(data.images)
    for start in range(0, n, bs):
        idx = np.arange(start, min(start + bs, n))
        x, labels = _batch_spectra(data, idx, cfg, epoch=0, training=False)
        logits = model.forward(x, training=False)
        loss, _ = cross_entropy(logits, labels)
        total_loss += loss * len(idx)
        preds = np.argmax(logits, axis=1)
        cm.update_batch(labels, preds)
    return cm, total_loss / n


def accuracy_of(model: Model, data, cfg: TrainConfig) -> float:
    cm, _ = evaluate(model, data, cfg)
    return summarize(cm)["accuracy"]


# ---------------------------------------------------------------------------
# the training loop

def train(train_data, val_data, cfg: TrainConfig,
          arch: ArchitectureSpec | None = None,
          model: Model | None = None,
          track_train_acc: bool = False,
          stop_at_train_acc: float | None = None):
    """Run the full loop; returns (TrainState, history).

    history is a list of per-epoch dicts; see history_text for the file
    form.  Supplying `model` resumes/extends an existing one; otherwise the
    architecture (default: the mini variant sized for the PSM config) is
    built from cfg.seed.
    """
    n = len(train_data.images)
    if n == 0:
        raise TrainingError("training split is empty")
    if model is None:
        if arch is None:
            c = train_data.images[0].shape[0]
            arch = mini_spec(input_channels(c, cfg.psm),
                             num_classes=len(train_data.class_names))
        model = build(arch, cfg.seed)
    state = TrainState(model=model, velocity=init_velocity(model))
    history = []
    stale = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = cfg.lr_at(epoch)
        order = derive_rng(cfg.seed, "order", epoch).permutation(n)
        epoch_loss = 0.0
        seen = 0
        step = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if len(idx) < 2:
                break  # BN needs a population; drop a trailing singleton
            x, labels = _batch_spectra(train_data, idx, cfg, epoch, training=True)
            logits = model.forward(x, training=True)
            loss, grad = cross_entropy(logits, labels)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch} step {step}")
            model.backward(grad)
            sgd_step(state, lr, cfg.momentum)
            epoch_loss += loss * len(idx)
            seen += len(idx)
            step += 1
        record = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": epoch_loss / max(seen, 1),
        }
        if track_train_acc:
            record["train_acc"] = accuracy_of(model, train_data, cfg)
        if val_data is not None:
            cm, val_loss = evaluate(model, val_data, cfg)
            s = summarize(cm)
            record.update(val_loss=val_loss, val_acc=s["accuracy"],
                          val_precision=s["precision"], val_recall=s["recall"],
                          val_f1=s["f1"])
            if s["accuracy"] > state.best_val:
                state.best_val = s["accuracy"]
                state.best_epoch = epoch
                state.best_snapshot = _snapshot(model)
                stale = 0
            else:
                stale += 1
        if not cfg.deterministic:
            record["wall"] = time.perf_counter() - t0
        history.append(record)
        state.epoch = epoch + 1
        log.info("%s", history_line(record))
        if stop_at_train_acc is not None and record.get("train_acc", 0.0) >= stop_at_train_acc:
            break
        if (val_data is not None and cfg.early_stop_patience > 0
                and stale >= cfg.early_stop_patience):
            log.info("early stop at epoch %d (best val %.4f at epoch %d)",
                     epoch, state.best_val, state.best_epoch)
            break
    if state.best_snapshot is None:
        state.best_snapshot = _snapshot(model)
        state.best_epoch = state.epoch - 1
    return state, history


def history_line(record: dict) -> str:
    parts = [f"epoch={record['epoch']:03d}", f"lr={record['lr']:.6f}",
             f"train_loss={record['train_loss']:.6f}"]
    if "train_acc" in record:
        parts.append(f"train_acc={record['train_acc'] * 100:.2f}")
    for key in ("val_loss",):
        if key in record:
            parts.append(f"{key}={record[key]:.6f}")
    for key in ("val_acc", "val_precision", "val_recall", "val_f1"):
        if key in record:
            parts.append(f"{key}={record[key] * 100:.2f}")
    if "wall" in record:
        parts.append(f"wall={record['wall']:.2f}")
    return " ".join(parts)


def history_text(history) -> str:
    return "\n".join(history_line(r) for r in history) + "\n"


# ---------------------------------------------------------------------------
# hyperparameter sweep

SWEEP_HEADER = "K,p,seed,val_acc,test_acc"


def sweep(train_data, val_data, test_data, k_values, p_values,
          cfg: TrainConfig):
    """Grid over patch counts and shuffle probabilities, shared base seed.

    Returns rows of (K, p, seed, val_acc, test_acc); test accuracy is
    measured with the best-validation parameters of each run.
    """
    rows = []
    c = train_data.images[0].shape[0]
    for k in k_values:
        for p in p_values:
            run_cfg = replace(cfg, psm=replace(cfg.psm, k=int(k), p=float(p)))
            arch = mini_spec(input_channels(c, run_cfg.psm),
                             num_classes=len(train_data.class_names))
            state, _ = train(train_data, val_data, run_cfg, arch=arch)
            restore_snapshot(state.model, state.best_snapshot)
            val_acc = state.best_val if val_data is not None else float("nan")
            test_acc = accuracy_of(state.model, test_data, run_cfg)
            rows.append((int(k), float(p), cfg.seed, val_acc, test_acc))
            log.info("sweep K=%d p=%.2f val=%.4f test=%.4f", k, p, val_acc, test_acc)
    return rows


def sweep_csv(rows) -> str:
    out = [SWEEP_HEADER]
    for k, p, seed, val_acc, test_acc in rows:
        out.append(f"{k},{p:g},{seed},{val_acc * 100:.2f},{test_acc * 100:.2f}")
    return "\n".join(out) + "\n"
