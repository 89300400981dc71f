"""Fine-tuning runs: seeded, checkpointed, with per-epoch history.

The loop is deterministic given (config, data, seed) on a fixed device
class: batch order, augmentation draws, and head init all come from keyed
counter-based streams, and TensorFlow op determinism is enabled globally.
Cross-device runs promise statistical equivalence only.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._tfsetup import keras, tf
from .augment import AugmentationPolicy, apply_policy, rng_for
from .backbones import (
    CNN_FAMILY,
    BackboneSpec,
    ModelHandle,
    attach_binary_head,
    backbone_spec,
    forward,
    load_backbone,
    unfreeze_last,
)
from .errors import DivergenceError, IntegrityError, SpecMismatchError
from .manifest import BinaryLabel, DatasetManifest, Split
from .segmentation import load_rgb, resize
from .seeding import derive_seed

logger = logging.getLogger(__name__)

LABELS = (BinaryLabel.NORMAL, BinaryLabel.CANCER)  # class indices 0, 1

PLATEAU_MIN_DELTA = 1e-4  # absolute val-loss improvement that resets the counter


@dataclass(frozen=True)
class PlateauSchedule:
    monitor: str = "val_loss"
    factor: float = 0.1
    patience: int = 5
    min_lr: float = 1e-6

    def __post_init__(self) -> None:
        if not (0.0 < self.factor < 1.0):
            raise ValueError(f"factor must be in (0,1), got {self.factor}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")


@dataclass
class PlateauState:
    schedule: PlateauSchedule
    lr: float
    best: float = float("inf")
    bad_epochs: int = 0

    def step(self, val_loss: float) -> float:
        """Feed one epoch's monitored loss; returns the lr for the next epoch."""
        if val_loss < self.best - PLATEAU_MIN_DELTA:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.schedule.patience:
                self.lr = max(self.lr * self.schedule.factor, self.schedule.min_lr)
                self.bad_epochs = 0
        return self.lr


def scheduler_step(state: PlateauState, val_loss: float) -> float:
    return state.step(val_loss)


@dataclass(frozen=True)
class TrainRunConfig:
    backbone: BackboneSpec
    optimizer: str = "SGD"
    lr0: float = 0.001
    batch_size: int = 8
    epochs: int = 50
    augmentation: AugmentationPolicy | None = None
    scheduler: PlateauSchedule | None = None
    seed: int = 0
    loss: str = "cross_entropy"
    momentum: float = 0.9  # SGD only
    unfreeze_last_n: int = 10
    name: str = "run"

    def __post_init__(self) -> None:
        if self.optimizer not in ("SGD", "AdamW"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss != "cross_entropy":
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.lr0 <= 0:
            raise ValueError("epochs >= 1, batch_size >= 1, lr0 > 0 required")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float
    lr: float


HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "train_acc", "val_acc", "lr"]


@dataclass(frozen=True)
class RunHistory:
    records: tuple[EpochRecord, ...]
    wall_time: float

    def to_csv(self) -> str:
        lines = [",".join(HISTORY_COLUMNS)]
        for r in self.records:
            lines.append(
                f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.train_acc!r},{r.val_acc!r},{r.lr!r}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path: Path | str) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def history_from_csv(path: Path | str) -> RunHistory:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if lines[0].split(",") != HISTORY_COLUMNS:
        raise ValueError(f"bad history header: {lines[0]}")
    records = []
    for line in lines[1:]:
        e, tl, vl, ta, va, lr = line.split(",")
        records.append(EpochRecord(int(e), float(tl), float(vl), float(ta), float(va), float(lr)))
    return RunHistory(records=tuple(records), wall_time=0.0)


class _LazyPool:
    """Same-class mosaic partners, decoded only when drawn."""

    def __init__(self, loader: "SplitLoader", paths: list[str]):
        self._loader = loader
        self._paths = paths

    def __len__(self) -> int:
        return len(self._paths)

    def __getitem__(self, i: int) -> np.ndarray:
        return self._loader._load(self._paths[i], Split.TRAIN, "train-step", True)


class SplitLoader:
    """Decodes, resizes, and (for the train split only) augments samples.

    Every access is logged as (path, split, phase, augmented); the training
    loop asserts that val/test samples are only ever served unaugmented in
    the eval phase.
    """

    def __init__(self, manifest: DatasetManifest, input_size: tuple[int, int, int]):
        self.input_wh = (input_size[0], input_size[1])
        self.by_split: dict[Split, list[tuple[str, int]]] = {s: [] for s in Split}
        for sample in manifest.samples:
            label_idx = LABELS.index(sample.binary_label)
            self.by_split[sample.split].append((sample.path, label_idx))
        self.access_log: list[tuple[str, str, str, bool]] = []

    def counts(self) -> dict[str, int]:
        return {s.value: len(v) for s, v in self.by_split.items()}

    def _load(self, path: str, split: Split, phase: str, augmented: bool) -> np.ndarray:
        if augmented and split is not Split.TRAIN:
            raise AssertionError(f"augmentation requested for {split.value} sample {path}")
        self.access_log.append((path, split.value, phase, augmented))
        return resize(load_rgb(path), self.input_wh)

    def train_batches(
        self,
        epoch: int,
        batch_size: int,
        order_seed: int,
        policy: AugmentationPolicy | None,
    ):
        """Yield (x uint8 NHWC, y int) batches in a seeded per-epoch order."""
        items = self.by_split[Split.TRAIN]
        order = rng_for(order_seed, epoch, 0).permutation(len(items))
        augmented = policy is not None
        by_class: dict[int, list[str]] = {0: [], 1: []}
        for path, label in items:
            by_class[label].append(path)

        batch_x: list[np.ndarray] = []
        batch_y: list[int] = []
        for idx in order:
            path, label = items[int(idx)]
            img = self._load(path, Split.TRAIN, "train-step", augmented)
            if policy is not None:
                rng = rng_for(policy.seed, epoch, int(idx))
                pool = _LazyPool(self, [p for p in by_class[label] if p != path])
                img = apply_policy(img, policy, rng, self.input_wh, same_class_pool=pool)
            batch_x.append(img)
            batch_y.append(label)
            if len(batch_x) == batch_size:
                yield np.stack(batch_x), np.array(batch_y, dtype=np.int64)
                batch_x, batch_y = [], []
        if batch_x:
            yield np.stack(batch_x), np.array(batch_y, dtype=np.int64)

    def eval_batches(self, split: Split, batch_size: int):
        items = self.by_split[split]
        for start in range(0, len(items), batch_size):
            chunk = items[start:start + batch_size]
            xs = [self._load(p, split, "eval", False) for p, _ in chunk]
            ys = [label for _, label in chunk]
            yield np.stack(xs), np.array(ys, dtype=np.int64)


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_checkpoint(handle: ModelHandle, path: Path | str, meta: dict | None = None) -> None:
    """Atomically persist all weights plus a JSON sidecar with the file hash."""
    path = Path(path)
    if not path.name.endswith(".weights.h5"):
        raise ValueError(f"checkpoint path must end in .weights.h5, got {path.name}")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(".tmp-" + path.name)
    handle.model.save_weights(str(tmp))
    sidecar = {
        "backbone": handle.spec.name,
        "weights_source": handle.spec.weights_source,
        "head_classes": handle.spec.head_classes,
        "file_sha256": _sha256_file(tmp),
        **(meta or {}),
    }
    tmp_json = path.with_name(".tmp-" + path.name + ".json")
    tmp_json.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    os.replace(tmp_json, path.with_name(path.name + ".json"))


def load_checkpoint(path: Path | str, spec: BackboneSpec | None = None) -> ModelHandle:
    """Rebuild the architecture and restore exact weights.

    Raises IntegrityError if the file hash does not match its sidecar and
    SpecMismatchError if ``spec`` names a different backbone than the
    checkpoint was trained with.
    """
    path = Path(path)
    sidecar_path = path.with_name(path.name + ".json")
    if not sidecar_path.exists():
        raise IntegrityError(f"checkpoint sidecar missing: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    if spec is not None and spec.name != sidecar["backbone"]:
        raise SpecMismatchError(
            f"checkpoint was trained with {sidecar['backbone']!r}, not {spec.name!r}"
        )
    actual = _sha256_file(path)
    if actual != sidecar["file_sha256"]:
        raise IntegrityError(
            f"checkpoint {path} hash {actual[:12]}... does not match sidecar"
        )
    rebuilt_spec = backbone_spec(sidecar["backbone"], "random")
    handle = attach_binary_head(load_backbone(rebuilt_spec, init_seed=0), seed=0)
    try:
        handle.model.load_weights(str(path))
    except Exception as exc:
        raise IntegrityError(f"failed to restore checkpoint {path}: {exc}") from exc
    return handle


def _build_optimizer(cfg: TrainRunConfig):
    if cfg.optimizer == "SGD":
        return keras.optimizers.SGD(learning_rate=cfg.lr0, momentum=cfg.momentum)
    return keras.optimizers.AdamW(learning_rate=cfg.lr0)


def train(
    cfg: TrainRunConfig,
    manifest: DatasetManifest,
    out_dir: Path | str,
    handle: ModelHandle | None = None,
    extra_meta: dict | None = None,
) -> tuple[ModelHandle, RunHistory]:
    """Run one fine-tuning job; persists best/last checkpoints and history.

    The best checkpoint is the highest-validation-accuracy epoch. Raises
    DivergenceError on a non-finite loss, keeping the last saved checkpoint.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loader = SplitLoader(manifest, cfg.backbone.input_size)
    n_train = len(loader.by_split[Split.TRAIN])
    n_val = len(loader.by_split[Split.VAL])
    if n_train == 0:
        raise ValueError("train split is empty")
    if n_val == 0:
        raise ValueError("val split is empty; history requires validation metrics")

    master = cfg.seed
    keras.utils.set_random_seed(derive_seed(master, "tf") & 0x7FFFFFFF)
    if handle is None:
        handle = load_backbone(cfg.backbone, init_seed=derive_seed(master, "backbone-init"))
        attach_binary_head(handle, seed=derive_seed(master, "head-init"))
        if cfg.backbone.family == CNN_FAMILY:
            unfreeze_last(handle, cfg.unfreeze_last_n)
        else:
            unfreeze_last(handle, len(handle.layer_names))  # provider default: all trainable

    optimizer = _build_optimizer(cfg)
    model = handle.model
    loss_vec = keras.losses.SparseCategoricalCrossentropy(
        from_logits=True, reduction=None
    )

    @tf.function
    def train_step(x, y):
        with tf.GradientTape() as tape:
            logits = model(x, training=True)
            losses = loss_vec(y, logits)
            loss = tf.reduce_mean(losses)
        grads = tape.gradient(loss, model.trainable_variables)
        optimizer.apply_gradients(zip(grads, model.trainable_variables))
        correct = tf.reduce_sum(tf.cast(tf.argmax(logits, axis=1) == y, tf.int64))
        return tf.reduce_sum(losses), correct

    @tf.function
    def eval_step(x, y):
        logits = model(x, training=False)
        losses = loss_vec(y, logits)
        correct = tf.reduce_sum(tf.cast(tf.argmax(logits, axis=1) == y, tf.int64))
        return tf.reduce_sum(losses), correct

    def run_eval(split: Split) -> tuple[float, float]:
        total, correct, n = 0.0, 0, 0
        for x, y in loader.eval_batches(split, cfg.batch_size):
            batch_loss, batch_correct = eval_step(handle.preprocess(x), tf.constant(y))
            total += float(batch_loss)
            correct += int(batch_correct)
            n += len(y)
        return total / n, 100.0 * correct / n

    scheduler_state = (
        PlateauState(schedule=cfg.scheduler, lr=cfg.lr0) if cfg.scheduler else None
    )
    order_seed = derive_seed(master, "batch-order")
    frozen_meta = {
        "seed": cfg.seed,
        "optimizer": cfg.optimizer,
        "lr0": cfg.lr0,
        "dataset_checksum": manifest.checksum,
        **(extra_meta or {}),
    }

    records: list[EpochRecord] = []
    best_val_acc = -1.0
    lr = cfg.lr0
    t0 = time.time()
    for epoch in range(1, cfg.epochs + 1):
        optimizer.learning_rate.assign(lr)
        loss_sum, correct, seen = 0.0, 0, 0
        for x, y in loader.train_batches(epoch, cfg.batch_size, order_seed, cfg.augmentation):
            batch_loss, batch_correct = train_step(handle.preprocess(x), tf.constant(y))
            batch_loss = float(batch_loss)
            if not np.isfinite(batch_loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}; last checkpoint retained in {out_dir}"
                )
            loss_sum += batch_loss
            correct += int(batch_correct)
            seen += len(y)
        train_loss = loss_sum / seen
        train_acc = 100.0 * correct / seen
        val_loss, val_acc = run_eval(Split.VAL)
        records.append(EpochRecord(epoch, train_loss, val_loss, train_acc, val_acc, lr))
        logger.info(
            "%s epoch %d/%d loss %.4f acc %.1f val_loss %.4f val_acc %.1f lr %g",
            cfg.name, epoch, cfg.epochs, train_loss, train_acc, val_loss, val_acc, lr,
        )

        save_checkpoint(handle, out_dir / "last.weights.h5", {**frozen_meta, "epoch": epoch, "val_acc": val_acc})
        if val_acc > best_val_acc:
            best_val_acc = val_acc
            save_checkpoint(handle, out_dir / "best.weights.h5", {**frozen_meta, "epoch": epoch, "val_acc": val_acc})

        if scheduler_state is not None:
            lr = scheduler_state.step(val_loss)

    history = RunHistory(records=tuple(records), wall_time=time.time() - t0)
    history.write_csv(out_dir / "history.csv")

    for path, split, phase, augmented in loader.access_log:
        if split in ("val", "test") and (augmented or phase != "eval"):
            raise AssertionError(f"{split} sample {path} touched outside eval: {phase}")
    return handle, history


def predict_labels(handle: ModelHandle, batch: np.ndarray) -> np.ndarray:
    """Argmax over the two class scores; exact ties resolve to Cancer."""
    scores = forward(handle, batch)
    return (scores[:, 1] >= scores[:, 0]).astype(np.int64)
