"""Experiment config: one YAML file drives the whole pipeline.

Unknown keys are hard errors (silent typos are the main failure mode of
experiment configs).  Relative paths resolve against the config file's
directory.  All randomness flows from the single top-level ``seed``,
expanded per stage/run via :func:`hemopipe.seeding.derive_seed`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace as dc_replace
from pathlib import Path

import yaml

from .augment import AugmentationPolicy, cnn_policy, yolo_policy
from .errors import ConfigError
from .registry import BACKBONE_TABLE, backbone_spec
from .manifest import SplitSpec
from .segmentation import DEFAULT_PURPLE_RANGE, SegmentationConfig
from .seeding import derive_seed

CONFIG_VERSION = 1

_SEGMENTATION_KEYS = {"h_lo", "h_hi", "s_lo", "s_hi", "v_lo", "v_hi", "morphology"}
_DATASET_KEYS = {"all_image_root", "idb1_root"}
_SPLIT_KEYS = {"train", "val", "test"}
_RUN_KEYS = {
    "name", "backbone", "weights", "optimizer", "lr0", "momentum",
    "batch_size", "epochs", "unfreeze_last", "augmentation", "scheduler",
}
_AUG_KEYS = {"regime", "mosaic_p", "max_rotate_deg", "hflip_p", "scale_frac", "zoom_frac"}
_SCHEDULER_KEYS = {"factor", "patience", "min_lr"}
_TOP_KEYS = {"version", "seed", "dataset", "out_dir", "segmentation", "split", "runs", "compare"}
_COMPARE_KEYS = {"literature"}


def _check_keys(section: dict, allowed: set[str], prefix: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"section {prefix or 'top level'} must be a mapping")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {prefix + key!r}")


@dataclass(frozen=True)
class RunSpec:
    name: str
    backbone: str
    weights: str = "random"
    optimizer: str = "SGD"
    lr0: float = 0.001
    momentum: float = 0.9
    batch_size: int = 8
    epochs: int = 50
    unfreeze_last: int = 10
    augmentation: dict | None = None
    scheduler: dict | None = None

    def policy(self, master_seed: int) -> AugmentationPolicy | None:
        if self.augmentation is None:
            return None
        regime = self.augmentation.get("regime")
        seed = derive_seed(master_seed, f"augment:{self.name}")
        base = yolo_policy(seed) if regime == "YOLO" else cnn_policy(seed)
        overrides = {k: v for k, v in self.augmentation.items() if k != "regime"}
        if not overrides:
            return base
        return dc_replace(base, **overrides)

    def to_train_config(self, master_seed: int):
        from .training import PlateauSchedule, TrainRunConfig

        schedule = PlateauSchedule(**self.scheduler) if self.scheduler is not None else None
        return TrainRunConfig(
            backbone=backbone_spec(self.backbone, self.weights),
            optimizer=self.optimizer,
            lr0=self.lr0,
            momentum=self.momentum,
            batch_size=self.batch_size,
            epochs=self.epochs,
            augmentation=self.policy(master_seed),
            scheduler=schedule,
            seed=derive_seed(master_seed, f"run:{self.name}"),
            unfreeze_last_n=self.unfreeze_last,
            name=self.name,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    version: int
    seed: int
    all_image_root: Path | None
    idb1_root: Path | None
    out_dir: Path | None
    segmentation: SegmentationConfig
    split_ratios: tuple[float, float, float]
    runs: tuple[RunSpec, ...]
    compare_literature: bool = False

    def split_spec(self) -> SplitSpec:
        return SplitSpec(ratios=self.split_ratios, seed=derive_seed(self.seed, "split"))

    def config_hash(self) -> str:
        """Stable hash of the effective config; out_dir is excluded so two runs
        of the same experiment land in identically stamped directories."""
        doc = {
            "version": self.version,
            "seed": self.seed,
            "all_image_root": str(self.all_image_root) if self.all_image_root else None,
            "idb1_root": str(self.idb1_root) if self.idb1_root else None,
            "segmentation": {
                "hsv": [
                    self.segmentation.hsv.h_lo, self.segmentation.hsv.h_hi,
                    self.segmentation.hsv.s_lo, self.segmentation.hsv.s_hi,
                    self.segmentation.hsv.v_lo, self.segmentation.hsv.v_hi,
                ],
                "morphology": self.segmentation.morphology,
            },
            "split": list(self.split_ratios),
            "runs": [
                {
                    "name": r.name, "backbone": r.backbone, "weights": r.weights,
                    "optimizer": r.optimizer, "lr0": r.lr0, "momentum": r.momentum,
                    "batch_size": r.batch_size, "epochs": r.epochs,
                    "unfreeze_last": r.unfreeze_last,
                    "augmentation": r.augmentation, "scheduler": r.scheduler,
                }
                for r in self.runs
            ],
            "compare_literature": self.compare_literature,
        }
        return hashlib.sha256(
            json.dumps(doc, sort_keys=True).encode("utf-8")
        ).hexdigest()


def _resolve(base: Path, value: str | None) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else (base / p).resolve()


def load_config(path: Path | str, seed_override: int | None = None,
                out_override: Path | str | None = None) -> ExperimentConfig:
    """Parse and validate a config file; raises ConfigError naming bad keys."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    base = path.parent.resolve()

    _check_keys(doc, _TOP_KEYS, "")
    version = doc.get("version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}, got {version!r}")
    if "seed" not in doc or not isinstance(doc["seed"], int):
        raise ConfigError("top-level integer 'seed' is required")
    seed = seed_override if seed_override is not None else doc["seed"]

    dataset = doc.get("dataset") or {}
    _check_keys(dataset, _DATASET_KEYS, "dataset.")
    all_image_root = _resolve(base, dataset.get("all_image_root"))
    idb1_root = _resolve(base, dataset.get("idb1_root"))

    seg_doc = doc.get("segmentation") or {}
    _check_keys(seg_doc, _SEGMENTATION_KEYS, "segmentation.")
    hsv_kwargs = {k: float(seg_doc[k]) for k in _SEGMENTATION_KEYS - {"morphology"} if k in seg_doc}
    hsv = dc_replace(DEFAULT_PURPLE_RANGE, **hsv_kwargs) if hsv_kwargs else DEFAULT_PURPLE_RANGE
    segmentation = SegmentationConfig(hsv=hsv, morphology=bool(seg_doc.get("morphology", False)))

    split_doc = doc.get("split") or {"train": 0.7, "val": 0.15, "test": 0.15}
    _check_keys(split_doc, _SPLIT_KEYS, "split.")
    try:
        ratios = (float(split_doc["train"]), float(split_doc["val"]), float(split_doc["test"]))
    except KeyError as exc:
        raise ConfigError(f"split section needs train/val/test, missing {exc}") from exc

    runs_doc = doc.get("runs")
    if not isinstance(runs_doc, list) or not runs_doc:
        raise ConfigError("'runs' must be a non-empty list")
    runs: list[RunSpec] = []
    seen_names: set[str] = set()
    for i, run in enumerate(runs_doc):
        prefix = f"runs[{i}]."
        _check_keys(run, _RUN_KEYS, prefix)
        for required in ("name", "backbone"):
            if required not in run:
                raise ConfigError(f"{prefix}{required} is required")
        if run["backbone"] not in BACKBONE_TABLE:
            raise ConfigError(
                f"{prefix}backbone {run['backbone']!r} unknown; choose from {sorted(BACKBONE_TABLE)}"
            )
        if run["name"] in seen_names:
            raise ConfigError(f"duplicate run name {run['name']!r}")
        seen_names.add(run["name"])
        aug = run.get("augmentation")
        if aug is not None:
            _check_keys(aug, _AUG_KEYS, prefix + "augmentation.")
            if aug.get("regime") not in ("YOLO", "CNN"):
                raise ConfigError(f"{prefix}augmentation.regime must be YOLO or CNN")
        sched = run.get("scheduler")
        if sched is not None:
            _check_keys(sched, _SCHEDULER_KEYS, prefix + "scheduler.")
        runs.append(RunSpec(
            name=str(run["name"]),
            backbone=run["backbone"],
            weights=run.get("weights", "random"),
            optimizer=run.get("optimizer", "SGD"),
            lr0=float(run.get("lr0", 0.001)),
            momentum=float(run.get("momentum", 0.9)),
            batch_size=int(run.get("batch_size", 8)),
            epochs=int(run.get("epochs", 50)),
            unfreeze_last=int(run.get("unfreeze_last", 10)),
            augmentation=aug,
            scheduler=sched,
        ))

    compare_doc = doc.get("compare") or {}
    _check_keys(compare_doc, _COMPARE_KEYS, "compare.")

    out_dir = _resolve(base, doc.get("out_dir"))
    if out_override is not None:
        out_dir = Path(out_override).resolve()

    cfg = ExperimentConfig(
        version=version,
        seed=seed,
        all_image_root=all_image_root,
        idb1_root=idb1_root,
        out_dir=out_dir,
        segmentation=segmentation,
        split_ratios=ratios,
        runs=tuple(runs),
        compare_literature=bool(compare_doc.get("literature", False)),
    )
    _ = cfg.split_spec()  # validates ratios
    return cfg


def validate_paths(cfg: ExperimentConfig) -> None:
    """Dataset roots must exist before any stage runs."""
    for label, root in (("all_image_root", cfg.all_image_root), ("idb1_root", cfg.idb1_root)):
        if root is None:
            raise ConfigError(f"dataset.{label} is required to run the pipeline")
        if not root.is_dir():
            raise ConfigError(f"dataset.{label} does not exist: {root}")
