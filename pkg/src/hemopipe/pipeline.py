"""Stage orchestration for the end-to-end experiment driver.

Each stage reads the previous stage's artifacts from a run directory stamped
with the config hash, so rerunning the same config reproduces the same tree.
Stage outputs:

    run_<hash12>/
      provenance.json
      manifests/        all_image.csv, all_idb1.csv, merged.csv (+ .sha256), skips.json
      segmented/        <source>/... PNGs, segmentation.json, manifest.csv,
                        manifest_split.csv (after the split stage)
      runs/<name>/      history.csv, best/last checkpoints, plots/
      reports/          <name>_{val,test}.{json,txt}
      comparison.csv / comparison.txt
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, validate_paths
from .errors import HemopipeError
from .manifest import (
    ingest_all_image_dataset,
    ingest_all_idb1,
    merge_to_binary,
    read_manifest,
    stratified_split,
    write_manifest,
)
from .segmentation import segment_dataset

logger = logging.getLogger(__name__)

STAGES = ("ingest", "segment", "split", "train", "evaluate", "compare")


class StageFailure(HemopipeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class RunPaths:
    root: Path

    @property
    def manifests(self) -> Path:
        return self.root / "manifests"

    @property
    def segmented(self) -> Path:
        return self.root / "segmented"

    @property
    def runs(self) -> Path:
        return self.root / "runs"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    @property
    def merged_manifest(self) -> Path:
        return self.manifests / "merged.csv"

    @property
    def segmented_manifest(self) -> Path:
        return self.segmented / "manifest.csv"

    @property
    def split_manifest(self) -> Path:
        return self.segmented / "manifest_split.csv"


def run_paths(cfg: ExperimentConfig, out_dir: Path | str | None = None) -> RunPaths:
    out = Path(out_dir) if out_dir is not None else cfg.out_dir
    if out is None:
        raise HemopipeError("no output directory: set out_dir in the config or pass --out")
    return RunPaths(root=out / f"run_{cfg.config_hash()[:12]}")


def _dataset_checksums(paths: RunPaths) -> dict[str, str]:
    sums: dict[str, str] = {}
    for candidate in sorted(paths.root.rglob("*.sha256")):
        rel = candidate.relative_to(paths.root).as_posix()
        sums[rel.removesuffix(".sha256")] = candidate.read_text(encoding="utf-8").strip()
    return sums


def write_provenance(cfg: ExperimentConfig, paths: RunPaths, directory: Path, stage: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    doc = {
        "stage": stage,
        "config_hash": cfg.config_hash(),
        "tool_version": __version__,
        "seed": cfg.seed,
        "dataset_checksums": _dataset_checksums(paths),
    }
    (directory / "provenance.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def stage_ingest(cfg: ExperimentConfig, paths: RunPaths) -> None:
    validate_paths(cfg)
    paths.manifests.mkdir(parents=True, exist_ok=True)
    kaggle, skipped_a = ingest_all_image_dataset(cfg.all_image_root)
    idb1, skipped_b = ingest_all_idb1(cfg.idb1_root)
    merged = merge_to_binary(kaggle, idb1)
    write_manifest(kaggle, paths.manifests / "all_image.csv")
    write_manifest(idb1, paths.manifests / "all_idb1.csv")
    write_manifest(merged, paths.merged_manifest)
    (paths.manifests / "skips.json").write_text(
        json.dumps({"all_image": skipped_a, "all_idb1": skipped_b}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    logger.info(
        "ingested %d + %d samples (skipped %d)",
        len(kaggle), len(idb1), len(skipped_a) + len(skipped_b),
    )
    write_provenance(cfg, paths, paths.manifests, "ingest")


def stage_segment(cfg: ExperimentConfig, paths: RunPaths) -> None:
    merged = read_manifest(paths.merged_manifest)
    segmented = segment_dataset(merged, cfg.segmentation, paths.segmented)
    write_manifest(segmented, paths.segmented_manifest)
    write_provenance(cfg, paths, paths.segmented, "segment")


def stage_split(cfg: ExperimentConfig, paths: RunPaths) -> None:
    segmented = read_manifest(paths.segmented_manifest)
    assigned = stratified_split(segmented, cfg.split_spec())
    write_manifest(assigned, paths.split_manifest)
    write_provenance(cfg, paths, paths.segmented, "split")


def stage_train(cfg: ExperimentConfig, paths: RunPaths) -> None:
    from .report import plot_history
    from .training import train

    manifest = read_manifest(paths.split_manifest)
    for run in cfg.runs:
        run_dir = paths.runs / run.name
        train_cfg = run.to_train_config(cfg.seed)
        _, history = train(
            train_cfg, manifest, run_dir,
            extra_meta={"config_hash": cfg.config_hash(), "run": run.name},
        )
        plot_history(history, run_dir / "plots")
        write_provenance(cfg, paths, run_dir, "train")


def stage_evaluate(cfg: ExperimentConfig, paths: RunPaths) -> None:
    from .report import evaluate
    from .training import load_checkpoint

    manifest = read_manifest(paths.split_manifest)
    paths.reports.mkdir(parents=True, exist_ok=True)
    for run in cfg.runs:
        checkpoint = paths.runs / run.name / "best.weights.h5"
        handle = load_checkpoint(checkpoint)
        for split in ("val", "test"):
            report = evaluate(handle, manifest, split, batch_size=run.batch_size,
                              model_name=run.name)
            report.write_json(paths.reports / f"{run.name}_{split}.json")
            (paths.reports / f"{run.name}_{split}.txt").write_text(
                report.render_text(), encoding="utf-8"
            )
    write_provenance(cfg, paths, paths.reports, "evaluate")


def literature_csv_path() -> Path:
    return Path(str(resources.files("hemopipe").joinpath("data/literature_results.csv")))


def stage_compare(cfg: ExperimentConfig, paths: RunPaths) -> None:
    from .report import compare, report_from_json

    reports = [
        report_from_json(paths.reports / f"{run.name}_test.json") for run in cfg.runs
    ]
    table = compare(
        reports,
        literature_csv=literature_csv_path() if cfg.compare_literature else None,
    )
    (paths.root / "comparison.csv").write_text(table.to_csv(), encoding="utf-8")
    (paths.root / "comparison.txt").write_text(table.render_text(), encoding="utf-8")
    write_provenance(cfg, paths, paths.root, "compare")


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "segment": stage_segment,
    "split": stage_split,
    "train": stage_train,
    "evaluate": stage_evaluate,
    "compare": stage_compare,
}


def run_stage(name: str, cfg: ExperimentConfig, paths: RunPaths) -> None:
    logger.info("stage %s -> %s", name, paths.root)
    try:
        _STAGE_FUNCS[name](cfg, paths)
    except StageFailure:
        raise
    except BaseException as exc:
        raise StageFailure(name, exc) from exc


def reproduce(cfg: ExperimentConfig, out_dir: Path | str | None = None) -> Path:
    """Run every stage in order; prior stage outputs survive a failure."""
    paths = run_paths(cfg, out_dir)
    paths.root.mkdir(parents=True, exist_ok=True)
    for stage in STAGES:
        run_stage(stage, cfg, paths)
    write_provenance(cfg, paths, paths.root, "reproduce")
    return paths.root
