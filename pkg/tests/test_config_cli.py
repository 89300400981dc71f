import json
from pathlib import Path

import pytest
import yaml

from hemopipe import cli
from hemopipe.config import load_config, validate_paths
from hemopipe.errors import ConfigError
from hemopipe.pipeline import run_paths
from hemopipe.training import TrainRunConfig


def config_doc(corpus: Path, out: Path, epochs: int = 1) -> dict:
    return {
        "version": 1,
        "seed": 1234,
        "dataset": {
            "all_image_root": str(corpus / "all_image_dataset"),
            "idb1_root": str(corpus / "all_idb1"),
        },
        "out_dir": str(out),
        "segmentation": {"h_lo": 240.0, "h_hi": 320.0, "s_lo": 0.25},
        "split": {"train": 0.7, "val": 0.15, "test": 0.15},
        "runs": [
            {
                "name": "smoke",
                "backbone": "resnet50",
                "weights": "random",
                "optimizer": "SGD",
                "lr0": 0.001,
                "batch_size": 8,
                "epochs": epochs,
                "unfreeze_last": 10,
                "augmentation": {"regime": "CNN"},
                "scheduler": {"factor": 0.1, "patience": 5, "min_lr": 1e-6},
            }
        ],
        "compare": {"literature": True},
    }


def write_config(tmp_path: Path, doc: dict) -> Path:
    path = tmp_path / "experiment.yaml"
    path.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return path


@pytest.fixture()
def config_file(tmp_path, fixture_corpus):
    return write_config(tmp_path, config_doc(fixture_corpus, tmp_path / "out"))


def test_load_valid_config(config_file, fixture_corpus):
    cfg = load_config(config_file)
    assert cfg.seed == 1234
    assert cfg.all_image_root == fixture_corpus / "all_image_dataset"
    assert cfg.segmentation.hsv.h_lo == 240.0
    assert cfg.split_ratios == (0.7, 0.15, 0.15)
    assert cfg.runs[0].name == "smoke"
    assert cfg.compare_literature is True
    validate_paths(cfg)


def test_unknown_top_level_key(tmp_path, fixture_corpus):
    doc = config_doc(fixture_corpus, tmp_path)
    doc["learning_rate"] = 0.1
    with pytest.raises(ConfigError, match="learning_rate"):
        load_config(write_config(tmp_path, doc))


def test_unknown_nested_key_named(tmp_path, fixture_corpus):
    doc = config_doc(fixture_corpus, tmp_path)
    doc["segmentation"]["hue_low"] = 100
    with pytest.raises(ConfigError, match="segmentation.hue_low"):
        load_config(write_config(tmp_path, doc))


def test_unknown_run_key_named(tmp_path, fixture_corpus):
    doc = config_doc(fixture_corpus, tmp_path)
    doc["runs"][0]["learning_rate"] = 0.1
    with pytest.raises(ConfigError, match=r"runs\[0\].learning_rate"):
        load_config(write_config(tmp_path, doc))


def test_version_required(tmp_path, fixture_corpus):
    doc = config_doc(fixture_corpus, tmp_path)
    del doc["version"]
    with pytest.raises(ConfigError, match="version"):
        load_config(write_config(tmp_path, doc))


def test_unknown_backbone_rejected(tmp_path, fixture_corpus):
    doc = config_doc(fixture_corpus, tmp_path)
    doc["runs"][0]["backbone"] = "vgg16"
    with pytest.raises(ConfigError, match="vgg16"):
        load_config(write_config(tmp_path, doc))


def test_duplicate_run_names_rejected(tmp_path, fixture_corpus):
    doc = config_doc(fixture_corpus, tmp_path)
    doc["runs"].append(dict(doc["runs"][0]))
    with pytest.raises(ConfigError, match="duplicate"):
        load_config(write_config(tmp_path, doc))


def test_bad_augmentation_regime(tmp_path, fixture_corpus):
    doc = config_doc(fixture_corpus, tmp_path)
    doc["runs"][0]["augmentation"] = {"regime": "GAN"}
    with pytest.raises(ConfigError, match="regime"):
        load_config(write_config(tmp_path, doc))


def test_relative_paths_resolve_against_config_dir(tmp_path, fixture_corpus):
    doc = config_doc(fixture_corpus, tmp_path)
    doc["dataset"]["all_image_root"] = "corpus_rel/all_image_dataset"
    (tmp_path / "corpus_rel").mkdir()
    cfg = load_config(write_config(tmp_path, doc))
    assert cfg.all_image_root == (tmp_path / "corpus_rel/all_image_dataset").resolve()


def test_seed_override_changes_hash_out_does_not(config_file):
    base = load_config(config_file)
    reseeded = load_config(config_file, seed_override=9)
    moved = load_config(config_file, out_override="/elsewhere")
    assert reseeded.config_hash() != base.config_hash()
    assert moved.config_hash() == base.config_hash()


def test_run_seeds_derived_per_run(tmp_path, fixture_corpus):
    doc = config_doc(fixture_corpus, tmp_path)
    second = dict(doc["runs"][0])
    second["name"] = "smoke2"
    doc["runs"].append(second)
    cfg = load_config(write_config(tmp_path, doc))
    a = cfg.runs[0].to_train_config(cfg.seed)
    b = cfg.runs[1].to_train_config(cfg.seed)
    assert isinstance(a, TrainRunConfig)
    assert a.seed != b.seed
    assert a.augmentation.seed != b.augmentation.seed
    assert a.augmentation.regime == "CNN"
    assert a.scheduler.patience == 5


def test_validate_paths_requires_roots(tmp_path, fixture_corpus):
    doc = config_doc(fixture_corpus, tmp_path)
    doc["dataset"]["idb1_root"] = str(tmp_path / "missing")
    cfg = load_config(write_config(tmp_path, doc))
    with pytest.raises(ConfigError, match="idb1_root"):
        validate_paths(cfg)


# ---------------------------------------------------------------- CLI

def test_cli_dry_run_touches_nothing(config_file, capsys, tmp_path):
    rc = cli.main(["reproduce", "--config", str(config_file), "--dry-run"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "ingest -> segment -> split -> train -> evaluate -> compare" in out
    assert "resnet50" in out
    assert not (tmp_path / "out").exists()


def test_cli_bad_config_exit_code(tmp_path, fixture_corpus):
    doc = config_doc(fixture_corpus, tmp_path)
    doc["typo_key"] = 1
    rc = cli.main(["ingest", "--config", str(write_config(tmp_path, doc))])
    assert rc == 2


def test_cli_stage_chain_and_failure(config_file, tmp_path):
    # ingest, segment, split run in sequence and share the stamped directory
    for command in ("ingest", "segment", "split"):
        assert cli.main([command, "--config", str(config_file)]) == 0

    cfg = load_config(config_file)
    paths = run_paths(cfg)
    assert paths.merged_manifest.exists()
    assert (paths.manifests / "merged.csv.sha256").exists()
    assert (paths.manifests / "skips.json").exists()
    assert paths.segmented_manifest.exists()
    assert paths.split_manifest.exists()
    assert (paths.segmented / "segmentation.json").exists()

    prov = json.loads((paths.manifests / "provenance.json").read_text())
    assert prov["config_hash"] == cfg.config_hash()
    assert prov["tool_version"]
    assert any(key.startswith("manifests/merged") for key in prov["dataset_checksums"])

    # evaluate before train fails with the stage named, prior outputs intact
    rc = cli.main(["evaluate", "--config", str(config_file)])
    assert rc == 1
    assert paths.split_manifest.exists()


def test_cli_missing_config_file(tmp_path):
    rc = cli.main(["ingest", "--config", str(tmp_path / "none.yaml")])
    assert rc == 2
