import sys
from pathlib import Path

import hypothesis
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracles.py importable from tests

from hemopipe.manifest import (
    BINARY_MERGE_MAP,
    ImageSample,
    OriginalClass,
    Source,
    Split,
    SplitSpec,
    ingest_all_idb1,
    ingest_all_image_dataset,
    make_manifest,
    merge_to_binary,
    stratified_split,
)
from hemopipe.synthetic import _rng, _save, make_fixture_corpus, synth_smear

hypothesis.settings.register_profile("pkg", deadline=None, max_examples=60)
hypothesis.settings.load_profile("pkg")


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory) -> Path:
    """24-image synthetic corpus in both source layouts."""
    root = tmp_path_factory.mktemp("corpus")
    return make_fixture_corpus(root, size=48, seed=7)


@pytest.fixture(scope="session")
def merged_manifest(fixture_corpus):
    kaggle, _ = ingest_all_image_dataset(fixture_corpus / "all_image_dataset")
    idb1, _ = ingest_all_idb1(fixture_corpus / "all_idb1")
    return merge_to_binary(kaggle, idb1)


@pytest.fixture(scope="session")
def split_manifest(merged_manifest):
    return stratified_split(merged_manifest, SplitSpec(ratios=(0.7, 0.15, 0.15), seed=42))


def build_sample(path: str, original_class: OriginalClass, split=Split.UNASSIGNED,
                 source=Source.ALL_IMAGE_DATASET, width=48, height=48) -> ImageSample:
    """In-memory sample for tests that never touch the filesystem."""
    return ImageSample(
        path=path,
        source=source,
        original_class=original_class,
        binary_label=BINARY_MERGE_MAP[original_class],
        split=split,
        width=width,
        height=height,
    )


@pytest.fixture(scope="session")
def overfit_manifest(tmp_path_factory):
    """8 train images (4 per class) plus 2 val images.

    Classes are deliberately contrasting (pale sparse smears vs darker dense
    ones) so even a frozen randomly-initialized backbone yields linearly
    separable features and a head-only run can memorize the train split.
    """
    root = tmp_path_factory.mktemp("overfit")
    rng = _rng(5, 0)
    looks = {
        OriginalClass.NORMAL: dict(n_cells=1, background=(235, 225, 230), cell=(180, 140, 200)),
        OriginalClass.CANCER: dict(n_cells=8, background=(180, 155, 195), cell=(90, 20, 120)),
    }
    samples = []

    def add(i, original_class, split):
        p = root / f"img_{i:02d}_{original_class.value}.png"
        look = looks[original_class]
        _save(
            synth_smear(rng, size=48, n_cells=look["n_cells"],
                        background=np.array(look["background"], dtype=np.float64),
                        cell=np.array(look["cell"], dtype=np.float64)),
            p,
        )
        samples.append(
            build_sample(p.resolve().as_posix(), original_class, split=split,
                         source=Source.ALL_IDB1)
        )

    i = 0
    for _ in range(4):
        add(i, OriginalClass.NORMAL, Split.TRAIN)
        i += 1
        add(i, OriginalClass.CANCER, Split.TRAIN)
        i += 1
    add(i, OriginalClass.NORMAL, Split.VAL)
    add(i + 1, OriginalClass.CANCER, Split.VAL)
    return make_manifest(samples)
