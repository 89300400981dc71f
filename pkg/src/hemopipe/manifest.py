"""Dataset discovery, merging, and deterministic stratified splitting.

Two source corpora are supported:

* The staged blood-smear corpus ("ALL image dataset" layout): the root holds
  one subdirectory per class, matched case-insensitively against
  {benign, early, pre, pro}.
* The multi-cell microscopy corpus ("ALL-IDB1" layout): flat image files whose
  stem ends in ``_0`` (healthy) or ``_1`` (lymphoblasts present), e.g.
  ``Im031_1.jpg``.

Both are normalized into a :class:`DatasetManifest` whose binary label is the
image of the original class under :data:`BINARY_MERGE_MAP`.  Manifests are
immutable, lexicographically sorted by path, and serialize to a CSV with a
SHA-256 sidecar.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path, PurePosixPath

import numpy as np
from PIL import Image

from .errors import (
    DuplicateSampleError,
    EmptyDatasetError,
    InsufficientClassError,
    ManifestParseError,
    UnlabeledSampleError,
)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}

MANIFEST_COLUMNS = ["path", "source", "original_class", "binary_label", "split", "width", "height"]


class Source(str, Enum):
    ALL_IMAGE_DATASET = "ALL_IMAGE_DATASET"
    ALL_IDB1 = "ALL_IDB1"


class OriginalClass(str, Enum):
    BENIGN = "Benign"
    EARLY = "Early"
    PRE = "Pre"
    PRO = "Pro"
    NORMAL = "Normal"
    CANCER = "Cancer"


class BinaryLabel(str, Enum):
    NORMAL = "Normal"
    CANCER = "Cancer"


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"
    UNASSIGNED = "unassigned"


# Benign samples (including hematogones) count as healthy; every staged class
# counts as cancerous.
BINARY_MERGE_MAP: dict[OriginalClass, BinaryLabel] = {
    OriginalClass.BENIGN: BinaryLabel.NORMAL,
    OriginalClass.NORMAL: BinaryLabel.NORMAL,
    OriginalClass.EARLY: BinaryLabel.CANCER,
    OriginalClass.PRE: BinaryLabel.CANCER,
    OriginalClass.PRO: BinaryLabel.CANCER,
    OriginalClass.CANCER: BinaryLabel.CANCER,
}

_STAGED_CLASS_DIRS = {
    "benign": OriginalClass.BENIGN,
    "early": OriginalClass.EARLY,
    "pre": OriginalClass.PRE,
    "pro": OriginalClass.PRO,
}


@dataclass(frozen=True)
class ImageSample:
    path: str  # absolute POSIX path
    source: Source
    original_class: OriginalClass
    binary_label: BinaryLabel
    split: Split
    width: int
    height: int


@dataclass(frozen=True)
class SplitSpec:
    """Train/val/test fractions plus the shuffle seed."""

    ratios: tuple[float, float, float]
    seed: int

    def __post_init__(self) -> None:
        if len(self.ratios) != 3:
            raise ValueError("ratios must be a (train, val, test) triple")
        for r in self.ratios:
            if not (0.0 < r < 1.0):
                raise ValueError(f"each ratio must be in (0,1), got {r}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {sum(self.ratios)}")


@dataclass(frozen=True)
class DatasetManifest:
    """Immutable, path-sorted collection of samples.

    ``class_counts`` / ``binary_counts`` are recomputed from the samples on
    every access so they can never go stale.
    """

    samples: tuple[ImageSample, ...]

    @property
    def class_counts(self) -> dict[OriginalClass, int]:
        counts: dict[OriginalClass, int] = {}
        for s in self.samples:
            counts[s.original_class] = counts.get(s.original_class, 0) + 1
        return counts

    @property
    def binary_counts(self) -> dict[BinaryLabel, int]:
        counts: dict[BinaryLabel, int] = {}
        for s in self.samples:
            counts[s.binary_label] = counts.get(s.binary_label, 0) + 1
        return counts

    @property
    def split_counts(self) -> dict[tuple[BinaryLabel, Split], int]:
        counts: dict[tuple[BinaryLabel, Split], int] = {}
        for s in self.samples:
            key = (s.binary_label, s.split)
            counts[key] = counts.get(key, 0) + 1
        return counts

    @property
    def checksum(self) -> str:
        """SHA-256 over the ordered record list (absolute paths)."""
        h = hashlib.sha256()
        for s in self.samples:
            row = ",".join(
                [s.path, s.source.value, s.original_class.value, s.binary_label.value,
                 s.split.value, str(s.width), str(s.height)]
            )
            h.update(row.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def __len__(self) -> int:
        return len(self.samples)


def make_manifest(samples: list[ImageSample] | tuple[ImageSample, ...]) -> DatasetManifest:
    """Sort by path, verify uniqueness, and freeze into a manifest."""
    ordered = tuple(sorted(samples, key=lambda s: s.path))
    seen: set[str] = set()
    for s in ordered:
        if s.path in seen:
            raise DuplicateSampleError(f"duplicate sample path: {s.path}")
        seen.add(s.path)
        expected = BINARY_MERGE_MAP[s.original_class]
        if s.binary_label is not expected:
            raise ValueError(
                f"{s.path}: binary_label {s.binary_label.value} does not match "
                f"merge map image {expected.value} of {s.original_class.value}"
            )
    return DatasetManifest(samples=ordered)


def _decode_size(path: Path) -> tuple[int, int] | None:
    """Return (width, height) if the file decodes as a raster image."""
    try:
        with Image.open(path) as img:
            img.load()
            return img.size
    except Exception:
        return None


def _iter_image_files(root: Path):
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS:
            yield p


def ingest_all_image_dataset(root: Path | str) -> tuple[DatasetManifest, list[str]]:
    """Scan the staged four-class corpus under ``root``.

    Returns the manifest and the list of skipped (undecodable) files.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")

    class_dirs: dict[OriginalClass, Path] = {}
    for child in sorted(root.iterdir()):
        if child.is_dir() and child.name.lower() in _STAGED_CLASS_DIRS:
            class_dirs[_STAGED_CLASS_DIRS[child.name.lower()]] = child

    samples: list[ImageSample] = []
    skipped: list[str] = []
    for original_class, class_dir in class_dirs.items():
        for path in _iter_image_files(class_dir):
            size = _decode_size(path)
            if size is None:
                skipped.append(str(path.resolve()))
                continue
            samples.append(
                ImageSample(
                    path=path.resolve().as_posix(),
                    source=Source.ALL_IMAGE_DATASET,
                    original_class=original_class,
                    binary_label=BINARY_MERGE_MAP[original_class],
                    split=Split.UNASSIGNED,
                    width=size[0],
                    height=size[1],
                )
            )
    if not samples:
        raise EmptyDatasetError(f"no decodable images under {root}")
    return make_manifest(samples), skipped


def parse_idb1_label(path: Path) -> OriginalClass:
    """Label from the ``_0``/``_1`` stem suffix of the multi-cell corpus."""
    stem = path.stem
    if "_" in stem:
        suffix = stem.rsplit("_", 1)[1]
        if suffix == "0":
            return OriginalClass.NORMAL
        if suffix == "1":
            return OriginalClass.CANCER
    raise UnlabeledSampleError(
        f"cannot parse label from filename {path.name!r}: expected stem ending in _0 or _1"
    )


def ingest_all_idb1(root: Path | str) -> tuple[DatasetManifest, list[str]]:
    """Scan the multi-cell microscopy corpus under ``root``."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")

    samples: list[ImageSample] = []
    skipped: list[str] = []
    for path in _iter_image_files(root):
        original_class = parse_idb1_label(path)  # raises UnlabeledSampleError
        size = _decode_size(path)
        if size is None:
            skipped.append(str(path.resolve()))
            continue
        samples.append(
            ImageSample(
                path=path.resolve().as_posix(),
                source=Source.ALL_IDB1,
                original_class=original_class,
                binary_label=BINARY_MERGE_MAP[original_class],
                split=Split.UNASSIGNED,
                width=size[0],
                height=size[1],
            )
        )
    if not samples:
        raise EmptyDatasetError(f"no decodable images under {root}")
    return make_manifest(samples), skipped


def merge_to_binary(a: DatasetManifest, b: DatasetManifest) -> DatasetManifest:
    """Union of two manifests with binary labels recomputed from the merge map."""
    paths_a = {s.path for s in a.samples}
    for s in b.samples:
        if s.path in paths_a:
            raise DuplicateSampleError(f"path present in both manifests: {s.path}")
    merged = [
        replace(s, binary_label=BINARY_MERGE_MAP[s.original_class])
        for s in (*a.samples, *b.samples)
    ]
    return make_manifest(merged)


def _class_rng(seed: int, class_index: int) -> np.random.Generator:
    # Philox keyed by (seed, class) so per-class shuffles are independent.
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, class_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def stratified_split(m: DatasetManifest, spec: SplitSpec) -> DatasetManifest:
    """Assign train/val/test per binary class with a seeded shuffle.

    floor(ratio*n) samples go to val and test; the remainder goes to train,
    keeping the training set largest.  Pure function of (manifest, spec).
    """
    if any(s.split is not Split.UNASSIGNED for s in m.samples):
        raise ValueError("manifest already carries split assignments")

    _, r_val, r_test = spec.ratios
    assigned: dict[str, Split] = {}
    for class_index, label in enumerate((BinaryLabel.NORMAL, BinaryLabel.CANCER)):
        class_samples = [s for s in m.samples if s.binary_label is label]
        n = len(class_samples)
        if n < 3:
            raise InsufficientClassError(
                f"class {label.value} has {n} samples; need at least 3 to split"
            )
        rng = _class_rng(spec.seed, class_index)
        perm = rng.permutation(n)
        n_val = int(np.floor(r_val * n))
        n_test = int(np.floor(r_test * n))
        for rank, idx in enumerate(perm):
            if rank < n_val:
                split = Split.VAL
            elif rank < n_val + n_test:
                split = Split.TEST
            else:
                split = Split.TRAIN
            assigned[class_samples[idx].path] = split

    return make_manifest([replace(s, split=assigned[s.path]) for s in m.samples])


def _serialize_path(sample_path: str, base_dir: Path) -> str:
    """Relative POSIX path when under ``base_dir``, absolute otherwise."""
    p = PurePosixPath(sample_path)
    base = PurePosixPath(base_dir.resolve().as_posix())
    try:
        return str(p.relative_to(base))
    except ValueError:
        return str(p)


def manifest_csv_bytes(m: DatasetManifest, base_dir: Path | str | None = None) -> bytes:
    """Canonical CSV body (LF endings, sorted rows)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)
    base = Path(base_dir) if base_dir is not None else None
    for s in m.samples:
        path = _serialize_path(s.path, base) if base is not None else s.path
        writer.writerow(
            [path, s.source.value, s.original_class.value, s.binary_label.value,
             s.split.value, s.width, s.height]
        )
    return buf.getvalue().encode("utf-8")


def write_manifest(m: DatasetManifest, path: Path | str) -> str:
    """Write the manifest CSV plus its ``<name>.sha256`` sidecar.

    Paths under the manifest's directory are stored relative to it, so a
    segmented corpus plus its manifest is relocatable.  Returns the hex digest
    of the file body.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = manifest_csv_bytes(m, base_dir=path.parent)
    path.write_bytes(body)
    digest = hashlib.sha256(body).hexdigest()
    path.with_name(path.name + ".sha256").write_text(digest + "\n", encoding="utf-8")
    return digest


def read_manifest(path: Path | str) -> DatasetManifest:
    """Parse a manifest CSV, resolving relative paths against its directory."""
    path = Path(path)
    base = path.parent.resolve()
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestParseError(f"{path}: empty manifest file") from None
        if header != MANIFEST_COLUMNS:
            unknown = [c for c in header if c not in MANIFEST_COLUMNS]
            if unknown:
                raise ManifestParseError(f"{path}:1: unknown column(s) {unknown}")
            raise ManifestParseError(
                f"{path}:1: bad header {header}, expected {MANIFEST_COLUMNS}"
            )
        samples: list[ImageSample] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_COLUMNS):
                raise ManifestParseError(f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} fields, got {len(row)}")
            raw_path, source, original, binary, split, width, height = row
            p = PurePosixPath(raw_path)
            abs_path = p if p.is_absolute() else PurePosixPath(base.as_posix()) / p
            try:
                samples.append(
                    ImageSample(
                        path=str(abs_path),
                        source=Source(source),
                        original_class=OriginalClass(original),
                        binary_label=BinaryLabel(binary),
                        split=Split(split),
                        width=int(width),
                        height=int(height),
                    )
                )
            except (ValueError, KeyError) as exc:
                raise ManifestParseError(f"{path}:{lineno}: {exc}") from exc
    return make_manifest(samples)
