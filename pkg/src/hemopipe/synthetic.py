"""Synthetic blood-smear corpora for smoke runs and tests.

Images are pale-background canvases with purple disks standing in for
stained white blood cells, so the default HSV band masks a nonzero,
non-total pixel fraction.  Generation is fully determined by the seed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

_U64 = 0xFFFFFFFFFFFFFFFF

BACKGROUND = np.array([233, 221, 229], dtype=np.float64)  # pale smear, low saturation
CELL_PURPLE = np.array([125, 35, 160], dtype=np.float64)  # inside the default band

KAGGLE_CLASS_DIRS = ("Benign", "Early", "Pre", "Pro")


def _rng(seed: int, stream: int) -> np.random.Generator:
    key = np.array([seed & _U64, stream & _U64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def synth_smear(
    rng: np.random.Generator,
    size: int = 64,
    n_cells: int = 3,
    background: np.ndarray = BACKGROUND,
    cell: np.ndarray = CELL_PURPLE,
) -> np.ndarray:
    """One synthetic smear image with ``n_cells`` purple disks."""
    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = background
    img += rng.normal(0.0, 4.0, size=img.shape)
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(max(0, n_cells)):
        cx, cy = rng.uniform(0, size, size=2)
        radius = rng.uniform(size * 0.08, size * 0.22)
        disk = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2
        tint = np.asarray(cell, dtype=np.float64) + rng.normal(0.0, 6.0, size=3)
        img[disk] = tint + rng.normal(0.0, 3.0, size=(int(disk.sum()), 3))
    return np.clip(img, 0, 255).astype(np.uint8)


def _save(img: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img, mode="RGB").save(path, format="PNG")


def make_all_image_corpus(
    root: Path | str,
    counts: dict[str, int],
    size: int = 64,
    seed: int = 7,
) -> Path:
    """Staged-corpus layout: one directory per class under ``root``."""
    root = Path(root)
    for class_index, class_name in enumerate(KAGGLE_CLASS_DIRS):
        n = counts.get(class_name, 0)
        rng = _rng(seed, class_index)
        # benign images carry fewer, smaller cell clusters than staged ones
        n_cells = 2 if class_name == "Benign" else 4
        for i in range(n):
            img = synth_smear(rng, size=size, n_cells=n_cells)
            _save(img, root / class_name / f"{class_name.lower()}_{i:04d}.png")
    return root


def make_idb1_corpus(
    root: Path | str,
    n_normal: int,
    n_cancer: int,
    size: int = 64,
    seed: int = 7,
) -> Path:
    """Multi-cell layout: flat ImXXX_0 / ImXXX_1 files under ``root``."""
    root = Path(root)
    rng = _rng(seed, 100)
    index = 1
    for _ in range(n_normal):
        _save(synth_smear(rng, size=size, n_cells=2), root / f"Im{index:03d}_0.png")
        index += 1
    for _ in range(n_cancer):
        _save(synth_smear(rng, size=size, n_cells=5), root / f"Im{index:03d}_1.png")
        index += 1
    return root


def make_fixture_corpus(root: Path | str, size: int = 64, seed: int = 7) -> Path:
    """The 24-image smoke corpus: 3 per staged class + 6 normal + 6 cancerous."""
    root = Path(root)
    make_all_image_corpus(
        root / "all_image_dataset",
        counts={"Benign": 3, "Early": 3, "Pre": 3, "Pro": 3},
        size=size,
        seed=seed,
    )
    make_idb1_corpus(root / "all_idb1", n_normal=6, n_cancer=6, size=size, seed=seed)
    return root
