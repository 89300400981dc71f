"""HSV white-blood-cell segmentation.

Images are converted to HSV, pixels inside a configurable purple band are
kept, and everything else (background, platelets, red cells) is zeroed to
black.  The band defaults below are tuned on the bundled fixtures and are a
config value, not a constant baked into the operations.
"""

from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from . import __version__
from .errors import ShapeError
from .manifest import DatasetManifest, ImageSample, make_manifest, Source

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HsvPixel:
    """Hue in degrees [0,360), saturation and value as fractions."""

    h: float
    s: float
    v: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "h", float(self.h) % 360.0)
        if not (0.0 <= self.s <= 1.0 and 0.0 <= self.v <= 1.0):
            raise ValueError(f"s and v must be in [0,1], got s={self.s} v={self.v}")


@dataclass(frozen=True)
class HsvRange:
    """Closed HSV box; a hue interval with h_lo > h_hi wraps through 0."""

    h_lo: float
    h_hi: float
    s_lo: float
    s_hi: float
    v_lo: float
    v_hi: float

    def __post_init__(self) -> None:
        if self.s_lo > self.s_hi or self.v_lo > self.v_hi:
            raise ValueError("s_lo/v_lo must not exceed s_hi/v_hi")

    def contains(self, px: HsvPixel) -> bool:
        if self.h_lo <= self.h_hi:
            in_hue = self.h_lo <= px.h <= self.h_hi
        else:  # wrapped interval [h_lo, 360) u [0, h_hi]
            in_hue = px.h >= self.h_lo or px.h <= self.h_hi
        return bool(
            in_hue
            and self.s_lo <= px.s <= self.s_hi
            and self.v_lo <= px.v <= self.v_hi
        )


# Purple band of stained white blood cells; see README for tuning notes.
DEFAULT_PURPLE_RANGE = HsvRange(h_lo=240.0, h_hi=320.0, s_lo=0.25, s_hi=1.0, v_lo=0.2, v_hi=1.0)


@dataclass(frozen=True)
class SegmentationConfig:
    hsv: HsvRange = DEFAULT_PURPLE_RANGE
    morphology: bool = False  # optional 3x3 open+close cleanup of the mask


@dataclass(frozen=True)
class BinaryMask:
    width: int
    height: int
    bits: np.ndarray  # bool, shape (height, width)

    def __post_init__(self) -> None:
        if self.bits.shape != (self.height, self.width):
            raise ShapeError(
                f"mask bits shape {self.bits.shape} != (height={self.height}, width={self.width})"
            )


def _require_rgb(img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected HxWx3 RGB array, got shape {img.shape}")
    if img.size == 0:
        raise ValueError("image is empty")


def rgb_to_hsv_array(img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized hexcone conversion; returns (h degrees, s, v) float64 arrays."""
    _require_rgb(img)
    rgb = img.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    delta = mx - mn
    v = mx / 255.0
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(mx > 0.0, delta / mx, 0.0)
        h_r = 60.0 * np.mod((g - b) / delta, 6.0)
        h_g = 60.0 * ((b - r) / delta + 2.0)
        h_b = 60.0 * ((r - g) / delta + 4.0)
    h = np.where(mx == r, h_r, np.where(mx == g, h_g, h_b))
    h = np.where(delta == 0.0, 0.0, h) % 360.0
    return h, s, v


def rgb_to_hsv(r: int, g: int, b: int) -> HsvPixel:
    """Hexcone conversion of one 8-bit RGB pixel."""
    for name, c in (("r", r), ("g", g), ("b", b)):
        if not (0 <= c <= 255):
            raise ValueError(f"channel {name}={c} outside [0,255]")
    h, s, v = rgb_to_hsv_array(np.array([[[r, g, b]]], dtype=np.uint8))
    return HsvPixel(h=float(h[0, 0]), s=float(s[0, 0]), v=float(v[0, 0]))


def compute_mask(img: np.ndarray, hsv_range: HsvRange) -> BinaryMask:
    """Per-pixel membership of the image in the HSV box (hue wrap honored)."""
    h, s, v = rgb_to_hsv_array(img)
    if hsv_range.h_lo <= hsv_range.h_hi:
        in_hue = (h >= hsv_range.h_lo) & (h <= hsv_range.h_hi)
    else:
        in_hue = (h >= hsv_range.h_lo) | (h <= hsv_range.h_hi)
    bits = (
        in_hue
        & (s >= hsv_range.s_lo) & (s <= hsv_range.s_hi)
        & (v >= hsv_range.v_lo) & (v <= hsv_range.v_hi)
    )
    return BinaryMask(width=img.shape[1], height=img.shape[0], bits=bits)


def apply_mask(img: np.ndarray, mask: BinaryMask) -> np.ndarray:
    """Copy masked-in pixels verbatim; zero everything else."""
    _require_rgb(img)
    if (img.shape[0], img.shape[1]) != (mask.height, mask.width):
        raise ShapeError(
            f"image {img.shape[:2]} does not match mask ({mask.height}, {mask.width})"
        )
    return np.where(mask.bits[..., None], img, np.uint8(0)).astype(np.uint8)


def resize(img: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to (width, height)."""
    w, h = target
    if w <= 0 or h <= 0:
        raise ValueError(f"target dimensions must be positive, got {target}")
    _require_rgb(img)
    if (img.shape[1], img.shape[0]) == (w, h):
        return img.copy()
    return cv2.resize(img, (w, h), interpolation=cv2.INTER_LINEAR)


def load_rgb(path: Path | str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_png(img: np.ndarray, path: Path | str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img, mode="RGB").save(path, format="PNG")


def _clean_mask(mask: BinaryMask) -> BinaryMask:
    kernel = cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (3, 3))
    m = mask.bits.astype(np.uint8)
    m = cv2.morphologyEx(m, cv2.MORPH_OPEN, kernel)
    m = cv2.morphologyEx(m, cv2.MORPH_CLOSE, kernel)
    return BinaryMask(width=mask.width, height=mask.height, bits=m.astype(bool))


def segment_image(img: np.ndarray, cfg: SegmentationConfig) -> tuple[np.ndarray, float]:
    """Mask one image; returns (segmented image, masked-in pixel fraction)."""
    mask = compute_mask(img, cfg.hsv)
    if cfg.morphology:
        mask = _clean_mask(mask)
    fraction = float(mask.bits.mean())
    return apply_mask(img, mask), fraction


def _output_paths(m: DatasetManifest, out_dir: Path) -> dict[str, Path]:
    """Mirror each source's tree under out_dir/<source>/, as lossless PNG."""
    mapping: dict[str, Path] = {}
    for source in Source:
        group = [s for s in m.samples if s.source is source]
        if not group:
            continue
        common = Path(os.path.commonpath([str(Path(s.path).parent) for s in group]))
        for s in group:
            rel = Path(s.path).relative_to(common)
            mapping[s.path] = (out_dir / source.value.lower() / rel).with_suffix(".png")
    return mapping


def segment_dataset(
    m: DatasetManifest, cfg: SegmentationConfig, out_dir: Path | str
) -> DatasetManifest:
    """Segment every sample into ``out_dir``, preserving labels and splits.

    Writes a ``segmentation.json`` sidecar recording the config, tool version,
    and the mean masked-in fraction.  Output depends only on input bytes and
    cfg, so reruns are byte-identical.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = _output_paths(m, out_dir)

    new_samples: list[ImageSample] = []
    fractions: list[float] = []
    for s in m.samples:
        img = load_rgb(s.path)
        segmented, fraction = segment_image(img, cfg)
        fractions.append(fraction)
        out_path = paths[s.path]
        try:
            save_png(segmented, out_path)
        except OSError as exc:
            raise OSError(f"failed writing segmented image {out_path}: {exc}") from exc
        new_samples.append(
            ImageSample(
                path=out_path.resolve().as_posix(),
                source=s.source,
                original_class=s.original_class,
                binary_label=s.binary_label,
                split=s.split,
                width=s.width,
                height=s.height,
            )
        )

    mean_fraction = float(np.mean(fractions)) if fractions else 0.0
    if mean_fraction == 0.0:
        warnings.warn(
            f"segmentation masked in 0.0% of pixels; HSV band {cfg.hsv} is degenerate "
            "for this corpus",
            stacklevel=2,
        )
    sidecar = {
        "hsv": asdict(cfg.hsv),
        "morphology": cfg.morphology,
        "tool_version": __version__,
        "mean_masked_fraction": mean_fraction,
    }
    (out_dir / "segmentation.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info("segmented %d images; mean masked-in fraction %.4f", len(m), mean_fraction)
    return make_manifest(new_samples)
