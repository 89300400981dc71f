"""Training-time augmentation.

Two regimes are shipped: the YOLO-style regime (mosaic p=1.0, rotation up to
45 degrees, horizontal flip p=0.5, scale +/-0.5) and the CNN regime (random
flips, rotation up to 36 degrees, zoom up to 20%).

Randomness comes from a counter-based Philox stream keyed by
(seed, epoch, sample index), so results do not depend on how data loading is
scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import cv2
import numpy as np

_U64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class AugmentationPolicy:
    regime: str  # "YOLO" or "CNN"
    mosaic_p: float
    max_rotate_deg: float
    hflip_p: float
    scale_frac: float
    zoom_frac: float
    seed: int

    def __post_init__(self) -> None:
        if self.regime not in ("YOLO", "CNN"):
            raise ValueError(f"unknown regime {self.regime!r}")
        for name in ("mosaic_p", "hflip_p"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name}={p} outside [0,1]")
        if not (0.0 <= self.max_rotate_deg <= 180.0):
            raise ValueError(f"max_rotate_deg={self.max_rotate_deg} outside [0,180]")
        for name in ("scale_frac", "zoom_frac"):
            f = getattr(self, name)
            if not (0.0 <= f < 1.0):
                raise ValueError(f"{name}={f} outside [0,1)")


def yolo_policy(seed: int) -> AugmentationPolicy:
    return AugmentationPolicy(
        regime="YOLO", mosaic_p=1.0, max_rotate_deg=45.0, hflip_p=0.5,
        scale_frac=0.5, zoom_frac=0.0, seed=seed,
    )


def cnn_policy(seed: int) -> AugmentationPolicy:
    return AugmentationPolicy(
        regime="CNN", mosaic_p=0.0, max_rotate_deg=36.0, hflip_p=0.5,
        scale_frac=0.0, zoom_frac=0.2, seed=seed,
    )


def rng_for(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Philox stream for one (epoch, sample) pair; safe for parallel loading."""
    bits = np.random.Philox(
        key=np.array([seed & _U64, 0], dtype=np.uint64),
        counter=np.array([0, 0, epoch & _U64, index & _U64], dtype=np.uint64),
    )
    return np.random.Generator(bits)


def mosaic(
    imgs: Sequence[np.ndarray],
    rng: np.random.Generator,
    out_size: tuple[int, int],
    center: tuple[int, int] | None = None,
) -> np.ndarray:
    """Compose four images on a 2x2 grid with a jittered center point.

    ``center`` pins the grid intersection for tests; by default it is drawn
    uniformly from the middle half of the canvas.
    """
    if len(imgs) != 4:
        raise ValueError(f"mosaic needs exactly 4 images, got {len(imgs)}")
    w, h = out_size
    if center is None:
        cx = int(rng.integers(w // 4, w - w // 4 + 1))
        cy = int(rng.integers(h // 4, h - h // 4 + 1))
    else:
        cx, cy = center
    canvas = np.zeros((h, w, 3), dtype=np.uint8)
    quadrants = ((0, cx, 0, cy), (cx, w, 0, cy), (0, cx, cy, h), (cx, w, cy, h))
    for img, (x0, x1, y0, y1) in zip(imgs, quadrants):
        qw, qh = x1 - x0, y1 - y0
        if qw <= 0 or qh <= 0:
            continue
        canvas[y0:y1, x0:x1] = cv2.resize(img, (qw, qh), interpolation=cv2.INTER_LINEAR)
    return canvas


def random_rotate(img: np.ndarray, max_deg: float, rng: np.random.Generator) -> np.ndarray:
    """Rotate by an angle ~ Uniform(-max_deg, +max_deg); corners fill black."""
    if max_deg == 0.0:
        return img.copy()
    angle = float(rng.uniform(-max_deg, max_deg))
    h, w = img.shape[:2]
    matrix = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), angle, 1.0)
    return cv2.warpAffine(
        img, matrix, (w, h), flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT, borderValue=(0, 0, 0),
    )


def random_hflip(img: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    if rng.uniform() < p:
        return img[:, ::-1].copy()
    return img.copy()


def random_vflip(img: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    if rng.uniform() < p:
        return img[::-1].copy()
    return img.copy()


def random_scale(img: np.ndarray, frac: float, rng: np.random.Generator) -> np.ndarray:
    """Resize by a factor ~ Uniform(1-frac, 1+frac), then crop/pad back.

    The canvas size never changes: enlarged images are center-cropped and
    shrunk images are centered on a black canvas.
    """
    if frac == 0.0:
        return img.copy()
    factor = float(rng.uniform(1.0 - frac, 1.0 + frac))
    h, w = img.shape[:2]
    nw, nh = max(1, round(w * factor)), max(1, round(h * factor))
    scaled = cv2.resize(img, (nw, nh), interpolation=cv2.INTER_LINEAR)
    out = np.zeros_like(img)
    # overlap box between the scaled image and the original canvas, centered
    src_x = max(0, (nw - w) // 2)
    src_y = max(0, (nh - h) // 2)
    dst_x = max(0, (w - nw) // 2)
    dst_y = max(0, (h - nh) // 2)
    cw = min(w, nw)
    ch = min(h, nh)
    out[dst_y:dst_y + ch, dst_x:dst_x + cw] = scaled[src_y:src_y + ch, src_x:src_x + cw]
    return out


def cnn_augment(img: np.ndarray, policy: AugmentationPolicy, rng: np.random.Generator) -> np.ndarray:
    """Flips, then rotation, then zoom; dims preserved."""
    out = random_hflip(img, policy.hflip_p, rng)
    out = random_vflip(out, policy.hflip_p, rng)
    out = random_rotate(out, policy.max_rotate_deg, rng)
    out = random_scale(out, policy.zoom_frac, rng)
    return out


def yolo_augment(
    img: np.ndarray,
    same_class_pool: Sequence[np.ndarray],
    policy: AugmentationPolicy,
    rng: np.random.Generator,
    out_size: tuple[int, int],
) -> np.ndarray:
    """Mosaic (with same-label partners only), then rotate, flip, and scale."""
    if policy.mosaic_p > 0.0 and rng.uniform() < policy.mosaic_p and len(same_class_pool) > 0:
        picks = rng.integers(0, len(same_class_pool), size=3)
        partners = [same_class_pool[int(i)] for i in picks]
        out = mosaic([img, *partners], rng, out_size)
    else:
        out = cv2.resize(img, out_size, interpolation=cv2.INTER_LINEAR) if img.shape[:2][::-1] != out_size else img.copy()
    out = random_rotate(out, policy.max_rotate_deg, rng)
    out = random_hflip(out, policy.hflip_p, rng)
    out = random_scale(out, policy.scale_frac, rng)
    return out


def apply_policy(
    img: np.ndarray,
    policy: AugmentationPolicy,
    rng: np.random.Generator,
    out_size: tuple[int, int],
    same_class_pool: Sequence[np.ndarray] = (),
) -> np.ndarray:
    if policy.regime == "YOLO":
        return yolo_augment(img, same_class_pool, policy, rng, out_size)
    out = img if img.shape[:2][::-1] == out_size else cv2.resize(img, out_size, interpolation=cv2.INTER_LINEAR)
    return cnn_augment(out, policy, rng)
