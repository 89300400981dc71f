#!/usr/bin/env python3
"""Report masked-in pixel fractions for candidate HSV bands over a corpus.

Helps pick segmentation thresholds for a new staining protocol: sweep hue
bands and saturation floors, print the mean fraction of pixels each band
keeps. Healthy bands sit well inside (0, 1); values near 0 or 1 mean the
band misses the cells or swallows the background.
"""

import argparse
import itertools
from pathlib import Path

import numpy as np

from hemopipe.manifest import IMAGE_EXTENSIONS
from hemopipe.segmentation import HsvRange, compute_mask, load_rgb


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("corpus", type=Path, help="directory of images to sample")
    parser.add_argument("--limit", type=int, default=50, help="max images to sample")
    parser.add_argument("--hue-lo", type=float, nargs="+", default=[220.0, 240.0, 260.0])
    parser.add_argument("--hue-hi", type=float, nargs="+", default=[300.0, 320.0, 340.0])
    parser.add_argument("--sat-lo", type=float, nargs="+", default=[0.15, 0.25, 0.35])
    args = parser.parse_args()

    paths = sorted(
        p for p in args.corpus.rglob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )[: args.limit]
    if not paths:
        raise SystemExit(f"no images under {args.corpus}")
    images = [load_rgb(p) for p in paths]

    print(f"{len(images)} images from {args.corpus}")
    print(f"{'h_lo':>6} {'h_hi':>6} {'s_lo':>5} {'mean_fraction':>14}")
    for h_lo, h_hi, s_lo in itertools.product(args.hue_lo, args.hue_hi, args.sat_lo):
        band = HsvRange(h_lo=h_lo, h_hi=h_hi, s_lo=s_lo, s_hi=1.0, v_lo=0.2, v_hi=1.0)
        fractions = [compute_mask(img, band).bits.mean() for img in images]
        print(f"{h_lo:6.0f} {h_hi:6.0f} {s_lo:5.2f} {np.mean(fractions):14.4f}")


if __name__ == "__main__":
    main()
