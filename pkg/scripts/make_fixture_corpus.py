#!/usr/bin/env python3
"""Generate the 24-image synthetic smoke corpus used by configs/fixture_smoke.yaml."""

import argparse
from pathlib import Path

from hemopipe.synthetic import make_fixture_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", nargs="?", default="fixtures/corpus", type=Path,
                        help="corpus root (default: fixtures/corpus)")
    parser.add_argument("--size", type=int, default=64, help="image side length")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    root = make_fixture_corpus(args.out, size=args.size, seed=args.seed)
    n = sum(1 for _ in root.rglob("*.png"))
    print(f"wrote {n} images under {root}")


if __name__ == "__main__":
    main()
