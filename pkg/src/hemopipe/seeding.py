"""Seed expansion: one top-level seed, one derived stream per stage."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, stage: str) -> int:
    """Stable 63-bit seed for a named stage of the pipeline."""
    digest = hashlib.sha256(f"{master}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & 0x7FFFFFFFFFFFFFFF
