"""Small shared helpers: seed derivation and float formatting."""

from __future__ import annotations

import hashlib
import struct

import numpy as np


def _stable_u64(part) -> int:
    """Map one seed-key part (int, float, str, or tuple) to a stable uint64."""
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    if isinstance(part, (float, np.floating)):
        return struct.unpack("<Q", struct.pack("<d", float(part)))[0]
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    if isinstance(part, (tuple, list)):
        digest = hashlib.sha256(
            b"".join(struct.pack("<Q", _stable_u64(p)) for p in part)
        ).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"cannot derive a seed from {type(part).__name__}")


def derive_seed(*parts) -> int:
    """Deterministic uint64 sub-seed from a global seed plus a key.

    Stable across runs and platforms (SeedSequence over hashed parts), so
    lazily designed codebooks and per-trial streams are reproducible.
    """
    entropy = [_stable_u64(p) for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def fmt_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same float."""
    return repr(float(x))
