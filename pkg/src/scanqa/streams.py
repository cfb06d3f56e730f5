"""Deterministic seeded sub-stream derivation.

One root seed fans out to independent named streams (init, split,
sampler, augment, upsample, ...) so toggling one randomized component
never perturbs the draws of another. Streams are keyed by hashing the
root seed together with string labels into a counter-based Philox
generator, which is platform independent.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _digest(seed: int, labels: tuple) -> bytes:
    text = ":".join([str(int(seed))] + [str(lab) for lab in labels])
    return hashlib.blake2s(text.encode("utf-8")).digest()


def substream(seed: int, *labels) -> np.random.Generator:
    """Generator for the stream named by `labels` under `seed`."""
    key = np.frombuffer(_digest(seed, labels)[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def substream_int(seed: int, *labels) -> int:
    """A 63-bit integer seed derived from the named stream."""
    return int.from_bytes(_digest(seed, labels)[16:24], "little") % (1 << 63)
