"""Standard shuffled batching and the rotating-buffer balanced sampler.

Rotating mode builds N1 batches per epoch, each with the fixed
composition [class0, class0, class1, class2]. Class-1 indices are
permuted per epoch, class-2 indices are upsampled to match, and
class-0 indices are consumed from a one-time shuffled base order via a
cyclic pointer: draw j of epoch e reads base[(e*D0 + j) mod N0] with
D0 = 2*N1, so consecutive epochs continue where the last one stopped
and every class-0 sample is used uniformly over time.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SamplerError
from .streams import substream


@dataclass(frozen=True)
class ClassIndexSets:
    """Dataset indices per severity class."""

    i0: tuple[int, ...]
    i1: tuple[int, ...]
    i2: tuple[int, ...]

    @classmethod
    def from_labels(cls, indices, labels) -> "ClassIndexSets":
        by_class = {0: [], 1: [], 2: []}
        for idx, lab in zip(indices, labels):
            by_class[int(lab)].append(int(idx))
        return cls(tuple(by_class[0]), tuple(by_class[1]), tuple(by_class[2]))

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.i0), len(self.i1), len(self.i2)


@dataclass(frozen=True)
class BatchPlan:
    """Ordered batches of dataset indices for one epoch.

    Rotating batches are quadruples laid out [c0, c0, c1, c2].
    """

    batches: tuple[tuple[int, ...], ...]
    epoch: int
    seed: int
    mode: str


def standard_epoch(n: int, batch_size: int, seed: int, epoch: int) -> BatchPlan:
    """Seeded permutation of range(n), chunked; the partial tail is kept."""
    if n < 1 or batch_size < 1:
        raise SamplerError("need n >= 1 and batch_size >= 1")
    perm = substream(seed, "standard", epoch).permutation(n)
    batches = tuple(tuple(int(i) for i in perm[s:s + batch_size])
                    for s in range(0, n, batch_size))
    return BatchPlan(batches, epoch, seed, "standard")


def upsample_class2(i2, target: int, seed: int, epoch: int) -> list[int]:
    """Replicate scarce class-2 indices to `target` draws.

    Whole copies are tiled, the remainder is sampled without
    replacement, and the result is shuffled, so per-epoch usage counts
    of the originals differ by at most one. If target < N2 a seeded
    subsample without replacement is returned instead.
    """
    i2 = list(i2)
    n2 = len(i2)
    if n2 == 0:
        raise SamplerError("class 2 is empty; cannot upsample")
    if target < 0:
        raise SamplerError("target must be non-negative")
    gen = substream(seed, "upsample", epoch)
    if target < n2:
        pick = gen.choice(n2, size=target, replace=False)
        return [i2[k] for k in pick]
    out = i2 * (target // n2)
    rem = target - len(out)
    if rem:
        pick = gen.choice(n2, size=rem, replace=False)
        out.extend(i2[k] for k in pick)
    order = gen.permutation(len(out))
    return [out[k] for k in order]


def class0_base_order(i0, seed: int) -> list[int]:
    """One-time shuffled order of class-0 indices; epochs cycle through it."""
    i0 = list(i0)
    order = substream(seed, "rotating-base").permutation(len(i0))
    return [i0[k] for k in order]


def rotating_epoch(sets: ClassIndexSets, seed: int, epoch: int) -> BatchPlan:
    """N1 batches of fixed composition (2, 1, 1), built before augmentation."""
    n0, n1, n2 = sets.sizes
    if min(n0, n1, n2) < 1:
        raise SamplerError(f"rotating mode needs every class non-empty, got {sets.sizes}")
    base = class0_base_order(sets.i0, seed)
    d0 = 2 * n1
    start = epoch * d0
    draws0 = [base[(start + j) % n0] for j in range(d0)]

    perm1 = substream(seed, "rotating-c1", epoch).permutation(n1)
    c1 = [sets.i1[k] for k in perm1]
    c2 = upsample_class2(sets.i2, n1, seed, epoch)

    batches = tuple(
        (draws0[2 * b], draws0[2 * b + 1], c1[b], c2[b]) for b in range(n1)
    )
    return BatchPlan(batches, epoch, seed, "rotating")
