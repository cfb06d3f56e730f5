"""Synthetic 2D "scan" generator with graded artifact corruptions.

Each subject contributes 1-3 scans in distinct orientations. The base
image encodes the orientation (horizontal / vertical / diagonal
gradient plus a centered disc) so the auxiliary axis task is
learnable, and a per-scan corruption of the requested artifact type
and severity is applied on top. Corruption magnitudes are calibrated
so mean absolute deviation from the clean image strictly increases
with severity. Texture amplitude varies per subject, which makes clean
scans of noisy-looking subjects overlap with mildly corrupted scans of
smooth subjects; without that overlap the severity task is trivially
separable and batching strategy would not matter.

On-disk format: `manifest.json` (version, spec echo, per-record
metadata with byte offsets) next to `images.f32`, raw little-endian
float32 pixels concatenated in record order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError, GeneratorError, SplitError
from .streams import substream, substream_int

ARTIFACT_TYPES = (
    "noise", "zipper", "positioning", "banding", "motion", "contrast", "distortion",
)

# severity class counts observed per artifact before any simulation;
# used as generator defaults
DEFAULT_COUNTS = {
    "noise": (426, 60, 46),
    "zipper": (398, 105, 29),
    "positioning": (470, 47, 15),
    "banding": (504, 15, 13),
    "motion": (384, 78, 70),
    "contrast": (375, 134, 23),
    "distortion": (435, 56, 41),
}

TEXTURE_AMPLITUDE = (0.01, 0.50)  # per-subject range

NOISE_SIGMA = (0.0, 0.15, 0.40)
ZIPPER_AMPLITUDE = (0.0, 0.5, 1.0)
BANDING_AMPLITUDE = (0.0, 0.3, 0.7)
CONTRAST_FACTOR = (1.0, 0.6, 0.3)
MOTION_SHIFT = (0, 2, 5)
POSITION_SHIFT = (0, 3, 7)
DISTORTION_AMPLITUDE = (0.0, 1.5, 4.0)


@dataclass(frozen=True)
class DatasetSpec:
    artifact_type: str
    counts: tuple[int, int, int]
    size: int = 32
    seed: int = 0

    def validate(self) -> None:
        if self.artifact_type not in ARTIFACT_TYPES:
            raise GeneratorError(f"unknown artifact type {self.artifact_type!r}")
        if len(self.counts) != 3 or min(self.counts) < 0:
            raise GeneratorError("counts must be three non-negative integers")
        if sum(self.counts) < 4:
            raise GeneratorError("need at least 4 samples in total")
        if self.size < 8:
            raise GeneratorError("image size must be at least 8")

    @classmethod
    def for_artifact(cls, artifact_type: str, seed: int = 0, size: int = 32,
                     counts=None) -> "DatasetSpec":
        if counts is None:
            counts = DEFAULT_COUNTS.get(artifact_type)
            if counts is None:
                raise GeneratorError(f"unknown artifact type {artifact_type!r}")
        return cls(artifact_type, tuple(int(c) for c in counts), size, seed)


@dataclass
class ScanSample:
    image: np.ndarray  # (H, W) float64
    severity: int
    axis: int
    subject_id: int
    artifact_type: str


@dataclass(frozen=True)
class SplitManifest:
    train_subjects: tuple[int, ...]
    val_subjects: tuple[int, ...]
    ratio: float


def base_pattern(axis: int, size: int) -> np.ndarray:
    """Orientation-coded smooth pattern: gradient direction encodes the
    axis; a centered disc gives every image some shared structure."""
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    if axis == 0:
        grad = xx
    elif axis == 1:
        grad = yy
    elif axis == 2:
        grad = (xx + yy) / 2.0
    else:
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    disc = ((yy - 0.5) ** 2 + (xx - 0.5) ** 2) <= 0.25 ** 2
    return grad + 0.5 * disc


def _shift2d(image: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate with zero fill."""
    out = np.zeros_like(image)
    h, w = image.shape
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    ys_src = slice(max(-dy, 0), min(h - dy, h))
    xs_src = slice(max(-dx, 0), min(w - dx, w))
    out[ys, xs] = image[ys_src, xs_src]
    return out


def apply_artifact(image: np.ndarray, artifact_type: str, severity: int,
                   seed: int) -> np.ndarray:
    """Corrupt `image` at the given severity; severity 0 is the identity."""
    if artifact_type not in ARTIFACT_TYPES:
        raise ValueError(f"unknown artifact type {artifact_type!r}")
    if severity not in (0, 1, 2):
        raise ValueError(f"severity must be 0, 1 or 2, got {severity}")
    x = np.asarray(image, dtype=np.float64)
    if severity == 0:
        return x.copy()
    gen = substream(seed, "artifact", artifact_type)
    h, w = x.shape

    if artifact_type == "noise":
        return x + gen.normal(0.0, NOISE_SIGMA[severity], x.shape)

    if artifact_type == "zipper":
        a = ZIPPER_AMPLITUDE[severity]
        out = x.copy()
        offset = int(gen.integers(0, 8))
        stripes = a * np.where(np.arange(w) % 2 == 0, 1.0, -1.0)
        out[offset::8, :] = stripes
        return out

    if artifact_type == "banding":
        a = BANDING_AMPLITUDE[severity]
        phase = gen.uniform(0.0, 2.0 * np.pi)
        rows = np.arange(h)
        return x + a * np.sin(2.0 * np.pi * rows / 8.0 + phase)[:, None]

    if artifact_type == "contrast":
        f = CONTRAST_FACTOR[severity]
        mean = x.mean()
        return mean + f * (x - mean)

    if artifact_type == "motion":
        d = MOTION_SHIFT[severity]
        return (x + _shift2d(x, 0, d) + _shift2d(x, 0, -d)) / 3.0

    if artifact_type == "positioning":
        d = POSITION_SHIFT[severity]
        sy, sx = gen.choice([-1, 1]), gen.choice([-1, 1])
        return _shift2d(x, int(sy) * d, int(sx) * d)

    # distortion: smooth sinusoidal coordinate warp, nearest neighbor
    a = DISTORTION_AMPLITUDE[severity]
    p1, p2 = gen.uniform(0.0, 2.0 * np.pi, 2)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    src_y = yy + a * np.sin(2.0 * np.pi * 2.0 * xx / w + p1)
    src_x = xx + a * np.sin(2.0 * np.pi * 2.0 * yy / h + p2)
    iy = np.clip(np.rint(src_y).astype(np.intp), 0, h - 1)
    ix = np.clip(np.rint(src_x).astype(np.intp), 0, w - 1)
    return x[iy, ix]


def generate_dataset(spec: DatasetSpec) -> list[ScanSample]:
    """Deterministic dataset with exactly the requested severity counts."""
    spec.validate()
    total = sum(spec.counts)

    subj_gen = substream(spec.seed, "subjects")
    scans: list[tuple[int, int]] = []  # (subject_id, axis)
    subject = 0
    remaining = total
    while remaining > 0:
        k = min(int(subj_gen.integers(1, 4)), remaining)
        axes = subj_gen.choice(3, size=k, replace=False)
        scans.extend((subject, int(a)) for a in axes)
        subject += 1
        remaining -= k

    labels = np.repeat([0, 1, 2], spec.counts)
    labels = labels[substream(spec.seed, "labels").permutation(total)]

    samples = []
    for index, ((subject_id, axis), severity) in enumerate(zip(scans, labels)):
        base = base_pattern(axis, spec.size)
        tex_gen = substream(spec.seed, "texture", subject_id, axis)
        amplitude = substream(spec.seed, "texture-amp", subject_id).uniform(
            *TEXTURE_AMPLITUDE)
        texture = tex_gen.normal(0.0, amplitude, base.shape)
        image = apply_artifact(base + texture, spec.artifact_type, int(severity),
                               substream_int(spec.seed, "artifact", index))
        samples.append(ScanSample(image, int(severity), axis, subject_id,
                                  spec.artifact_type))
    return samples


def split_by_subject(samples: list[ScanSample], ratio: float = 0.8,
                     seed: int = 0) -> SplitManifest:
    """Seeded subject-level split; no subject straddles the boundary."""
    subjects = sorted({s.subject_id for s in samples})
    if len(subjects) < 2:
        raise SplitError("need at least 2 subjects to split")
    if not 0.0 < ratio < 1.0:
        raise SplitError("ratio must lie strictly between 0 and 1")
    order = substream(seed, "split").permutation(len(subjects))
    shuffled = [subjects[k] for k in order]
    n_train = math.ceil(ratio * len(subjects))
    return SplitManifest(tuple(shuffled[:n_train]), tuple(shuffled[n_train:]), ratio)


# ---------------------------------------------------------------------------
# augmentation


def normalize(image: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance; constant images map to all zeros."""
    x = np.asarray(image, dtype=np.float64)
    if np.ptp(x) == 0.0:  # exactly constant: centered values are zero
        return np.zeros_like(x)
    var = x.var()
    return (x - x.mean()) / np.sqrt(max(var, 1e-8))


def center_crop(image: np.ndarray, size: int) -> np.ndarray:
    h, w = image.shape
    if h < size or w < size:
        raise ValueError(f"image {h}x{w} smaller than crop {size}")
    top = (h - size) // 2
    left = (w - size) // 2
    return image[top:top + size, left:left + size].copy()


def rotate_nn(image: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate about the image center, nearest neighbor, zero fill."""
    h, w = image.shape
    theta = math.radians(angle_deg)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    # inverse map: source = R(-theta) applied to destination offsets
    src_y = cy + math.cos(theta) * dy + math.sin(theta) * dx
    src_x = cx - math.sin(theta) * dy + math.cos(theta) * dx
    iy = np.rint(src_y).astype(np.intp)
    ix = np.rint(src_x).astype(np.intp)
    inside = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
    out = np.zeros_like(image)
    out[inside] = image[iy[inside], ix[inside]]
    return out


def augment(image: np.ndarray, rotation_enabled: bool, seed: int,
            crop: int = 28) -> np.ndarray:
    """Normalize, center crop, then optionally rotate by a seeded angle
    uniform in [-180, 180] degrees. Validation never rotates."""
    out = center_crop(normalize(image), crop)
    if rotation_enabled:
        angle = substream(seed, "rotation").uniform(-180.0, 180.0)
        out = rotate_nn(out, angle)
    return out


# ---------------------------------------------------------------------------
# on-disk format

FORMAT_VERSION = 1


def save_dataset(samples: list[ScanSample], spec: DatasetSpec, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    blobs = []
    px = spec.size * spec.size * 4
    for index, s in enumerate(samples):
        records.append({
            "index": index,
            "subject_id": s.subject_id,
            "axis": s.axis,
            "severity": s.severity,
            "artifact_type": s.artifact_type,
            "offset": index * px,
        })
        blobs.append(s.image.astype("<f4").tobytes())
    manifest = {
        "version": FORMAT_VERSION,
        "spec": {
            "artifact_type": spec.artifact_type,
            "counts": list(spec.counts),
            "size": spec.size,
            "seed": spec.seed,
        },
        "records": records,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    (out / "images.f32").write_bytes(b"".join(blobs))


def load_dataset(data_dir) -> tuple[list[ScanSample], DatasetSpec]:
    src = Path(data_dir)
    try:
        manifest = json.loads((src / "manifest.json").read_text())
    except FileNotFoundError as e:
        raise DatasetFormatError(f"missing manifest in {src}") from e
    if manifest.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {manifest.get('version')}")
    sp = manifest["spec"]
    spec = DatasetSpec(sp["artifact_type"], tuple(sp["counts"]), sp["size"], sp["seed"])
    records = manifest["records"]
    blob = (src / "images.f32").read_bytes()
    expected = len(records) * spec.size * spec.size * 4
    if len(blob) != expected:
        raise DatasetFormatError(
            f"images.f32 holds {len(blob)} bytes, expected {expected}")
    pixels = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    per = spec.size * spec.size
    samples = []
    for rec in records:
        if rec["offset"] != rec["index"] * per * 4:
            raise DatasetFormatError(f"record {rec['index']} has inconsistent offset")
        img = pixels[rec["index"] * per:(rec["index"] + 1) * per].reshape(
            spec.size, spec.size)
        samples.append(ScanSample(img, rec["severity"], rec["axis"],
                                  rec["subject_id"], rec["artifact_type"]))
    return samples, spec
