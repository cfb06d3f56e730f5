"""Two-head convolutional classifier with an optional frequency branch.

Encoder: two 3x3 conv blocks (valid padding, ReLU, 2x2 max pool), a
dense trunk, and two affine heads: severity (3 logits, or 2 threshold
logits in ordinal mode) and axis (3 logits). With dft_fusion on, each
image's log-magnitude spectrum runs through a second encoder at half
width and its trunk features are concatenated with the spatial ones
before the heads. The severity-head affine layer (weights + bias) is
the subset used for per-class gradient norms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, NumericFault
from ..streams import substream
from . import engine as eng
from .dft import dft_features
from .engine import ParamStore, Tape, Var

SEVERITY_CLASSES = 3
AXIS_CLASSES = 3


@dataclass(frozen=True)
class ModelConfig:
    height: int = 28
    width: int = 28
    conv_channels: tuple[int, int] = (4, 8)
    trunk_width: int = 64
    severity_classes: int = SEVERITY_CLASSES
    axis_classes: int = AXIS_CLASSES
    dft_fusion: bool = False
    ordinal_head: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.severity_classes != SEVERITY_CLASSES:
            raise ConfigurationError("severity_classes is fixed at 3")
        if self.axis_classes != AXIS_CLASSES:
            raise ConfigurationError("axis_classes is fixed at 3")
        if min(self.conv_channels) < 1 or self.trunk_width < 1:
            raise ConfigurationError("channel and trunk widths must be positive")
        if self.conv_out_hw()[0] < 1 or self.conv_out_hw()[1] < 1:
            raise ConfigurationError(
                f"input {self.height}x{self.width} too small for two conv blocks"
            )

    def conv_out_hw(self) -> tuple[int, int]:
        h = ((self.height - 2) // 2 - 2) // 2
        w = ((self.width - 2) // 2 - 2) // 2
        return h, w

    @property
    def severity_width(self) -> int:
        return self.severity_classes - 1 if self.ordinal_head else self.severity_classes

    @property
    def freq_channels(self) -> tuple[int, int]:
        return (max(1, self.conv_channels[0] // 2),
                max(1, self.conv_channels[1] // 2))

    @property
    def freq_trunk_width(self) -> int:
        return max(1, self.trunk_width // 2)

    @property
    def feature_width(self) -> int:
        return self.trunk_width + (self.freq_trunk_width if self.dft_fusion else 0)


def _glorot(gen: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return gen.uniform(-limit, limit, size=shape)


def _encoder_shapes(cfg: ModelConfig, channels, trunk_width):
    h, w = cfg.conv_out_hw()
    c1, c2 = channels
    flat = c2 * h * w
    return {
        "conv1.w": ((c1, 1, 3, 3), 9, c1 * 9),
        "conv2.w": ((c2, c1, 3, 3), c1 * 9, c2 * 9),
        "trunk.w": ((flat, trunk_width), flat, trunk_width),
    }


def init_model(config: ModelConfig) -> ParamStore:
    """Deterministic Glorot-uniform weights, zero biases, from config.seed."""
    config.validate()
    params = ParamStore()

    def add_encoder(prefix, channels, trunk_width):
        for name, (shape, fi, fo) in _encoder_shapes(config, channels, trunk_width).items():
            full = f"{prefix}{name}"
            gen = substream(config.seed, "init", full)
            params.add(full, _glorot(gen, shape, fi, fo))
            bias_name = full.replace(".w", ".b")
            params.add(bias_name, np.zeros(shape[-1] if name == "trunk.w" else shape[0]))

    add_encoder("", config.conv_channels, config.trunk_width)
    if config.dft_fusion:
        add_encoder("freq_", config.freq_channels, config.freq_trunk_width)

    feat = config.feature_width
    for head, width, is_cls in (
        ("head_severity", config.severity_width, True),
        ("head_axis", config.axis_classes, False),
    ):
        gen = substream(config.seed, "init", f"{head}.w")
        params.add(f"{head}.w", _glorot(gen, (feat, width), feat, width), head=is_cls)
        params.add(f"{head}.b", np.zeros(width), head=is_cls)
    return params


def _guard(name: str, var: Var) -> Var:
    if not np.isfinite(var.value).all():
        raise NumericFault(f"non-finite activation after {name}")
    return var


def _encode(tape: Tape, x: Var, prefix: str) -> Var:
    """Conv-conv-dense feature extractor; returns (B, trunk_width) features."""
    h = eng.conv3x3(x, tape.param(f"{prefix}conv1.w"))
    h = eng.add_chan_bias(h, tape.param(f"{prefix}conv1.b"))
    h = eng.relu(_guard(f"{prefix}conv1", h))
    h = eng.maxpool2(h)
    h = eng.conv3x3(h, tape.param(f"{prefix}conv2.w"))
    h = eng.add_chan_bias(h, tape.param(f"{prefix}conv2.b"))
    h = eng.relu(_guard(f"{prefix}conv2", h))
    h = eng.maxpool2(h)
    h = eng.flatten(h)
    h = eng.matmul(h, tape.param(f"{prefix}trunk.w"))
    h = eng.add_rowvec(h, tape.param(f"{prefix}trunk.b"))
    return eng.relu(_guard(f"{prefix}trunk", h))


def forward(params: ParamStore, batch: np.ndarray,
            config: ModelConfig) -> tuple[Var, Var, Tape]:
    """Run the model on a (B,1,H,W) batch; returns logits and the tape."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4 or batch.shape[1] != 1:
        raise ConfigurationError(f"expected batch (B,1,H,W), got {batch.shape}")
    if batch.shape[2] != config.height or batch.shape[3] != config.width:
        raise ConfigurationError(
            f"batch {batch.shape[2]}x{batch.shape[3]} does not match "
            f"config {config.height}x{config.width}"
        )
    if not np.isfinite(batch).all():
        raise NumericFault("non-finite input batch")

    tape = Tape(params)
    feats = _encode(tape, tape.constant(batch), "")
    if config.dft_fusion:
        spectra = np.stack([dft_features(img) for img in batch[:, 0]])
        freq = _encode(tape, tape.constant(spectra[:, None]), "freq_")
        feats = eng.concat_cols(feats, freq)

    sev = eng.add_rowvec(eng.matmul(feats, tape.param("head_severity.w")),
                         tape.param("head_severity.b"))
    axis = eng.add_rowvec(eng.matmul(feats, tape.param("head_axis.w")),
                          tape.param("head_axis.b"))
    _guard("head_severity", sev)
    _guard("head_axis", axis)
    tape.severity_logits = sev
    tape.axis_logits = axis
    return sev, axis, tape
