"""Training loop, experiment grid, result persistence.

One root seed fans out to fixed sub-streams (init, split, sampler,
augment) so toggling one randomized component never disturbs the
others. A run is fully determined by (dataset, config): predictions,
metrics, and emitted files are identical across executions apart from
wall-clock fields.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import losses as L
from .nn import engine as eng
from .batching import ClassIndexSets, rotating_epoch, standard_epoch
from .errors import ConfigurationError, SamplerError
from .metrics import MetricsReport, report
from .nn.engine import backward_total
from .nn.model import ModelConfig, forward, init_model
from .nn.optim import adam_step, cosine_lr, init_adam
from .reweight import class_grad_norms, combine_losses, compute_alpha
from .streams import substream_int
from .synthdata import ScanSample, augment, split_by_subject

# full-length reference schedule; desk-scale defaults are much shorter
PAPER_PRESET = {"epochs": 150, "lr_max": 1e-5, "lr_min": 1e-7}

LOSS_KINDS = ("ce", "weighted_ce", "focal", "ordinal")
BATCHING_MODES = ("standard", "rotating")
ROTATING_BATCH_SIZE = 4


@dataclass(frozen=True)
class ExperimentConfig:
    loss: str = "ce"
    batching: str = "standard"
    reweight: bool = False
    rotation: bool = False
    dft_fusion: bool = False
    epochs: int = 30
    batch_size: int = 4
    lr_max: float = 1e-4
    lr_min: float = 1e-5
    seed: int = 0
    focal_gamma: float = 2.0
    split_ratio: float = 0.8
    class_reduction: str = "mean"
    conv_channels: tuple[int, int] = (4, 8)
    trunk_width: int = 64
    crop: int = 28

    def validate(self) -> None:
        if self.loss not in LOSS_KINDS:
            raise ConfigurationError(f"unknown loss {self.loss!r}")
        if self.batching not in BATCHING_MODES:
            raise ConfigurationError(f"unknown batching mode {self.batching!r}")
        if self.batching == "rotating" and self.batch_size != ROTATING_BATCH_SIZE:
            raise ConfigurationError("rotating mode fixes batch_size at 4")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")
        if self.class_reduction not in ("mean", "sum"):
            raise ConfigurationError(f"unknown class_reduction {self.class_reduction!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        preset = data.pop("preset", None)
        if preset is not None:
            if preset != "paper":
                raise ConfigurationError(f"unknown preset {preset!r}")
            data = {**PAPER_PRESET, **data}
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "conv_channels" in data:
            data["conv_channels"] = tuple(data["conv_channels"])
        cfg = cls(**data)
        cfg.validate()
        return cfg


@dataclass
class RunResult:
    config: ExperimentConfig
    epoch_losses: list[float]
    epoch_reports: list[MetricsReport]
    final_report: MetricsReport
    predictions: list[tuple[int, int, int]]  # (dataset index, true, predicted)
    alpha_history: list[list[float]]
    steps_per_epoch: int
    wall_seconds: float

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "epoch_losses": self.epoch_losses,
            "epoch_reports": [r.to_dict() for r in self.epoch_reports],
            "final_report": self.final_report.to_dict(),
            "predictions": [list(p) for p in self.predictions],
            "alpha_history": self.alpha_history,
            "steps_per_epoch": self.steps_per_epoch,
            "wall_seconds": self.wall_seconds,
        }


def _model_config(config: ExperimentConfig) -> ModelConfig:
    return ModelConfig(
        height=config.crop,
        width=config.crop,
        conv_channels=config.conv_channels,
        trunk_width=config.trunk_width,
        dft_fusion=config.dft_fusion,
        ordinal_head=config.loss == "ordinal",
        seed=substream_int(config.seed, "init"),
    )


def _loss_variant(config: ExperimentConfig,
                  train_counts: np.ndarray) -> L.LossVariant:
    if config.loss == "weighted_ce":
        return L.LossVariant("weighted_ce", class_weights=tuple(
            L.weighted_ce_weights(train_counts)))
    return L.LossVariant(config.loss, gamma=config.focal_gamma)


def evaluate(params, model_cfg: ModelConfig, variant: L.LossVariant,
             images: np.ndarray, severities: np.ndarray,
             indices: np.ndarray) -> tuple[MetricsReport, list[tuple[int, int, int]]]:
    """Pure inference: no rotation, no reweighting, batching-independent."""
    sev_logits, _, _ = forward(params, images, model_cfg)
    preds = L.predict(variant, sev_logits.value)
    rep = report(severities, preds)
    triples = [(int(i), int(t), int(p))
               for i, t, p in zip(indices, severities, preds)]
    return rep, triples


def train(samples: list[ScanSample], config: ExperimentConfig) -> RunResult:
    """Train one configuration on an in-memory dataset."""
    t_start = time.perf_counter()
    config.validate()
    model_cfg = _model_config(config)

    split = split_by_subject(samples, config.split_ratio,
                             substream_int(config.seed, "split"))
    train_set = set(split.train_subjects)
    train_idx = np.array([i for i, s in enumerate(samples)
                          if s.subject_id in train_set], dtype=np.intp)
    val_idx = np.array([i for i, s in enumerate(samples)
                        if s.subject_id not in train_set], dtype=np.intp)
    severities = np.array([s.severity for s in samples], dtype=np.intp)
    axes = np.array([s.axis for s in samples], dtype=np.intp)

    train_counts = np.bincount(severities[train_idx], minlength=3)
    variant = _loss_variant(config, train_counts)
    variant.validate()

    params = init_model(model_cfg)
    adam = init_adam(params)

    if config.batching == "rotating":
        sets = ClassIndexSets.from_labels(train_idx, severities[train_idx])
        if min(sets.sizes) < 1:
            raise SamplerError(
                f"rotating mode needs all classes in the training split, got {sets.sizes}")
        batches_per_epoch = sets.sizes[1]
    else:
        sets = None
        batches_per_epoch = -(-len(train_idx) // config.batch_size)
    total_steps = max(1, config.epochs * batches_per_epoch)
    sampler_seed = substream_int(config.seed, "sampler")

    # validation pipeline is fixed: normalize + crop only
    val_images = np.stack([augment(samples[i].image, False, 0, config.crop)
                           for i in val_idx])[:, None]
    val_sev = severities[val_idx]

    epoch_losses: list[float] = []
    epoch_reports: list[MetricsReport] = []
    alpha_history: list[list[float]] = []
    predictions: list[tuple[int, int, int]] = []
    final_report: MetricsReport | None = None
    step = 0

    for epoch in range(config.epochs):
        if config.batching == "rotating":
            plan = rotating_epoch(sets, sampler_seed, epoch)
            index_batches = plan.batches
        else:
            plan = standard_epoch(len(train_idx), config.batch_size,
                                  sampler_seed, epoch)
            index_batches = tuple(tuple(int(train_idx[j]) for j in b)
                                  for b in plan.batches)

        loss_sum = 0.0
        for b, idxs in enumerate(index_batches):
            imgs = np.stack([
                augment(samples[i].image, config.rotation,
                        substream_int(config.seed, "augment", epoch, b, slot),
                        config.crop)
                for slot, i in enumerate(idxs)
            ])[:, None]
            sev_t = severities[list(idxs)]
            axis_t = axes[list(idxs)]

            sev_logits, axis_logits, tape = forward(params, imgs, model_cfg)
            per = L.per_sample_losses(variant, sev_logits, sev_t)
            ax = L.axis_loss(axis_logits, axis_t)
            if config.reweight:
                cls = L.per_class_losses(per, sev_t,
                                         reduction=config.class_reduction)
                alphas = compute_alpha(class_grad_norms(tape, cls, params))
                bundle = combine_losses(cls, alphas, ax)
                loss = bundle.l_total
                alpha_history.append([a for a, p in zip(alphas.values, alphas.present) if p])
            else:
                l_cls = eng.scale(eng.sum_all(per), 1.0 / per.value.shape[0])
                loss = l_cls + ax

            params.zero_grads()
            backward_total(tape, loss, 1.0)
            adam_step(params, adam,
                      cosine_lr(step, total_steps, config.lr_max, config.lr_min))
            step += 1
            loss_sum += float(loss.value)

        epoch_losses.append(loss_sum / max(1, len(index_batches)))
        rep, predictions = evaluate(params, model_cfg, variant,
                                    val_images, val_sev, val_idx)
        epoch_reports.append(rep)
        final_report = rep

    if final_report is None:  # epochs == 0: only the initial evaluation
        final_report, predictions = evaluate(params, model_cfg, variant,
                                             val_images, val_sev, val_idx)

    return RunResult(config, epoch_losses, epoch_reports, final_report,
                     predictions, alpha_history, batches_per_epoch,
                     time.perf_counter() - t_start)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepRow:
    config: ExperimentConfig
    result: RunResult | None = None
    error: str | None = None


def _run_one(args) -> SweepRow:
    samples, config = args
    try:
        return SweepRow(config, result=train(samples, config))
    except Exception as e:  # a failing run must not kill the sweep
        return SweepRow(config, error=f"{type(e).__name__}: {e}")


def sweep(samples: list[ScanSample], configs: list[ExperimentConfig],
          parallel: int = 1) -> list[SweepRow]:
    """Run every config on the shared dataset; failures become row errors."""
    jobs = [(samples, c) for c in configs]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


CSV_HEADER = ("method,batching,reweight,rotation,"
              "w_prec,w_rec,w_f1,w_f2,w_acc,"
              "m_prec,m_rec,m_f1,m_f2,m_acc,"
              "u_prec,u_rec,u_f1,u_f2,u_acc,mean")


def results_csv(rows: list[SweepRow]) -> str:
    lines = [CSV_HEADER]
    for row in rows:
        cfg = row.config
        prefix = [cfg.loss, cfg.batching,
                  "true" if cfg.reweight else "false",
                  "true" if cfg.rotation else "false"]
        if row.result is None:
            lines.append(",".join(prefix + [""] * 16))
            continue
        rep = row.result.final_report
        values = rep.as_row() + (rep.mean_of_15,)
        lines.append(",".join(prefix + [f"{v:.3f}" for v in values]))
    return "\n".join(lines) + "\n"


def results_json(rows: list[SweepRow]) -> str:
    payload = [{
        "config": row.config.to_dict(),
        "result": row.result.to_dict() if row.result else None,
        "error": row.error,
    } for row in rows]
    return json.dumps(payload, indent=1)


def emit_results(rows: list[SweepRow], csv_path=None, json_path=None) -> None:
    if csv_path is not None:
        with open(csv_path, "w") as fh:
            fh.write(results_csv(rows))
    if json_path is not None:
        with open(json_path, "w") as fh:
            fh.write(results_json(rows))
