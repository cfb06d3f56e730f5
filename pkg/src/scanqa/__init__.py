"""Imbalance-aware severity classification on synthetic 2D scans.

Core pieces: a tape-based autodiff engine with a two-head conv model,
per-class gradient-norm loss reweighting, a rotating balanced batch
sampler, a loss zoo (CE / weighted CE / focal / ordinal), a synthetic
scan generator, the metrics battery, and a deterministic experiment
harness with a CLI.
"""

from .harness import ExperimentConfig, RunResult, sweep, train
from .metrics import MetricsReport, report
from .nn.model import ModelConfig
from .synthdata import DatasetSpec, generate_dataset, load_dataset, save_dataset

__version__ = "0.1.0"

__all__ = [
    "DatasetSpec",
    "ExperimentConfig",
    "MetricsReport",
    "ModelConfig",
    "RunResult",
    "generate_dataset",
    "load_dataset",
    "report",
    "save_dataset",
    "sweep",
    "train",
    "__version__",
]
