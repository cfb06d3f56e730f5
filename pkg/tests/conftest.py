import numpy as np
import pytest

from scanqa.nn.model import ModelConfig, init_model

TINY = ModelConfig(height=10, width=10, conv_channels=(1, 2), trunk_width=6)


def make_case(seed=0, config=TINY, batch_size=3):
    """Seeded (params, batch, severity targets, axis targets)."""
    gen = np.random.default_rng(seed)
    cfg = ModelConfig(**{**config.__dict__, "seed": seed})
    params = init_model(cfg)
    for name in params.names:  # move biases off zero so cases are generic
        params.tensors[name] += gen.normal(0.0, 0.05, params.tensors[name].shape)
    batch = gen.normal(0.0, 1.0, (batch_size, 1, cfg.height, cfg.width))
    sev = gen.integers(0, 3, size=batch_size)
    axes = gen.integers(0, 3, size=batch_size)
    return cfg, params, batch, sev, axes


@pytest.fixture
def tiny_case():
    return make_case(seed=0)
