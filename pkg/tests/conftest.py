import numpy as np
import pytest

from pyrocast.decoder import DecoderBlockConfig
from pyrocast.models import ModelConfig


def toy_slice_config(**overrides) -> DecoderBlockConfig:
    base = dict(hidden=16, n_heads=2, n_kv=1, head_dim=8, ffn_inner=16,
                block_count=1, seed=7)
    base.update(overrides)
    return DecoderBlockConfig(**base)


def toy_model_config(**overrides) -> ModelConfig:
    base = dict(variant="internal_world", input_dim=8, branches=4,
                branch_hidden=4, branch_out=4, hidden=16,
                classifier_widths=(8, 4, 1), seed=3,
                slice=toy_slice_config())
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
