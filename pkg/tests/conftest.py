import numpy as np
import pytest

from wogma.config import TrainConfig
from wogma.graph import build_spatial_graph
from wogma.model import ActionDetector


def micro_config(**overrides):
    """Tiny-but-complete model settings for fast structural tests."""
    base = dict(tau=4, stride=4, max_frames=12, hidden=8, feature_dim=8,
                gcn_channels=4, scales=2, n_c=1, epochs=2, lr=1e-3,
                weight_decay=0.0, seed=0, kappa=8)
    base.update(overrides)
    return TrainConfig(**base)


def micro_model(**overrides):
    """Path-graph model: N=3, tau=4, L=3 clips of C=3 channels."""
    skeleton = build_spatial_graph([(1, 2), (2, 3)], 3)
    return ActionDetector(micro_config(**overrides), skeleton=skeleton)


def micro_clips(seed=0, clip_count=3, model=None):
    model = model or micro_model()
    rng = np.random.default_rng(seed)
    return rng.standard_normal(
        (clip_count, model.config.tau, model.skeleton.joint_count,
         model.config.input_channels))


@pytest.fixture
def small_training_config():
    """18-joint config small enough for seconds-scale training tests."""
    return TrainConfig(tau=20, stride=20, max_frames=120, hidden=16,
                       feature_dim=16, gcn_channels=8, scales=3, n_c=1,
                       epochs=2, lr=1e-3, weight_decay=1e-4, seed=7)
