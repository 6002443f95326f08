import numpy as np
import pytest
import torch

from railscan import data, datagen
from railscan.checkpoint import Checkpoint
from railscan.model import build_networks
from railscan.training import TrainConfig, compute_error_map, train

GATE_SEED = 7


@pytest.fixture(scope="session")
def networks():
    return build_networks(0)


@pytest.fixture()
def image_batch():
    g = torch.Generator().manual_seed(123)
    return torch.empty(4, 3, 128, 128).uniform_(-1.0, 1.0, generator=g)


@pytest.fixture(scope="session")
def gate_dataset(tmp_path_factory):
    """The acceptance dataset: 256 train normals, 50 + 50 test, defaults."""
    root = tmp_path_factory.mktemp("gate_dataset")
    return datagen.build_dataset(
        256, 50, 50, datagen.SceneParams(), datagen.AnomalySpec(), root, seed=GATE_SEED
    )


class GateRun:
    """Shared end-to-end run: the acceptance dataset plus 15-epoch training."""

    def __init__(self, manifest):
        self.manifest = manifest
        self.train_images = data.load_images(manifest, manifest.train_rows)
        self.test_rows = manifest.test_rows
        self.test_images = data.load_images(manifest, self.test_rows)
        self.labels = np.array([r.label == "abnormal" for r in self.test_rows])
        self.config = TrainConfig(epochs=15, batch_size=24, learning_rate=2e-4,
                                  beta1=0.5, beta2=0.9, seed=GATE_SEED)
        ckpt, self.log = train(self.config, self.train_images)
        error_map = compute_error_map(ckpt.encoder, ckpt.decoder, self.train_images)
        self.checkpoint = Checkpoint(
            ckpt.encoder, ckpt.decoder, ckpt.discriminator, error_map, self.config
        )


@pytest.fixture(scope="session")
def gate_run(gate_dataset):
    return GateRun(gate_dataset)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small dataset for fast pipeline tests: 12 train, 4+4 test."""
    root = tmp_path_factory.mktemp("tiny_dataset")
    return datagen.build_dataset(
        12, 4, 4, datagen.SceneParams(), datagen.AnomalySpec(), root, seed=11
    )


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_dataset):
    """Two-epoch checkpoint over the tiny dataset, with error map."""
    images = data.load_images(tiny_dataset, tiny_dataset.train_rows)
    cfg = TrainConfig(epochs=2, batch_size=6, seed=3)
    ckpt, _ = train(cfg, images)
    error_map = compute_error_map(ckpt.encoder, ckpt.decoder, images)
    return Checkpoint(ckpt.encoder, ckpt.decoder, ckpt.discriminator, error_map, cfg)
