import numpy as np
import pytest
import torch
import torch.nn as nn

from cfxgen import ClassifierConfig, SynthSpec, build, synthesize, train
from cfxgen.classifier import ClassifierNet


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """30 images per class at 64px: enough to train quick smoke models."""
    out = tmp_path_factory.mktemp("tinydata")
    return synthesize(SynthSpec(n_per_class=30, resolution=64, noise_seed=7), out)


@pytest.fixture(scope="session")
def tiny_classifier(tiny_manifest):
    config = ClassifierConfig.small(resolution=64, epochs=12)
    return train(build(config, seed=3), tiny_manifest, config, seed=3)


class MicroGen(nn.Module):
    """Single 3x3 conv with tanh output: the smallest valid generator."""

    def __init__(self, seed: int):
        super().__init__()
        torch.manual_seed(seed)
        self.conv = nn.Conv2d(1, 1, 3, padding=1)

    def forward(self, x):
        return torch.tanh(self.conv(x))


class MicroDisc(nn.Module):
    def __init__(self, seed: int):
        super().__init__()
        torch.manual_seed(seed)
        self.conv = nn.Conv2d(1, 1, 3, padding=1, stride=2)

    def forward(self, x):
        return self.conv(x)


def micro_classifier_net(side: int, seed: int) -> ClassifierNet:
    torch.manual_seed(seed)
    return ClassifierNet(nn.Sequential(nn.Flatten(), nn.Linear(side * side, 2)))


class MicroBundle:
    """Anything with g/f/d_x/d_y attributes satisfies the objective's contract."""

    def __init__(self, g, f, d_x, d_y):
        self.g, self.f, self.d_x, self.d_y = g, f, d_x, d_y


@pytest.fixture
def micro_nets():
    g, f = MicroGen(1), MicroGen(2)
    d_x, d_y = MicroDisc(3), MicroDisc(4)
    clf = micro_classifier_net(8, 5)
    for p in clf.parameters():
        p.requires_grad_(False)
    return MicroBundle(g, f, d_x, d_y), clf


def random_batch(n: int, side: int, seed: int) -> torch.Tensor:
    rng = np.random.default_rng(seed)
    return torch.from_numpy(rng.uniform(-1, 1, size=(n, 1, side, side)).astype(np.float32))
