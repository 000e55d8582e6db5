"""Supervised codebook learning against equal-gain-combining targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import PhaseCodebook, egc_gain
from .gradients import supervised_batch_gradient
from .quantizer import QuantizerConfig
from .training import TrainReport, descend, training_channels


@dataclass(frozen=True)
class SupervisedConfig:
    num_beams: int
    batch_size: int = 500
    learning_rate: float = 0.1
    epochs: int = 5
    optimizer: str = "adam"
    init: str = "uniform"
    seed: int = 0
    quantizer: QuantizerConfig | None = None
    snapshots: bool = False

    def __post_init__(self):
        if self.num_beams < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("num_beams and batch_size must be positive, epochs non-negative")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


def build_training_pairs(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Training channels and their EGC targets ``||h||_1^2 / M``."""
    H = training_channels(dataset)
    return H, egc_gain(H)


def train(config: SupervisedConfig, dataset, initial: PhaseCodebook | None = None) -> TrainReport:
    """Mini-batch descent of the MSE between best-beam gain and EGC gain."""
    H = training_channels(dataset)

    def step(codebook, channels):
        loss, grads, _ = supervised_batch_gradient(codebook, channels, egc_gain(channels))
        return loss, grads, None

    return descend(config, H, initial, step)
