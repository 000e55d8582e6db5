"""Pieces shared by the supervised and self-supervised trainers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .array_channel import ChannelDataset
from .codebook import PhaseCodebook, best_gains, dft_codebook, egc_gain
from .gradients import OptimizerState, apply_update
from .quantizer import PhaseQuantizer


@dataclass
class TrainReport:
    """Per-epoch training curves plus the learned codebook.

    ``egc_ratio[e]`` is the mean best-beam gain over the training channels at
    the end of epoch ``e`` divided by their mean equal-gain-combining gain.
    """

    loss: list = field(default_factory=list)
    mean_gain: list = field(default_factory=list)
    mean_egc: list = field(default_factory=list)
    egc_ratio: list = field(default_factory=list)
    final_codebook: PhaseCodebook | None = None
    snapshots: list = field(default_factory=list)
    batch_records: list = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.loss)

    def record_epoch(self, loss: float, codebook: PhaseCodebook, channels: np.ndarray, snapshot: bool):
        gains, _ = best_gains(codebook, channels)
        egc = egc_gain(channels)
        self.loss.append(float(loss))
        self.mean_gain.append(float(gains.mean()))
        self.mean_egc.append(float(egc.mean()))
        self.egc_ratio.append(float(gains.mean() / egc.mean()) if egc.mean() > 0 else 0.0)
        if snapshot:
            self.snapshots.append(codebook)

    def records(self) -> list[dict]:
        """Log records: one per epoch, then any per-batch records."""
        out = [
            {
                "type": "epoch",
                "epoch": e,
                "loss": self.loss[e],
                "mean_gain": self.mean_gain[e],
                "mean_egc": self.mean_egc[e],
                "egc_ratio": self.egc_ratio[e],
            }
            for e in range(self.epochs)
        ]
        return out + [dict(type="batch", **r) for r in self.batch_records]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())


def training_channels(dataset) -> np.ndarray:
    if isinstance(dataset, ChannelDataset):
        H = dataset.train
    else:
        H = np.atleast_2d(np.asarray(dataset, dtype=complex))
    if H.shape[0] == 0:
        raise ValueError("no training channels")
    return H


def initial_codebook(num_beams: int, num_antennas: int, rule: str, rng: np.random.Generator) -> PhaseCodebook:
    if rule == "uniform":
        return PhaseCodebook.random(num_beams, num_antennas, rng)
    if rule == "dft":
        return dft_codebook(num_antennas, num_beams)
    if rule == "zeros":
        return PhaseCodebook(np.zeros((num_beams, num_antennas)))
    raise ValueError(f"unknown phase init rule {rule!r}")


def check_initial(codebook: PhaseCodebook, num_beams: int, num_antennas: int) -> None:
    if codebook.phases.shape != (num_beams, num_antennas):
        raise ValueError(
            f"initial codebook is {codebook.phases.shape}, expected ({num_beams}, {num_antennas})"
        )


def minibatches(num_samples: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(num_samples)
    for start in range(0, num_samples, batch_size):
        yield perm[start:start + batch_size]


def descend(config, H: np.ndarray, initial: PhaseCodebook | None, batch_step) -> TrainReport:
    """Shared epoch/mini-batch loop with optional quantize-while-training.

    ``batch_step(codebook, channels)`` returns ``(loss, grads, record)``;
    ``record`` (a dict or None) is appended to the report's batch records.
    With a quantizer, gradients are taken at the snapped codebook and applied
    to full-precision latent phases (unless ``keep_latent`` is off, in which
    case the snapped phases themselves are updated).
    """
    M = H.shape[1]
    rng = np.random.default_rng(config.seed)
    if initial is None:
        latent = initial_codebook(config.num_beams, M, config.init, rng)
    else:
        check_initial(initial, config.num_beams, M)
        latent = initial
    state = OptimizerState(rule=config.optimizer, learning_rate=config.learning_rate)
    qcfg = config.quantizer
    quantizer = PhaseQuantizer(qcfg) if qcfg is not None else None
    per_update = quantizer is not None and qcfg.schedule == "update"
    codebook = quantizer(latent) if per_update else latent
    if per_update and not qcfg.keep_latent:
        latent = codebook

    report = TrainReport()
    for epoch in range(config.epochs):
        total = 0.0
        for batch, idx in enumerate(minibatches(H.shape[0], config.batch_size, rng)):
            loss, grads, record = batch_step(codebook, H[idx])
            latent, state = apply_update(latent, grads, state)
            if per_update:
                codebook = quantizer(latent)
                if not qcfg.keep_latent:
                    latent = codebook
            else:
                codebook = latent
            total += loss * idx.size
            if record is not None:
                report.batch_records.append({"epoch": epoch, "batch": batch, **record})
        if quantizer is not None and not per_update:
            codebook = quantizer(latent)
            if not qcfg.keep_latent:
                latent = codebook
        report.record_epoch(total / H.shape[0], codebook, H, config.snapshots)
    if quantizer is not None and config.epochs == 0:
        codebook = quantizer(latent)
    report.final_codebook = codebook
    return report
