"""Online self-supervised codebook learning from beam-sweep measurements.

Each presented user is swept with every beam; the strongest beam becomes the
label, a cross-entropy loss sharpens that beam, and the missing channel in
the backward pass is replaced by a pseudo-inverse estimate from the sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import PhaseCodebook, phases_to_weights
from .gradients import selfsup_batch_gradient
from .quantizer import QuantizerConfig
from .training import TrainReport, descend, training_channels

PINV_RCOND = 1e-10


@dataclass(frozen=True)
class SelfSupConfig:
    num_beams: int
    batch_size: int = 500
    learning_rate: float = 0.1
    epochs: int = 5
    optimizer: str = "adam"
    init: str = "uniform"
    pilot_snr_db: float | None = None
    seed: int = 0
    quantizer: QuantizerConfig | None = None
    snapshots: bool = False

    def __post_init__(self):
        if self.num_beams < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("num_beams and batch_size must be positive, epochs non-negative")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")

    @property
    def noise_std(self) -> float:
        if self.pilot_snr_db is None:
            return 0.0
        return float(10 ** (-self.pilot_snr_db / 20))


@dataclass(frozen=True)
class SweepRegister:
    received: np.ndarray


def sweep_batch(
    codebook: PhaseCodebook, H: np.ndarray, noise_std: float = 0.0, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Received pilots ``w_n^H (h + n_n)`` for every channel row and beam.

    Every beam sees its own receive-noise vector, i.i.d. complex Gaussian with
    per-antenna variance ``noise_std**2``.
    """
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    if H.shape[1] != codebook.num_antennas:
        raise ValueError("channel length does not match the codebook")
    W = phases_to_weights(codebook)
    Z = H @ W.conj()
    if noise_std > 0:
        if rng is None:
            raise ValueError("a random generator is needed for noisy sweeps")
        shape = (H.shape[0], codebook.num_beams, codebook.num_antennas)
        noise = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * (noise_std / np.sqrt(2))
        Z = Z + np.einsum("bnm,mn->bn", noise, W.conj())
    return Z


def sweep(codebook: PhaseCodebook, h: np.ndarray, noise_std: float = 0.0, rng=None) -> SweepRegister:
    h = np.asarray(h, dtype=complex)
    if h.ndim != 1:
        raise ValueError("sweep expects a single channel vector")
    return SweepRegister(sweep_batch(codebook, h[None, :], noise_std, rng)[0])


def estimator_matrix(codebook: PhaseCodebook) -> np.ndarray:
    """``(W^H)^+`` with singular values below ``1e-10 * s_max`` discarded."""
    WH = phases_to_weights(codebook).conj().T
    sv = np.linalg.svd(WH, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        raise np.linalg.LinAlgError("codebook has rank zero")
    return np.linalg.pinv(WH, rcond=PINV_RCOND)


def estimate_channel(codebook: PhaseCodebook, register: SweepRegister | np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares channel from one sweep register."""
    z = register.received if isinstance(register, SweepRegister) else np.asarray(register, dtype=complex)
    if z.shape[-1] != codebook.num_beams:
        raise ValueError(f"register holds {z.shape[-1]} beams, codebook has {codebook.num_beams}")
    return z @ estimator_matrix(codebook).T


def train_online(config: SelfSupConfig, dataset, initial: PhaseCodebook | None = None) -> TrainReport:
    """Sweep, self-label, estimate and descend, one mini-batch of users at a time.

    The register is re-swept with the current codebook for every batch, so
    labels and estimates never come from a stale codebook. Batch records hold
    the histogram of self-generated labels.
    """
    H = training_channels(dataset)
    noise_std = config.noise_std
    noise_rng = np.random.default_rng([config.seed, 1])

    def step(codebook, channels):
        Z = sweep_batch(codebook, channels, noise_std, noise_rng)
        H_est = estimate_channel(codebook, Z)
        loss, grads, labels = selfsup_batch_gradient(codebook, Z, H_est)
        hist = np.bincount(labels, minlength=codebook.num_beams)
        return loss, grads, {"histogram": hist.tolist()}

    return descend(config, H, initial, step)
