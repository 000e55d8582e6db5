"""Phase-parameterized codebooks, the network forward pass, and baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class PhaseCodebook:
    """``N x M`` phase matrix; row ``n`` holds the phases of beam ``n``.

    Beam weights are ``exp(1j*phases) / sqrt(M)``, so every codebook derived
    from phases satisfies the constant-modulus constraint by construction.
    """

    phases: np.ndarray

    def __post_init__(self):
        phases = np.array(self.phases, dtype=float, ndmin=2)
        if phases.ndim != 2 or phases.size == 0:
            raise ValueError("phases must be a non-empty (beams, antennas) matrix")
        if not np.all(np.isfinite(phases)):
            raise ValueError("phases must be finite")
        phases.setflags(write=False)
        object.__setattr__(self, "phases", phases)

    @property
    def num_beams(self) -> int:
        return self.phases.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.phases.shape[1]

    def wrapped(self) -> "PhaseCodebook":
        """Same codebook with phases reduced to ``[0, 2*pi)``."""
        return PhaseCodebook(wrap_phase(self.phases))

    @property
    def weights(self) -> np.ndarray:
        return phases_to_weights(self)

    @classmethod
    def random(cls, num_beams: int, num_antennas: int, rng: np.random.Generator):
        return cls(rng.uniform(0.0, TWO_PI, size=(num_beams, num_antennas)))


def wrap_phase(x):
    out = np.mod(x, TWO_PI)
    # mod can round up to exactly 2*pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


def phases_to_weights(codebook: PhaseCodebook) -> np.ndarray:
    """``M x N`` complex beamforming matrix ``W`` (one column per beam)."""
    theta = codebook.phases.T
    return (np.cos(theta) + 1j * np.sin(theta)) / np.sqrt(codebook.num_antennas)


@dataclass(frozen=True)
class BeamOutputs:
    combined: np.ndarray
    powers: np.ndarray
    best_index: int
    best_power: float


def combine(codebook: PhaseCodebook, channels: np.ndarray) -> np.ndarray:
    """``W^H h`` for one channel (``M``) or a batch (``B x M`` -> ``B x N``)."""
    channels = np.asarray(channels, dtype=complex)
    if channels.shape[-1] != codebook.num_antennas:
        raise ValueError(
            f"channel length {channels.shape[-1]} does not match "
            f"{codebook.num_antennas} antennas"
        )
    return channels @ phases_to_weights(codebook).conj()


def forward(codebook: PhaseCodebook, h: np.ndarray) -> BeamOutputs:
    h = np.asarray(h, dtype=complex)
    if h.ndim != 1:
        raise ValueError("forward expects a single channel vector")
    z = combine(codebook, h)
    q = np.abs(z) ** 2
    k = int(np.argmax(q))
    return BeamOutputs(combined=z, powers=q, best_index=k, best_power=float(q[k]))


def best_gains(codebook: PhaseCodebook, channels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel best power and winning beam index for a batch of channels."""
    q = np.abs(combine(codebook, np.atleast_2d(channels))) ** 2
    idx = np.argmax(q, axis=1)
    return q[np.arange(q.shape[0]), idx], idx


def softmax_probs(powers: np.ndarray) -> np.ndarray:
    powers = np.asarray(powers, dtype=float)
    e = np.exp(powers - powers.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def argmax_onehot(powers: np.ndarray) -> np.ndarray:
    """One-hot of the largest power; ties go to the lowest index."""
    powers = np.asarray(powers, dtype=float)
    out = np.zeros_like(powers)
    idx = np.argmax(powers, axis=-1)
    np.put_along_axis(out, np.expand_dims(idx, -1), 1.0, axis=-1)
    return out


def egc_phases(h: np.ndarray) -> np.ndarray:
    # np.angle(0) == 0, which is the canonical choice for a zero entry
    return np.angle(h)


def egc_beamformer(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    return np.exp(1j * egc_phases(h)) / np.sqrt(h.shape[-1])


def egc_gain(channels: np.ndarray) -> np.ndarray:
    """Equal-gain-combining power ``||h||_1^2 / M`` (per row for a batch)."""
    channels = np.asarray(channels, dtype=complex)
    return np.sum(np.abs(channels), axis=-1) ** 2 / channels.shape[-1]


def dft_codebook(num_antennas: int, num_beams: int) -> PhaseCodebook:
    """Critically or over-sampled DFT beams: ``theta[n, m] = -2*pi*m*n/N``.

    On a nominal half-wavelength array beam ``n`` points at
    ``cos(phi) = -2n/N`` wrapped into ``[-1, 1)``.
    """
    if num_antennas < 1 or num_beams < 1:
        raise ValueError("num_antennas and num_beams must be positive")
    n = np.arange(num_beams)[:, None]
    m = np.arange(num_antennas)[None, :]
    # reduce the integer product first so the phases are exact multiples of 2*pi/N
    return PhaseCodebook(-TWO_PI * ((m * n) % num_beams) / num_beams).wrapped()


def dft_steering_cosine(beam: int, num_beams: int, spacing: float = 0.5) -> float:
    """Direction cosine of the main lobe of DFT beam ``beam`` on a nominal array."""
    period = 1.0 / spacing
    c = -beam / (num_beams * spacing)
    return float((c + period / 2) % period - period / 2)
