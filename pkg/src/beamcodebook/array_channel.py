"""Array geometry, geometric channel synthesis and channel datasets.

Antenna positions are expressed in wavelengths, so the phase of a plane wave
arriving from azimuth ``phi`` at antenna ``m`` is ``2*pi*d_m*cos(phi)`` plus the
element's fixed phase offset.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

HALF_WAVELENGTH = 0.5


@dataclass(frozen=True)
class ArrayGeometry:
    """Per-antenna positions (wavelengths) and phase offsets (radians)."""

    positions: np.ndarray
    phase_offsets: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1)
        off = np.asarray(self.phase_offsets, dtype=float).reshape(-1)
        if pos.size == 0:
            raise ValueError("geometry needs at least one antenna")
        if pos.shape != off.shape:
            raise ValueError(
                f"positions ({pos.size}) and phase_offsets ({off.size}) differ in length"
            )
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "phase_offsets", off)

    @property
    def num_antennas(self) -> int:
        return self.positions.size

    @classmethod
    def nominal(cls, num_antennas: int, spacing: float = HALF_WAVELENGTH) -> "ArrayGeometry":
        if num_antennas < 1:
            raise ValueError(f"num_antennas must be positive, got {num_antennas}")
        return cls(np.arange(num_antennas) * spacing, np.zeros(num_antennas))


def make_impaired_geometry(
    num_antennas: int, sigma_d: float, sigma_p: float, seed: int
) -> ArrayGeometry:
    """Draw one fixed realization of a linear array with hardware impairments.

    Positions are ``N((m-1)*0.5, sigma_d**2)`` wavelengths and phase offsets are
    ``N(0, sigma_p**2)`` radians. Zero deviations give the nominal half-wavelength
    array exactly.
    """
    if num_antennas < 1:
        raise ValueError(f"num_antennas must be positive, got {num_antennas}")
    if sigma_d < 0 or sigma_p < 0:
        raise ValueError("impairment standard deviations must be non-negative")
    rng = np.random.default_rng(seed)
    nominal = np.arange(num_antennas) * HALF_WAVELENGTH
    pos_err = rng.standard_normal(num_antennas)
    phase_err = rng.standard_normal(num_antennas)
    positions = nominal + sigma_d * pos_err if sigma_d > 0 else nominal
    offsets = sigma_p * phase_err if sigma_p > 0 else np.zeros(num_antennas)
    return ArrayGeometry(positions, offsets)


def array_response(geometry: ArrayGeometry, angle) -> np.ndarray:
    """Array response ``a(phi)``; a vector for scalar ``angle``, else ``(len(angle), M)``."""
    phi = np.asarray(angle, dtype=float)
    phase = 2 * np.pi * np.multiply.outer(np.cos(phi), geometry.positions)
    return np.exp(1j * (phase + geometry.phase_offsets))


@dataclass(frozen=True)
class PathComponent:
    gain: complex
    angle: float

    def __post_init__(self):
        if not 0.0 <= self.angle < np.pi:
            raise ValueError(f"path angle {self.angle} outside [0, pi)")


def synth_channel(geometry: ArrayGeometry, paths: Sequence[PathComponent]) -> np.ndarray:
    """Gain-weighted sum of array responses, one term per path."""
    if not paths:
        raise ValueError("a channel needs at least one path")
    gains = np.array([p.gain for p in paths], dtype=complex)
    angles = np.array([p.angle for p in paths], dtype=float)
    return gains @ array_response(geometry, angles)


class ScenarioKind(str, Enum):
    LOS_SECTOR = "LOS_sector"
    NLOS_TWO_CLUSTER = "NLOS_two_cluster"
    CUSTOM_PATHS = "custom_paths"


@dataclass
class ScenarioConfig:
    """Synthetic user population.

    ``angle_ranges`` holds ``[low, high)`` azimuth intervals in radians. For
    ``LOS_sector`` each user has one path in one of the intervals (picked with
    probability proportional to width). For ``NLOS_two_cluster`` path ``l``
    is drawn from interval ``l``. For ``custom_paths`` every path picks an
    interval at random. Path gains have magnitude ``path_gains[l]`` (1 by
    default) and a uniform random phase.
    """

    kind: ScenarioKind = ScenarioKind.LOS_SECTOR
    num_users: int = 2000
    angle_ranges: list = field(default_factory=lambda: [[np.pi / 3, 2 * np.pi / 3]])
    paths_per_user: int = 1
    path_gains: list | None = None
    seed: int = 0

    def __post_init__(self):
        self.kind = ScenarioKind(self.kind)
        if self.num_users < 1:
            raise ValueError("num_users must be positive")
        if self.paths_per_user < 1:
            raise ValueError("paths_per_user must be positive")
        if not self.angle_ranges:
            raise ValueError("angle_ranges must not be empty")
        for low, high in self.angle_ranges:
            if not (0.0 <= low < high <= np.pi):
                raise ValueError(f"bad angle interval [{low}, {high})")
        if self.kind is ScenarioKind.LOS_SECTOR and self.paths_per_user != 1:
            raise ValueError("LOS_sector scenarios have exactly one path per user")
        if self.kind is ScenarioKind.NLOS_TWO_CLUSTER:
            if self.paths_per_user < 2:
                raise ValueError("NLOS_two_cluster needs at least two paths per user")
            if len(self.angle_ranges) < self.paths_per_user:
                raise ValueError("NLOS_two_cluster needs one angle interval per path")
        if self.path_gains is not None and len(self.path_gains) != self.paths_per_user:
            raise ValueError("path_gains must have one entry per path")


@dataclass
class ChannelDataset:
    """Normalized channels (``U x M``) plus the factor that was divided out.

    ``channels`` are already scaled by ``1/sqrt(normalization)``, so the
    largest per-entry power in the whole set is one.
    """

    channels: np.ndarray
    normalization: float = 1.0
    train_fraction: float = 0.7
    split_seed: int = 0
    angles: np.ndarray | None = None
    gains: np.ndarray | None = None

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=complex)
        if self.channels.ndim != 2 or self.channels.shape[0] == 0:
            raise ValueError("channels must be a non-empty (users, antennas) array")
        if not np.all(np.isfinite(self.channels)):
            raise ValueError("channels contain non-finite entries")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError("train_fraction must lie in (0, 1]")

    @property
    def num_users(self) -> int:
        return self.channels.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.channels.shape[1]

    def raw_channels(self) -> np.ndarray:
        return self.channels * np.sqrt(self.normalization)

    def split_indices(self) -> tuple[np.ndarray, np.ndarray]:
        perm = np.random.default_rng(self.split_seed).permutation(self.num_users)
        n_train = int(round(self.train_fraction * self.num_users))
        if self.train_fraction < 1.0:
            n_train = min(max(n_train, 1), self.num_users - 1)
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])

    @property
    def train(self) -> np.ndarray:
        return self.channels[self.split_indices()[0]]

    @property
    def test(self) -> np.ndarray:
        return self.channels[self.split_indices()[1]]


def normalization_factor(channels: np.ndarray) -> float:
    """Largest per-entry power over all users and antennas."""
    delta = float(np.max(np.abs(channels) ** 2))
    if delta <= 0:
        raise ValueError("cannot normalize an all-zero channel set")
    return delta


def normalize(channels: np.ndarray, **kwargs) -> ChannelDataset:
    """Divide every entry by ``sqrt(max |h|^2)`` and wrap in a dataset."""
    channels = np.asarray(channels, dtype=complex)
    delta = normalization_factor(channels)
    return ChannelDataset(channels / np.sqrt(delta), normalization=delta, **kwargs)


def _draw_paths(config: ScenarioConfig, rng: np.random.Generator):
    U, L = config.num_users, config.paths_per_user
    ranges = np.asarray(config.angle_ranges, dtype=float)
    if config.kind is ScenarioKind.NLOS_TWO_CLUSTER:
        interval = np.broadcast_to(np.arange(L), (U, L))
    else:
        widths = ranges[:, 1] - ranges[:, 0]
        interval = rng.choice(len(ranges), size=(U, L), p=widths / widths.sum())
    u = rng.random((U, L))
    low, high = ranges[interval, 0], ranges[interval, 1]
    angles = low + u * (high - low)
    magnitudes = np.ones(L) if config.path_gains is None else np.asarray(config.path_gains, float)
    gains = magnitudes * np.exp(2j * np.pi * rng.random((U, L)))
    return angles, gains


def generate_raw_channels(config: ScenarioConfig, geometry: ArrayGeometry):
    """Unnormalized channels ``(U, M)`` with their path angles and gains."""
    rng = np.random.default_rng(config.seed)
    angles, gains = _draw_paths(config, rng)
    responses = array_response(geometry, angles)  # (U, L, M)
    channels = np.einsum("ul,ulm->um", gains, responses)
    return channels, angles, gains


def generate_dataset(
    config: ScenarioConfig, geometry: ArrayGeometry, train_fraction: float = 0.7
) -> ChannelDataset:
    channels, angles, gains = generate_raw_channels(config, geometry)
    ds = normalize(channels, train_fraction=train_fraction, split_seed=config.seed)
    ds.angles, ds.gains = angles, gains
    return ds


# Channel interchange file, little-endian:
#   bytes 0-7   magic b"BCBCHAN1"
#   bytes 8-15  uint64 M (antennas)
#   bytes 16-23 uint64 num_users
#   then num_users * M * 2 float64, row-major per user, (real, imag) interleaved.
CHANNEL_MAGIC = b"BCBCHAN1"
_HEADER = struct.Struct("<8sQQ")


def export_channels(channels: np.ndarray, path) -> None:
    """Write ``(U, M)`` complex channels in the interchange format."""
    channels = np.asarray(channels, dtype=np.complex128)
    if channels.ndim != 2:
        raise ValueError("expected a (users, antennas) array")
    users, m = channels.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CHANNEL_MAGIC, m, users))
        fh.write(channels.astype("<c16").tobytes(order="C"))


def read_channels(path) -> np.ndarray:
    """Read the raw (unnormalized) channel matrix from an interchange file."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: file too short for a channel header")
    magic, m, users = _HEADER.unpack_from(data)
    if magic != CHANNEL_MAGIC:
        raise ValueError(f"{path}: not a channel interchange file")
    if m == 0 or users == 0:
        raise ValueError(f"{path}: empty channel set")
    payload = data[_HEADER.size:]
    if len(payload) != users * m * 16:
        raise ValueError(
            f"{path}: payload holds {len(payload)} bytes, header implies {users * m * 16}"
        )
    return np.frombuffer(payload, dtype="<c16").reshape(users, m).astype(np.complex128)


def import_channels(path, train_fraction: float = 0.7, split_seed: int = 0) -> ChannelDataset:
    """Load an interchange file (or a ``.csv``/``.txt`` text matrix) and normalize it.

    Text files hold one user per line with ``2*M`` comma/space separated
    numbers ``re_0, im_0, re_1, im_1, ...``; lines of unequal length are rejected.
    """
    path = Path(path)
    if path.suffix.lower() in (".csv", ".txt"):
        channels = _read_text_channels(path)
    else:
        channels = read_channels(path)
    return normalize(channels, train_fraction=train_fraction, split_seed=split_seed)


def _read_text_channels(path: Path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        values = [float(v) for v in line.replace(",", " ").split()]
        if len(values) % 2:
            raise ValueError(f"{path}:{lineno}: odd number of values")
        rows.append(values)
    if not rows:
        raise ValueError(f"{path}: empty channel set")
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"{path}: inconsistent channel lengths {sorted(lengths)}")
    arr = np.asarray(rows)
    return arr[:, 0::2] + 1j * arr[:, 1::2]
