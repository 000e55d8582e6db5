"""Achievable-rate metrics, beam patterns and baseline comparison tables.

Rates use the Shannon mapping ``log2(1 + rho * max_n |w_n^H h|^2)`` with
``rho`` applied to the normalized channels, so absolute numbers depend on
the dataset normalization.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .array_channel import ArrayGeometry, array_response
from .codebook import PhaseCodebook, best_gains, dft_codebook, egc_gain

DEFAULT_GRID = 1024


def db_to_linear(db: float) -> float:
    return float(10 ** (db / 10))


def rate_from_gain(gain, rho_db: float) -> np.ndarray:
    return np.log2(1.0 + db_to_linear(rho_db) * np.asarray(gain, dtype=float))


@dataclass
class RateReport:
    best_snr: np.ndarray
    best_index: np.ndarray
    mean_rate: float
    egc_rate: float
    dft_rate: float
    num_beams: int
    rho_db: float

    @property
    def ratio(self) -> float:
        return self.mean_rate / self.egc_rate if self.egc_rate > 0 else 0.0


def evaluate_rate(
    codebook: PhaseCodebook, channels: np.ndarray, rho_db: float, dft_beams: int | None = None
) -> RateReport:
    """Mean achievable rate of ``codebook`` over ``channels`` at SNR ``rho_db``.

    The DFT baseline uses ``dft_beams`` beams (default: the same number as
    the codebook) on the same channels.
    """
    H = np.atleast_2d(np.asarray(channels, dtype=complex))
    if H.shape[0] == 0:
        raise ValueError("empty test set")
    rho = db_to_linear(rho_db)
    gains, idx = best_gains(codebook, H)
    dft = dft_codebook(codebook.num_antennas, dft_beams or codebook.num_beams)
    dft_gains, _ = best_gains(dft, H)
    return RateReport(
        best_snr=rho * gains,
        best_index=idx,
        mean_rate=float(np.mean(np.log2(1.0 + rho * gains))),
        egc_rate=float(np.mean(rate_from_gain(egc_gain(H), rho_db))),
        dft_rate=float(np.mean(rate_from_gain(dft_gains, rho_db))),
        num_beams=codebook.num_beams,
        rho_db=float(rho_db),
    )


@dataclass
class BeamPattern:
    angles: np.ndarray
    gain: np.ndarray

    def peak_angle(self) -> float:
        return float(self.angles[np.argmax(self.gain)])


def angle_grid(grid_points: int = DEFAULT_GRID) -> np.ndarray:
    if grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    return np.linspace(0.0, np.pi, grid_points, endpoint=False)


def beam_pattern(beam: np.ndarray, geometry: ArrayGeometry, grid_points: int = DEFAULT_GRID) -> BeamPattern:
    """Far-field power ``|w^H a(phi)|^2`` of one beam over ``[0, pi)``."""
    beam = np.asarray(beam, dtype=complex).reshape(-1)
    if beam.size != geometry.num_antennas:
        raise ValueError("beam length does not match the geometry")
    phi = angle_grid(grid_points)
    gain = np.abs(array_response(geometry, phi) @ beam.conj()) ** 2
    return BeamPattern(phi, gain)


def significant_lobes(pattern: BeamPattern, within_db: float = 6.0) -> np.ndarray:
    """Angles of interior local maxima whose gain is within ``within_db`` of the peak."""
    g = pattern.gain
    peak = g.max()
    if peak <= 0:
        return np.empty(0)
    interior = np.arange(1, g.size - 1)
    is_max = (g[interior] > g[interior - 1]) & (g[interior] >= g[interior + 1])
    idx = list(interior[is_max])
    # endpoints count when they dominate their single neighbour
    if g[0] > g[1]:
        idx.insert(0, 0)
    if g[-1] > g[-2]:
        idx.append(g.size - 1)
    idx = np.asarray(idx, dtype=int)
    keep = g[idx] >= peak * 10 ** (-within_db / 10)
    return pattern.angles[idx[keep]]


RATE_COLUMNS = ("label", "N", "rho_db", "mean_rate", "egc_rate", "ratio")


def compare_table(codebooks, labels, channels, rho_db_list) -> list[dict]:
    """One row per ``(codebook, rho)`` cell."""
    if len(codebooks) != len(labels):
        raise ValueError("need one label per codebook")
    H = np.atleast_2d(np.asarray(channels, dtype=complex))
    ms = {cb.num_antennas for cb in codebooks}
    if ms and ms != {H.shape[1]}:
        raise ValueError(f"codebook antenna counts {sorted(ms)} do not match channels ({H.shape[1]})")
    rows = []
    for cb, label in zip(codebooks, labels):
        for rho_db in rho_db_list:
            rep = evaluate_rate(cb, H, rho_db)
            rows.append(
                {
                    "label": label,
                    "N": cb.num_beams,
                    "rho_db": float(rho_db),
                    "mean_rate": rep.mean_rate,
                    "egc_rate": rep.egc_rate,
                    "ratio": rep.ratio,
                }
            )
    return rows


def rate_table_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=RATE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def pattern_csv(pattern: BeamPattern) -> str:
    lines = ["angle_rad,gain"]
    lines += [f"{a!r},{g!r}" for a, g in zip(pattern.angles.tolist(), pattern.gain.tolist())]
    return "\n".join(lines) + "\n"
