"""Codebook, geometry and manifest files."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .array_channel import ArrayGeometry
from .codebook import PhaseCodebook
from .quantizer import QuantizedCodebook

CODEBOOK_FORMAT_VERSION = 1


def codebook_to_dict(codebook: PhaseCodebook, quantized: QuantizedCodebook | None = None) -> dict:
    """Serializable form: wrapped phases, derived weights, optional centroid table."""
    cb = codebook.wrapped()
    W = cb.weights
    out = {
        "format_version": CODEBOOK_FORMAT_VERSION,
        "num_beams": cb.num_beams,
        "num_antennas": cb.num_antennas,
        "phases": cb.phases.tolist(),
        "weights": {"real": W.real.tolist(), "imag": W.imag.tolist()},
    }
    if quantized is not None:
        out["quantization"] = {
            "centroids": np.asarray(quantized.centroids, float).tolist(),
            "indices": np.asarray(quantized.indices, int).tolist(),
        }
    return out


def save_codebook(path, codebook: PhaseCodebook, quantized: QuantizedCodebook | None = None) -> None:
    Path(path).write_text(json.dumps(codebook_to_dict(codebook, quantized), indent=1) + "\n")


def load_codebook(path) -> PhaseCodebook:
    data = json.loads(Path(path).read_text())
    if data.get("format_version") != CODEBOOK_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported codebook format {data.get('format_version')!r}")
    phases = np.asarray(data["phases"], dtype=float)
    if phases.shape != (data["num_beams"], data["num_antennas"]):
        raise ValueError(f"{path}: phase matrix shape {phases.shape} disagrees with header")
    return PhaseCodebook(phases)


def load_quantized(path) -> QuantizedCodebook | None:
    data = json.loads(Path(path).read_text())
    q = data.get("quantization")
    if q is None:
        return None
    return QuantizedCodebook(np.asarray(q["centroids"], float), np.asarray(q["indices"], int))


def save_geometry(path, geometry: ArrayGeometry) -> None:
    data = {"positions": geometry.positions.tolist(), "phase_offsets": geometry.phase_offsets.tolist()}
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def load_geometry(path) -> ArrayGeometry:
    data = json.loads(Path(path).read_text())
    return ArrayGeometry(np.asarray(data["positions"]), np.asarray(data["phase_offsets"]))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, name: str = "manifest.json") -> dict:
    """Hash every file under ``out_dir`` (except the manifest itself)."""
    out_dir = Path(out_dir)
    files = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != name)
    manifest = {p.relative_to(out_dir).as_posix(): sha256_file(p) for p in files}
    (out_dir / name).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest
