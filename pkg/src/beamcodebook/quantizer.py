"""k-means phase quantization applied after every parameter update.

All phases of a codebook are pooled into one scalar set and clustered into
``2**bits`` centroid angles; each phase is then snapped to its nearest
centroid, so the hardware only needs to realize those angles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import TWO_PI, PhaseCodebook, wrap_phase


@dataclass(frozen=True)
class QuantizerConfig:
    resolution_bits: int
    kmeans_iterations: int = 10
    init: str = "uniform"  # "uniform" grid or "random" points
    circular: bool = True
    schedule: str = "update"  # "update" or "epoch"
    keep_latent: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.resolution_bits < 1:
            raise ValueError("resolution_bits must be at least 1")
        if self.kmeans_iterations < 0:
            raise ValueError("kmeans_iterations must be non-negative")
        if self.init not in ("uniform", "random"):
            raise ValueError(f"unknown centroid init {self.init!r}")
        if self.schedule not in ("update", "epoch"):
            raise ValueError(f"unknown quantization schedule {self.schedule!r}")

    @property
    def num_centroids(self) -> int:
        return 2**self.resolution_bits


def circular_distance(a, b):
    d = np.abs(np.asarray(a) - np.asarray(b)) % TWO_PI
    return np.minimum(d, TWO_PI - d)


def _distances(points, centroids, circular):
    diff = points[:, None] - centroids[None, :]
    return circular_distance(points[:, None], centroids[None, :]) if circular else np.abs(diff)


def assign(points, centroids, circular=True) -> np.ndarray:
    """Index of the nearest centroid for every point (lowest index on ties)."""
    return np.argmin(_distances(np.asarray(points, float), np.asarray(centroids, float), circular), axis=1)


def cluster_sse(points, centroids, assignment, circular=True) -> float:
    points = np.asarray(points, float)
    centroids = np.asarray(centroids, float)
    if circular:
        d = circular_distance(points, centroids[assignment])
    else:
        d = points - centroids[assignment]
    return float(np.sum(d**2))


def uniform_centroids(k: int) -> np.ndarray:
    return np.arange(k) * (TWO_PI / k)


def _update(points, centroids, labels, circular):
    new = centroids.copy()
    for j in range(centroids.size):
        members = points[labels == j]
        if members.size == 0:
            continue
        if circular:
            # unwrap members to their copies nearest the current centroid, then take
            # the linear mean; this minimizes an upper bound of the circular SSE, so
            # SSE never grows. A second pass re-anchors at the wrapped result so the
            # arithmetic does not depend on which 2*pi copy the old centroid was in,
            # and a converged centroid reproduces itself bit for bit.
            c = centroids[j]
            for _ in range(2):
                turns = np.round((c - members) / TWO_PI)
                c = wrap_phase(np.mean(members + TWO_PI * turns))
            new[j] = c
        else:
            new[j] = members.mean()
    return new


def _reseed_empty(points, centroids, labels, circular):
    for j in range(centroids.size):
        if np.any(labels == j):
            continue
        d = _distances(points, centroids, circular)[np.arange(points.size), labels]
        far = int(np.argmax(d))
        centroids[j] = points[far]
        labels[far] = j
    return centroids, labels


def kmeans_phases(
    phases_flat,
    config: QuantizerConfig,
    init_centroids=None,
    history: list | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations on scalar phases reduced to ``[0, 2*pi)``.

    Returns ascending centroids (``2**bits`` of them) and the per-point
    centroid index. If the points already take at most ``2**bits`` distinct
    values those values are the exact optimum and are returned directly
    (padded by repeating the largest); this includes tables larger than the
    point set. ``history``, when given, receives the
    within-cluster SSE after every assignment step.
    """
    points = wrap_phase(np.asarray(phases_flat, dtype=float).reshape(-1))
    k = config.num_centroids
    if points.size == 0:
        raise ValueError("no phases to quantize")

    distinct = np.unique(points)
    if distinct.size <= k:
        centroids = np.concatenate([distinct, np.full(k - distinct.size, distinct[-1])])
        labels = np.searchsorted(centroids, points)
        if history is not None:
            history.append(0.0)
        return centroids, labels

    if init_centroids is not None:
        centroids = wrap_phase(np.asarray(init_centroids, dtype=float).copy())
        if centroids.size != k:
            raise ValueError(f"expected {k} initial centroids, got {centroids.size}")
    elif config.init == "uniform":
        centroids = uniform_centroids(k)
    else:
        rng = np.random.default_rng(config.seed)
        centroids = rng.choice(distinct, size=k, replace=False)

    labels = assign(points, centroids, config.circular)
    centroids, labels = _reseed_empty(points, centroids, labels, config.circular)
    if history is not None:
        history.append(cluster_sse(points, centroids, labels, config.circular))
    for _ in range(config.kmeans_iterations):
        centroids = _update(points, centroids, labels, config.circular)
        new_labels = assign(points, centroids, config.circular)
        new_labels_fixed = new_labels.copy()
        centroids, new_labels_fixed = _reseed_empty(points, centroids, new_labels_fixed, config.circular)
        if history is not None:
            history.append(cluster_sse(points, centroids, new_labels_fixed, config.circular))
        if np.array_equal(new_labels_fixed, labels):
            labels = new_labels_fixed
            break
        labels = new_labels_fixed

    order = np.argsort(centroids, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(k)
    return centroids[order], rank[labels]


def snap(codebook: PhaseCodebook, centroids, circular: bool = True) -> PhaseCodebook:
    """Replace every phase by its nearest centroid angle."""
    centroids = np.asarray(centroids, dtype=float).reshape(-1)
    if centroids.size == 0:
        raise ValueError("need at least one centroid")
    flat = wrap_phase(codebook.phases.reshape(-1))
    idx = assign(flat, centroids, circular)
    return PhaseCodebook(centroids[idx].reshape(codebook.phases.shape))


@dataclass
class QuantizedCodebook:
    """Hardware-facing form: a centroid table plus per-entry indices."""

    centroids: np.ndarray
    indices: np.ndarray

    def to_codebook(self) -> PhaseCodebook:
        return PhaseCodebook(self.centroids[self.indices])


class PhaseQuantizer:
    """Stateful quantizer that warm-starts k-means from its previous centroids."""

    def __init__(self, config: QuantizerConfig):
        self.config = config
        self.centroids: np.ndarray | None = None

    def quantize(self, codebook: PhaseCodebook) -> QuantizedCodebook:
        centroids, labels = kmeans_phases(codebook.phases, self.config, self.centroids)
        self.centroids = centroids
        return QuantizedCodebook(centroids, labels.reshape(codebook.phases.shape))

    def __call__(self, codebook: PhaseCodebook) -> PhaseCodebook:
        return self.quantize(codebook).to_codebook()


def quantized_train_step(codebook: PhaseCodebook, quantizer: PhaseQuantizer) -> PhaseCodebook:
    """Cluster and snap the phases of a freshly updated codebook."""
    return quantizer(codebook)
