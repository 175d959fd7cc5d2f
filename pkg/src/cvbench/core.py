"""Shared data types, Euclidean distances, label canonicalization and ranking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.stats import rankdata

NOISE = -1

COMPACTNESS_LEVELS = ("compact", "sparse", "random")
DISTRIBUTIONS = ("uniform", "gaussian", "logistic")


def _frozen(a, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PropertyTags:
    k_star: int
    dimensions: int
    overlap: float
    imbalance: float
    has_noise: bool
    compactness_level: str = "compact"
    distribution: str = "gaussian"

    def __post_init__(self):
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError(f"overlap must lie in [0, 1], got {self.overlap}")
        if self.imbalance < 0:
            raise ValueError(f"imbalance must be >= 0, got {self.imbalance}")
        if self.compactness_level not in COMPACTNESS_LEVELS:
            raise ValueError(f"unknown compactness level {self.compactness_level!r}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")

    def as_dict(self) -> dict:
        return {
            "k_star": self.k_star,
            "dimensions": self.dimensions,
            "overlap": self.overlap,
            "imbalance": self.imbalance,
            "has_noise": self.has_noise,
            "compactness_level": self.compactness_level,
            "distribution": self.distribution,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PropertyTags":
        return cls(
            k_star=int(d["k_star"]),
            dimensions=int(d["dimensions"]),
            overlap=float(d["overlap"]),
            imbalance=float(d["imbalance"]),
            has_noise=_as_bool(d["has_noise"]),
            compactness_level=str(d.get("compactness_level", "compact")),
            distribution=str(d.get("distribution", "gaussian")),
        )


def _as_bool(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes")
    return bool(v)


@dataclass(frozen=True)
class GroundTruth:
    labels: np.ndarray
    k_star: int
    noise_fraction: float

    @classmethod
    def from_labels(cls, labels) -> "GroundTruth":
        labels = _frozen(labels, dtype=np.int64)
        clusters = np.unique(labels[labels != NOISE])
        if clusters.size == 0:
            raise ValueError("ground truth has no non-noise cluster")
        return cls(labels, int(clusters.size), float(np.mean(labels == NOISE)))


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    truth: GroundTruth
    meta: PropertyTags | None = None
    id: str = "dataset"

    def __post_init__(self):
        pts = self.points
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] < 1:
            raise ValueError(f"points must be an N x D matrix with N >= 2, got shape {pts.shape}")
        _check_finite(pts)
        if self.truth.labels.shape[0] != pts.shape[0]:
            raise ValueError("truth labels and points differ in length")

    @classmethod
    def create(cls, points, labels, meta=None, id="dataset") -> "Dataset":
        return cls(_frozen(points, dtype=float), GroundTruth.from_labels(labels), meta, id)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def core(self) -> "Dataset":
        """Dataset restricted to the non-noise ground-truth points."""
        keep = self.truth.labels != NOISE
        return Dataset.create(self.points[keep], self.truth.labels[keep], self.meta, self.id)


@dataclass(frozen=True)
class Partition:
    labels: np.ndarray
    k: int
    source: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        present = np.unique(self.labels[self.labels != NOISE])
        if present.size != self.k:
            raise ValueError(f"partition declares k={self.k} but has {present.size} clusters")
        if np.any(self.labels < NOISE):
            raise ValueError("cluster labels must be >= 0 (or NOISE)")

    @classmethod
    def from_labels(cls, labels, source: str = "", **extra) -> "Partition":
        labels = _frozen(labels, dtype=np.int64)
        k = int(np.unique(labels[labels != NOISE]).size)
        return cls(labels, k, source, dict(extra))

    @property
    def n_noise(self) -> int:
        return int(np.sum(self.labels == NOISE))


@dataclass(frozen=True)
class DistanceMatrix:
    d: np.ndarray

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def subset(self, idx) -> "DistanceMatrix":
        idx = np.asarray(idx)
        return DistanceMatrix(_frozen(self.d[np.ix_(idx, idx)]))


def _check_finite(points: np.ndarray) -> None:
    bad = ~np.isfinite(points).all(axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ValueError(f"non-finite feature value in row {row}")


def compute_distance_matrix(points) -> DistanceMatrix:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] < 2:
        raise ValueError("need at least two points")
    _check_finite(points)
    return DistanceMatrix(_frozen(squareform(pdist(points))))


def canonical_labels(labels) -> np.ndarray:
    """Rename cluster ids in order of first appearance; NOISE stays NOISE."""
    labels = np.asarray(labels)
    out = np.full(labels.shape, NOISE, dtype=np.int64)
    mapping: dict = {}
    for i, lab in enumerate(labels.tolist()):
        if lab == NOISE:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def canonical_form(partition) -> np.ndarray:
    labels = partition.labels if isinstance(partition, Partition) else partition
    return canonical_labels(labels)


def dedupe_partitions(partitions: Sequence[Partition]) -> list[Partition]:
    """Drop partitions whose canonical form was already seen (order kept)."""
    seen = set()
    out = []
    for p in partitions:
        key = canonical_form(p).tobytes()
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out


def average_ranks(values, orientation: str = "max") -> np.ndarray:
    """Rank 1 is best; ties get the mean of the ranks they span."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot rank an empty vector")
    if not np.isfinite(values).all():
        raise ValueError("ranked values must be finite")
    if orientation == "max":
        return rankdata(-values, method="average")
    if orientation == "min":
        return rankdata(values, method="average")
    raise ValueError(f"orientation must be 'max' or 'min', got {orientation!r}")
