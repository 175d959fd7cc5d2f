"""Synthetic globular cluster datasets with controlled overlap, imbalance and noise."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from .core import NOISE, Dataset, PropertyTags

log = logging.getLogger(__name__)

MAX_RETRIES = 50
IMBALANCE_MODES = ("balanced", "half_floor", "tenth_floor")
_FLOOR_FRACTION = {"half_floor": 0.5, "tenth_floor": 0.1}


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenConfig:
    k_star: int
    dimensions: int
    distribution: str = "gaussian"
    imbalance_mode: str = "balanced"
    # a float means a fixed radial scale for every cluster; "random" draws U(0, 1) per cluster
    compactness: float | str = 0.1
    noise_fraction: float = 0.0
    overlap_max: float = 0.10
    cluster_size_range: tuple[int, int] = (20, 100)
    total_cap: int = 1000
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.cluster_size_range
        if self.k_star < 2:
            raise ValueError("k_star must be >= 2")
        if self.dimensions < 1:
            raise ValueError("dimensions must be >= 1")
        if not 1 <= lo <= hi <= self.total_cap:
            raise ValueError(f"cluster_size_range {self.cluster_size_range} outside [1, {self.total_cap}]")
        if self.k_star * lo > self.total_cap:
            raise ValueError(
                f"config rejected: k_star={self.k_star} clusters of at least {lo} points "
                f"exceed total_cap={self.total_cap}")
        if self.distribution not in ("uniform", "gaussian", "logistic"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.imbalance_mode not in IMBALANCE_MODES:
            raise ValueError(f"unknown imbalance mode {self.imbalance_mode!r}")
        if isinstance(self.compactness, str):
            if self.compactness not in ("random", "random_unit"):
                raise ValueError(f"unknown compactness {self.compactness!r}")
        elif not self.compactness > 0:
            raise ValueError("fixed compactness must be > 0")
        if not 0.0 <= self.noise_fraction < 1.0:
            raise ValueError("noise_fraction must lie in [0, 1)")
        if not 0.0 <= self.overlap_max <= 1.0:
            raise ValueError("overlap_max must lie in [0, 1]")

    @property
    def compactness_level(self) -> str:
        if isinstance(self.compactness, str):
            return "random"
        return "compact" if self.compactness < 0.45 else "sparse"


@dataclass(frozen=True)
class ClusterSpec:
    center: np.ndarray
    scale: float
    size: int
    distribution: str


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def measure_overlap(dataset) -> float:
    """Fraction of points whose nearest neighbour lies in another ground-truth cluster.

    Noise points are ignored. Nearest-neighbour ties go to the lowest index.
    """
    points, labels = _core_arrays(dataset)
    n = labels.size
    if n < 2:
        raise ValueError("overlap needs at least two non-noise points")
    if np.unique(labels).size == 1:
        return 0.0
    nn = np.empty(n, dtype=np.int64)
    for start in range(0, n, 256):
        d2 = cdist(points[start:start + 256], points, "sqeuclidean")
        rows = np.arange(d2.shape[0])
        d2[rows, start + rows] = np.inf
        nn[start:start + 256] = np.argmin(d2, axis=1)
    return float(1.0 - np.mean(labels[nn] == labels))


def measure_imbalance(dataset) -> float:
    """(largest - smallest) / smallest cluster size over non-noise clusters."""
    _, labels = _core_arrays(dataset)
    if labels.size == 0:
        raise ValueError("no non-noise clusters")
    sizes = np.unique(labels, return_counts=True)[1]
    if sizes.min() == 0:
        raise ValueError("empty cluster")
    return float((sizes.max() - sizes.min()) / sizes.min())


def _core_arrays(dataset):
    if isinstance(dataset, Dataset):
        points, labels = dataset.points, dataset.truth.labels
    else:
        points, labels = dataset
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    labels = np.asarray(labels)
    keep = labels != NOISE
    return points[keep], labels[keep]


def inject_noise(dataset: Dataset, fraction: float, rng=None) -> Dataset:
    """Append round(fraction * N) points drawn uniformly in the per-dimension bounding box."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("noise fraction must lie in [0, 1)")
    if np.any(dataset.truth.labels == NOISE):
        raise ValueError("inject_noise expects a noise-free core dataset")
    n_noise = round_half_up(fraction * dataset.n)
    if n_noise == 0:
        return dataset
    rng = np.random.default_rng(rng)
    lo = dataset.points.min(axis=0)
    hi = dataset.points.max(axis=0)
    extra = rng.uniform(lo, hi, size=(n_noise, dataset.dim))
    points = np.vstack([dataset.points, extra])
    labels = np.concatenate([dataset.truth.labels, np.full(n_noise, NOISE)])
    meta = replace(dataset.meta, has_noise=True) if dataset.meta is not None else None
    return Dataset.create(points, labels, meta, dataset.id)


def cluster_sizes(config: GenConfig, rng: np.random.Generator) -> np.ndarray:
    k = config.k_star
    lo, hi = config.cluster_size_range
    hi = min(hi, config.total_cap // k)
    mean_size = int(rng.integers(lo, hi + 1))
    if config.imbalance_mode == "balanced":
        return np.full(k, mean_size, dtype=np.int64)
    floor = max(1, math.ceil(_FLOOR_FRACTION[config.imbalance_mode] * mean_size))
    spare = k * (mean_size - floor)
    weights = rng.dirichlet(np.ones(k))
    return floor + rng.multinomial(spare, weights)


def radial_draw(distribution: str, scale: float, size: int, rng: np.random.Generator) -> np.ndarray:
    if distribution == "gaussian":
        return np.abs(scale * rng.standard_normal(size))
    if distribution == "uniform":
        return rng.uniform(0.0, scale, size)
    if distribution == "logistic":
        return np.abs(scale * rng.logistic(0.0, 1.0, size))
    raise ValueError(f"unknown distribution {distribution!r}")


def sample_cluster(spec: ClusterSpec, rng: np.random.Generator) -> np.ndarray:
    dim = spec.center.shape[0]
    u = rng.standard_normal((spec.size, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = radial_draw(spec.distribution, spec.scale, spec.size, rng)
    return spec.center + r[:, None] * u


def _scales(config: GenConfig, rng) -> np.ndarray:
    if isinstance(config.compactness, str):
        return np.maximum(rng.uniform(0.0, 1.0, config.k_star), 1e-3)
    return np.full(config.k_star, float(config.compactness))


# root-mean-square radius per unit scale of each radial law
_RADIAL_RMS = {"gaussian": 1.0, "uniform": 1.0 / math.sqrt(3.0), "logistic": math.pi / math.sqrt(3.0)}


# centre spacing never shrinks below what the sparsest fixed level (0.8) would get,
# so compact clusters end up relatively further apart than sparse ones
_SPACING_FLOOR_SCALE = 0.8


def _centers(config: GenConfig, scales: np.ndarray, rng) -> np.ndarray:
    """Uniform centres in a cube sized so the expected nearest-centre distance
    is 4 reference scales (times the radial RMS when that exceeds one)."""
    k, dim = config.k_star, config.dimensions
    reference = max(float(scales.mean()), _SPACING_FLOOR_SCALE)
    spacing = 4.0 * reference * max(1.0, _RADIAL_RMS[config.distribution])
    # Poisson nearest-neighbour law: E[r] = Gamma(1 + 1/D) / (rho * V_D)^(1/D)
    unit_ball = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)
    side = spacing * (k * unit_ball) ** (1.0 / dim) / math.gamma(1.0 + 1.0 / dim)
    return rng.uniform(0.0, side, size=(k, dim))


def generate_dataset(config: GenConfig, id: str | None = None) -> Dataset:
    rng = np.random.default_rng(config.seed)
    sizes = cluster_sizes(config, rng)
    for attempt in range(MAX_RETRIES):
        scales = _scales(config, rng)
        centers = _centers(config, scales, rng)
        specs = [ClusterSpec(c, s, int(n), config.distribution) for c, s, n in zip(centers, scales, sizes)]
        points = np.vstack([sample_cluster(s, rng) for s in specs])
        labels = np.repeat(np.arange(config.k_star), sizes)
        overlap = measure_overlap((points, labels))
        if overlap <= config.overlap_max:
            break
        log.debug("attempt %d: overlap %.3f above %.3f", attempt, overlap, config.overlap_max)
    else:
        raise GenerationError(
            f"overlap <= {config.overlap_max} not reached after {MAX_RETRIES} attempts for {config}")
    meta = PropertyTags(
        k_star=config.k_star,
        dimensions=config.dimensions,
        overlap=overlap,
        imbalance=measure_imbalance((points, labels)),
        has_noise=False,
        compactness_level=config.compactness_level,
        distribution=config.distribution,
    )
    ds = Dataset.create(points, labels, meta, id or f"ds_{config.seed}")
    if config.noise_fraction > 0:
        ds = inject_noise(ds, config.noise_fraction, rng)
    return ds
