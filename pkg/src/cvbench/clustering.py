"""Candidate partitions: K-Means (Lloyd + k-means++) and Lance-Williams agglomerative linkage."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import Dataset, Partition, canonical_labels, compute_distance_matrix

ALGORITHMS = ("kmeans", "single", "average", "complete", "ward")
LINKAGES = ("single", "average", "complete", "ward")
MAX_ITER = 300


def compute_k_max(k_star: int) -> int:
    if k_star < 2:
        raise ValueError("k_star must be >= 2")
    return math.ceil(max(25.0, 1.75 * k_star))


@dataclass(frozen=True)
class SweepSpec:
    k_max: int
    k_min: int = 2
    algorithms: tuple[str, ...] = ALGORITHMS
    kmeans_restarts: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.k_min <= self.k_max:
            raise ValueError(f"need 2 <= k_min <= k_max, got {self.k_min}, {self.k_max}")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms {sorted(unknown)}")


def _points(data) -> np.ndarray:
    pts = data.points if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


# ---------------------------------------------------------------- K-Means

def kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining points coincide with a centre
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(free))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return points[chosen].copy()


def _repair_empty(points, labels, centers, k):
    """Move the point farthest from its centroid into each empty cluster."""
    counts = np.bincount(labels, minlength=k)
    for empty in np.flatnonzero(counts == 0):
        dist = np.sum((points - centers[labels]) ** 2, axis=1)
        dist[counts[labels] <= 1] = -1.0
        far = int(np.argmax(dist))
        counts[labels[far]] -= 1
        labels[far] = empty
        counts[empty] = 1
        centers[empty] = points[far]
    return labels


def lloyd(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = MAX_ITER):
    """Return (labels, centers, objective history)."""
    centers = kmeanspp_init(points, k, rng)
    labels = None
    history = []
    for _ in range(max_iter):
        new = np.argmin(cdist(points, centers, "sqeuclidean"), axis=1)
        new = _repair_empty(points, new, centers, k)
        history.append(float(np.sum((points - centers[new]) ** 2)))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            centers[c] = points[labels == c].mean(axis=0)
        history.append(float(np.sum((points - centers[labels]) ** 2)))
    return labels, centers, history


def run_kmeans(data, k: int, seed=0, source: str | None = None) -> Partition:
    points = _points(data)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, N={n}]")
    labels, _, _ = lloyd(points, k, np.random.default_rng(seed))
    return Partition.from_labels(canonical_labels(labels), source or f"kmeans:k={k}", algorithm="kmeans")


# ------------------------------------------------------------ agglomerative

@dataclass(frozen=True)
class Dendrogram:
    """Merge sequence in scipy layout: rows (id_a, id_b, height, size); new cluster id = N + row."""
    merges: np.ndarray
    linkage: str
    n: int

    def cut(self, k: int) -> np.ndarray:
        return cut_at(self, k)


def _lance_williams(method, d_ki, d_kj, d_ij, n_i, n_j, n_k):
    if method == "single":
        return np.minimum(d_ki, d_kj)
    if method == "complete":
        return np.maximum(d_ki, d_kj)
    if method == "average":
        return (n_i * d_ki + n_j * d_kj) / (n_i + n_j)
    if method == "ward":
        tot = n_i + n_j + n_k
        return ((n_i + n_k) * d_ki + (n_j + n_k) * d_kj - n_k * d_ij) / tot
    raise ValueError(f"unknown linkage {method!r}")


def run_agglomerative(data, linkage: str) -> Dendrogram:
    """Agglomerative clustering via Lance-Williams updates.

    Ward runs on squared distances and reports sqrt heights. Ties go to the
    lowest (i, j) slot pair; a merged cluster keeps the lower slot.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")
    points = _points(data)
    n = points.shape[0]
    if n < 2:
        raise ValueError("need at least two points")
    D = np.array(compute_distance_matrix(points).d, dtype=float)
    if linkage == "ward":
        D = D**2
    np.fill_diagonal(D, np.inf)
    size = np.ones(n)
    ids = np.arange(n)
    active = np.ones(n, dtype=bool)
    nn = np.argmin(D, axis=1)
    nnd = D[np.arange(n), nn]
    merges = np.empty((n - 1, 4))
    for step in range(n - 1):
        i = int(np.argmin(nnd))
        j = int(nn[i])
        a, b = (i, j) if i < j else (j, i)
        d_ab = D[a, b]
        merges[step] = (min(ids[a], ids[b]), max(ids[a], ids[b]),
                        math.sqrt(d_ab) if linkage == "ward" else d_ab, size[a] + size[b])
        others = np.flatnonzero(active)
        others = others[(others != a) & (others != b)]
        new = _lance_williams(linkage, D[others, a], D[others, b], d_ab, size[a], size[b], size[others])
        D[b, :] = np.inf
        D[:, b] = np.inf
        D[a, others] = new
        D[others, a] = new
        active[b] = False
        size[a] += size[b]
        ids[a] = n + step
        nnd[b] = np.inf
        if others.size == 0:
            break
        # refresh nearest-neighbour cache
        stale = others[(nn[others] == a) | (nn[others] == b)]
        if stale.size:
            nn[stale] = np.argmin(D[stale], axis=1)
            nnd[stale] = D[stale, nn[stale]]
        fresh = np.setdiff1d(others, stale, assume_unique=True)
        dnew = D[fresh, a]
        better = (dnew < nnd[fresh]) | ((dnew == nnd[fresh]) & (a < nn[fresh]))
        nn[fresh[better]] = a
        nnd[fresh[better]] = dnew[better]
        nn[a] = int(np.argmin(D[a]))
        nnd[a] = D[a, nn[a]]
    return Dendrogram(merges, linkage, n)


def cut_at(dendrogram: Dendrogram, k: int) -> np.ndarray:
    """Canonical labels after applying the first N - k merges."""
    n = dendrogram.n
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, {n}]")
    parent = np.arange(2 * n - 1)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step in range(n - k):
        a, b = int(dendrogram.merges[step, 0]), int(dendrogram.merges[step, 1])
        parent[find(a)] = n + step
        parent[find(b)] = n + step
    roots = np.array([find(i) for i in range(n)])
    return canonical_labels(roots)


def agglomerative_partition(data, linkage: str, k: int) -> Partition:
    return Partition.from_labels(run_agglomerative(data, linkage).cut(k), f"{linkage}:k={k}", algorithm=linkage)


# ------------------------------------------------------------------ sweeps

def kmeans_seed(seed: int, k: int, run: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, k, run])


def sweep_varied_k(dataset: Dataset, spec: SweepSpec) -> dict[str, list[Partition]]:
    """One partition per k in [k_min, min(k_max, N-1)] for every algorithm."""
    points = _points(dataset)
    k_hi = min(spec.k_max, points.shape[0] - 1)
    ks = range(spec.k_min, k_hi + 1)
    out: dict[str, list[Partition]] = {}
    for algo in spec.algorithms:
        if algo == "kmeans":
            parts = []
            for k in ks:
                best = None
                for r in range(spec.kmeans_restarts):
                    labels, centers, _ = lloyd(points, k, np.random.default_rng(kmeans_seed(spec.seed, k, r)))
                    sse = float(np.sum((points - centers[labels]) ** 2))
                    if best is None or sse < best[0]:
                        best = (sse, labels)
                parts.append(Partition.from_labels(canonical_labels(best[1]), f"kmeans:k={k}",
                                                   algorithm="kmeans"))
            out[algo] = parts
        else:
            dendro = run_agglomerative(points, algo)
            out[algo] = [Partition.from_labels(dendro.cut(k), f"{algo}:k={k}", algorithm=algo) for k in ks]
    return out


def fixed_k_targets(k_star: int, n: int) -> list[int]:
    """k*, round(0.7 k*) clamped >= 2 and round(1.3 k*) clamped <= N-1; off-targets equal to k* dropped."""
    from .datagen import round_half_up

    targets = [k_star]
    under = max(2, round_half_up(0.7 * k_star))
    over = min(n - 1, round_half_up(1.3 * k_star))
    for t in (under, over):
        if t != k_star and t not in targets:
            targets.append(t)
    return targets


def fixed_k_partitions(dataset: Dataset, k: int, seed: int = 0, kmeans_runs: int = 10,
                       algorithms=ALGORITHMS, dendrograms: dict | None = None) -> list[Partition]:
    """Repeated K-Means plus one cut per linkage, all at a fixed k (duplicates kept)."""
    points = _points(dataset)
    parts = []
    for algo in algorithms:
        if algo == "kmeans":
            for r in range(kmeans_runs):
                labels, _, _ = lloyd(points, k, np.random.default_rng(kmeans_seed(seed, k, r)))
                parts.append(Partition.from_labels(canonical_labels(labels), f"kmeans:k={k}:run={r}",
                                                   algorithm="kmeans", target_k=k))
        else:
            dendro = dendrograms[algo] if dendrograms and algo in dendrograms else run_agglomerative(points, algo)
            parts.append(Partition.from_labels(dendro.cut(k), f"{algo}:k={k}", algorithm=algo, target_k=k))
    return parts
