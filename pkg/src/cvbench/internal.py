"""Internal (relative) validity indexes with noise adjustment.

Every index except DBCV is evaluated on the non-noise points only and then
rescaled by the clustered fraction of the data. DBCV weighs clusters by
size over all N points and so handles noise itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .core import NOISE, Dataset, DistanceMatrix, Partition, canonical_labels, compute_distance_matrix


class IndexUndefined(ValueError):
    """The index has no value for this (dataset, partition) pair."""


@dataclass(frozen=True)
class IndexDescriptor:
    id: str
    orientation: str
    approach: str
    requires_coordinates: bool
    func: Callable = None


@dataclass(frozen=True)
class IndexScore:
    index: str
    orientation: str
    raw: float
    adjusted: float


@dataclass(frozen=True)
class PairStatistics:
    s_plus: int
    s_minus: int
    n_w: int
    n_b: int
    sum_w: float
    sum_b: float
    min_w: float
    max_w: float
    min_b: float
    max_b: float

    @property
    def n_t(self) -> int:
        return self.n_w + self.n_b


def noise_adjust(raw: float, orientation: str, n: int, n_noise: int) -> float:
    if not 0 <= n_noise < n:
        raise ValueError(f"need 0 <= N_noise < N, got N_noise={n_noise}, N={n}")
    if n_noise == 0:
        return raw
    # the rescaling would reward negative maximisation / positive minimisation values
    if orientation == "max" and raw < 0:
        return raw
    if orientation == "min" and raw > 0:
        return raw
    return raw * (n - n_noise) / n


# ---------------------------------------------------------------- contexts

class _PairCache:
    """Condensed pairwise distances of one point set, globally sorted once."""

    def __init__(self, d: np.ndarray):
        n = d.shape[0]
        self.iu, self.ju = np.triu_indices(n, 1)
        self.dist = d[self.iu, self.ju]
        self.order = np.argsort(self.dist, kind="stable")
        s = self.dist[self.order]
        self.sorted = s
        self.csum = np.concatenate([[0.0], np.cumsum(s)])
        p = s.size
        if p:
            new_group = np.concatenate([[True], s[1:] != s[:-1]])
            starts = np.flatnonzero(new_group)
            group = np.cumsum(new_group) - 1
            ends = np.concatenate([starts[1:], [p]]) - 1
            self.first = starts[group]
            self.last = ends[group]
        else:
            self.first = self.last = np.zeros(0, dtype=np.int64)
        self.std = float(self.dist.std()) if p else 0.0


class _View:
    """Non-noise restriction of (dataset, partition) with lazily computed pieces."""

    def __init__(self, points, d: np.ndarray, labels: np.ndarray, pairs: _PairCache | None,
                 n_total: int, n_noise: int):
        self.points = points
        self.d = d
        self.labels = labels
        self.k = int(labels.max()) + 1 if labels.size else 0
        self.n = labels.size
        self.n_total = n_total
        self.n_noise = n_noise
        self.sizes = np.bincount(labels, minlength=self.k)
        self._pairs = pairs
        self._within = None
        self._stats = None
        self._centroids = None

    @property
    def pairs(self) -> _PairCache:
        if self._pairs is None:
            self._pairs = _PairCache(self.d)
        return self._pairs

    @property
    def within(self) -> np.ndarray:
        if self._within is None:
            pc = self.pairs
            self._within = self.labels[pc.iu] == self.labels[pc.ju]
        return self._within

    @property
    def centroids(self) -> np.ndarray:
        if self._centroids is None:
            if self.points is None:
                raise IndexUndefined("index needs coordinates")
            c = np.zeros((self.k, self.points.shape[1]))
            np.add.at(c, self.labels, self.points)
            self._centroids = c / self.sizes[:, None]
        return self._centroids

    def pair_statistics(self) -> PairStatistics:
        if self._stats is None:
            self._stats = _pair_statistics(self.pairs, self.within)
        return self._stats


def _pair_statistics(pc: _PairCache, within: np.ndarray) -> PairStatistics:
    n_w = int(within.sum())
    n_b = int(within.size - n_w)
    if n_w == 0 or n_b == 0:
        raise IndexUndefined("need at least one within-cluster and one between-cluster pair")
    w_sorted = within[pc.order]
    b_before = np.concatenate([[0], np.cumsum(~w_sorted)])
    wpos = np.flatnonzero(w_sorted)
    # between pairs strictly shorter / strictly longer than each within pair
    shorter = b_before[pc.first[wpos]]
    longer = n_b - b_before[pc.last[wpos] + 1]
    dw = pc.dist[within]
    db = pc.dist[~within]
    return PairStatistics(
        s_plus=int(longer.sum()), s_minus=int(shorter.sum()), n_w=n_w, n_b=n_b,
        sum_w=float(dw.sum()), sum_b=float(db.sum()),
        min_w=float(dw.min()), max_w=float(dw.max()), min_b=float(db.min()), max_b=float(db.max()))


class IndexContext:
    """Per-dataset cache of the distance matrix and sorted pair distances."""

    def __init__(self, dataset: Dataset | np.ndarray, dist: DistanceMatrix | None = None):
        if isinstance(dataset, Dataset):
            self.points = np.asarray(dataset.points, dtype=float)
        else:
            pts = np.asarray(dataset, dtype=float)
            self.points = pts[:, None] if pts.ndim == 1 else pts
        self.dist = dist or compute_distance_matrix(self.points)
        self._full_pairs = None

    def view(self, partition: Partition | np.ndarray) -> _View:
        labels = np.asarray(partition.labels if isinstance(partition, Partition) else partition)
        keep = labels != NOISE
        n_total = labels.size
        n_noise = int(n_total - keep.sum())
        if n_noise == 0:
            if self._full_pairs is None:
                self._full_pairs = _PairCache(self.dist.d)
            return _View(self.points, self.dist.d, canonical_labels(labels), self._full_pairs, n_total, 0)
        idx = np.flatnonzero(keep)
        return _View(self.points[idx], self.dist.d[np.ix_(idx, idx)], canonical_labels(labels[idx]),
                     None, n_total, n_noise)


# ----------------------------------------------------------------- indexes

def _scatter(v: _View):
    """(between SS, within SS) around the grand and cluster centroids."""
    x = v.points
    grand = x.mean(axis=0)
    c = v.centroids
    b = float(np.sum(v.sizes * np.sum((c - grand) ** 2, axis=1)))
    w = float(np.sum((x - c[v.labels]) ** 2))
    return b, w


def _silhouette(v: _View) -> float:
    onehot = np.zeros((v.n, v.k))
    onehot[np.arange(v.n), v.labels] = 1.0
    sums = v.d @ onehot
    own = v.sizes[v.labels]
    idx = np.arange(v.n)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(own > 1, sums[idx, v.labels] / np.maximum(own - 1, 1), 0.0)
        means = sums / v.sizes[None, :]
    means[idx, v.labels] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.zeros(v.n)
    ok = (own > 1) & (denom > 0)
    s[ok] = (b[ok] - a[ok]) / denom[ok]
    return float(s.mean())


def vrc(v: _View) -> float:
    b, w = _scatter(v)
    if w <= 0:
        raise IndexUndefined("zero within-cluster scatter")
    return (b / (v.k - 1)) / (w / (v.n - v.k))


def davies_bouldin(v: _View) -> float:
    c = v.centroids
    spread = np.zeros(v.k)
    np.add.at(spread, v.labels, np.linalg.norm(v.points - c[v.labels], axis=1))
    spread /= v.sizes
    m = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=2)
    np.fill_diagonal(m, np.inf)
    if np.any(m == 0):
        raise IndexUndefined("coincident centroids")
    r = (spread[:, None] + spread[None, :]) / m
    return float(np.mean(r.max(axis=1)))


def dunn(v: _View) -> float:
    st = v.pair_statistics()
    if st.max_w <= 0:
        raise IndexUndefined("all clusters have zero diameter")
    return st.min_b / st.max_w


def c_index(v: _View) -> float:
    st = v.pair_statistics()
    pc = v.pairs
    s_min = pc.csum[st.n_w]
    s_max = pc.csum[-1] - pc.csum[pc.sorted.size - st.n_w]
    if s_max - s_min <= 0:
        raise IndexUndefined("all pair distances equal")
    return float((st.sum_w - s_min) / (s_max - s_min))


def aucc_from_stats(st: PairStatistics) -> float:
    ties = st.n_w * st.n_b - st.s_plus - st.s_minus
    return (st.s_plus + 0.5 * ties) / (st.n_w * st.n_b)


def _aucc(v: _View) -> float:
    return aucc_from_stats(v.pair_statistics())


def point_biserial(v: _View) -> float:
    st = v.pair_statistics()
    std = v.pairs.std
    if std <= 0:
        raise IndexUndefined("zero distance variance")
    mean_w = st.sum_w / st.n_w
    mean_b = st.sum_b / st.n_b
    return (mean_b - mean_w) * math.sqrt(st.n_w * st.n_b / st.n_t**2) / std


def pbm(v: _View) -> float:
    x = v.points
    c = v.centroids
    e1 = float(np.sum(np.linalg.norm(x - x.mean(axis=0), axis=1)))
    ek = float(np.sum(np.linalg.norm(x - c[v.labels], axis=1)))
    if ek <= 0:
        raise IndexUndefined("zero within-cluster dispersion")
    dk = float(np.max(np.linalg.norm(c[:, None, :] - c[None, :, :], axis=2)))
    return ((1.0 / v.k) * (e1 / ek) * dk) ** 2


def wb(v: _View) -> float:
    b, w = _scatter(v)
    if b <= 0:
        raise IndexUndefined("zero between-cluster scatter")
    return v.k * w / b


def xie_beni(v: _View) -> float:
    c = v.centroids
    _, w = _scatter(v)
    m = np.sum((c[:, None, :] - c[None, :, :]) ** 2, axis=2)
    sep = m[np.triu_indices(v.k, 1)].min()
    if sep <= 0:
        raise IndexUndefined("coincident centroids")
    return w / (v.n * sep)


def wemmert_gancarski(v: _View) -> float:
    dc = np.linalg.norm(v.points[:, None, :] - v.centroids[None, :, :], axis=2)
    idx = np.arange(v.n)
    own = dc[idx, v.labels].copy()
    dc[idx, v.labels] = np.inf
    other = dc.min(axis=1)
    if np.any(other <= 0):
        raise IndexUndefined("point coincides with a foreign centroid")
    r_sum = np.bincount(v.labels, weights=own / other, minlength=v.k)
    return float(np.sum(np.maximum(0.0, v.sizes - r_sum)) / v.n)


def ratkowsky_lance(v: _View) -> float:
    """sqrt(between SS / total SS) pooled over all attributes, divided by sqrt(k).

    Pooling keeps the value independent of the coordinate frame; it equals the
    attribute-wise mean whenever every attribute carries the same ratio.
    """
    b, w = _scatter(v)
    if b + w <= 0:
        raise IndexUndefined("zero total scatter")
    return math.sqrt(min(1.0, b / (b + w))) / math.sqrt(v.k)


def ratkowsky_lance_per_attribute(points, labels) -> float:
    """Attribute-wise form: mean over attributes of sqrt(BGSS_j / TSS_j), over sqrt(k).

    Depends on the coordinate frame; kept for comparison with the pooled index.
    """
    points = np.asarray(points, dtype=float)
    labels = canonical_labels(labels)
    k = int(labels.max()) + 1
    sizes = np.bincount(labels)
    grand = points.mean(axis=0)
    c = np.zeros((k, points.shape[1]))
    np.add.at(c, labels, points)
    c /= sizes[:, None]
    bgss = np.sum(sizes[:, None] * (c - grand) ** 2, axis=0)
    tss = np.sum((points - grand) ** 2, axis=0)
    keep = tss > 0
    return float(np.mean(np.sqrt(bgss[keep] / tss[keep])) / math.sqrt(k))


def g_plus(v: _View) -> float:
    st = v.pair_statistics()
    return 2.0 * st.s_minus / (st.n_t * (st.n_t - 1))


def tau(v: _View) -> float:
    st = v.pair_statistics()
    denom = math.sqrt(st.n_b * st.n_w * (st.n_t * (st.n_t - 1) / 2.0))
    return (st.s_plus - st.s_minus) / denom


def _core_distances(d: np.ndarray, dim: int) -> np.ndarray:
    """All-points core distance within one cluster, computed in log space."""
    n = d.shape[0]
    if n < 2:
        return np.zeros(n)
    with np.errstate(divide="ignore"):
        logs = np.where(d > 0, -dim * np.log(np.where(d > 0, d, 1.0)), -np.inf)
    lse = logsumexp(logs, axis=1)
    out = np.exp(-(lse - math.log(n - 1)) / dim)
    # zero-distance duplicates only: treat as zero core distance
    out[~np.isfinite(lse)] = 0.0
    return out


def _mst_edges(w: np.ndarray) -> list[tuple[int, int, float]]:
    n = w.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = w[0].copy()
    parent = np.zeros(n, dtype=np.int64)
    edges = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        j = int(np.argmin(cand))
        edges.append((int(parent[j]), j, float(best[j])))
        in_tree[j] = True
        closer = w[j] < best
        parent[closer] = j
        best = np.minimum(best, w[j])
    return edges


def dbcv(v: _View) -> float:
    """Density-based validity with all-points core distances and mutual reachability MSTs."""
    if v.points is None:
        raise IndexUndefined("DBCV needs the data dimensionality")
    dim = v.points.shape[1]
    core = np.zeros(v.n)
    members = [np.flatnonzero(v.labels == c) for c in range(v.k)]
    for idx in members:
        core[idx] = _core_distances(v.d[np.ix_(idx, idx)], dim)
    mreach = np.maximum(v.d, np.maximum(core[:, None], core[None, :]))
    internal = np.zeros(v.n, dtype=bool)
    sparseness = np.zeros(v.k)
    for c, idx in enumerate(members):
        if idx.size == 1:
            internal[idx] = True
            continue
        edges = _mst_edges(mreach[np.ix_(idx, idx)])
        deg = np.zeros(idx.size, dtype=np.int64)
        for a, b, _ in edges:
            deg[a] += 1
            deg[b] += 1
        inner = deg > 1
        if not inner.any():
            inner[:] = True
        internal[idx[inner]] = True
        weights = [w for a, b, w in edges if inner[a] and inner[b]]
        sparseness[c] = max(weights) if weights else max(w for _, _, w in edges)
    sep = np.full(v.k, np.inf)
    inner_idx = np.flatnonzero(internal)
    sub = mreach[np.ix_(inner_idx, inner_idx)]
    lab = v.labels[inner_idx]
    for c in range(v.k):
        rows = lab == c
        sep[c] = sub[np.ix_(rows, ~rows)].min()
    validity = np.zeros(v.k)
    for c in range(v.k):
        if v.sizes[c] < 2:
            continue
        denom = max(sep[c], sparseness[c])
        validity[c] = (sep[c] - sparseness[c]) / denom if denom > 0 else 0.0
    return float(np.sum(v.sizes / v.n_total * validity))


INDEXES: dict[str, IndexDescriptor] = {
    d.id: d
    for d in [
        IndexDescriptor("silhouette", "max", "sep_comp", False, _silhouette),
        IndexDescriptor("vrc", "max", "sep_comp", True, vrc),
        IndexDescriptor("db", "min", "sep_comp", True, davies_bouldin),
        IndexDescriptor("dunn", "max", "sep_comp", False, dunn),
        IndexDescriptor("c_index", "min", "sep_comp", False, c_index),
        IndexDescriptor("aucc", "max", "sep_comp", False, _aucc),
        IndexDescriptor("point_biserial", "max", "sep_comp", False, point_biserial),
        IndexDescriptor("pbm", "max", "sep_comp", True, pbm),
        IndexDescriptor("wb", "min", "sep_comp", True, wb),
        IndexDescriptor("xie_beni", "min", "sep_comp", True, xie_beni),
        IndexDescriptor("wemmert_gancarski", "max", "sep_comp", True, wemmert_gancarski),
        IndexDescriptor("ratkowsky_lance", "max", "sep_comp", True, ratkowsky_lance),
        IndexDescriptor("g_plus", "min", "sep_comp", False, g_plus),
        IndexDescriptor("tau", "max", "sep_comp", False, tau),
        IndexDescriptor("dbcv", "max", "density", True, dbcv),
    ]
}
INDEX_IDS = tuple(INDEXES)


def _check_view(v: _View) -> None:
    if v.k < 2:
        raise IndexUndefined(f"need k >= 2 non-noise clusters, got {v.k}")
    if v.k >= v.n:
        raise IndexUndefined(f"need k < N' (k={v.k}, N'={v.n})")
    if v.pairs.sorted.size and v.pairs.sorted[-1] <= 0:
        raise IndexUndefined("all points identical")


def compute_internal(index_id: str, dataset, partition, context: IndexContext | None = None) -> IndexScore:
    desc = INDEXES[index_id]
    ctx = context or IndexContext(dataset)
    v = ctx.view(partition)
    _check_view(v)
    raw = float(desc.func(v))
    if not math.isfinite(raw):
        raise IndexUndefined(f"{index_id} is not finite")
    if index_id == "dbcv":
        adjusted = raw
    else:
        adjusted = noise_adjust(raw, desc.orientation, v.n_total, v.n_noise)
    return IndexScore(index_id, desc.orientation, raw, adjusted)


def compute_many(indexes, dataset, partition, context: IndexContext | None = None) -> dict[str, IndexScore | None]:
    """Scores for several indexes on one partition; undefined ones map to None."""
    ctx = context or IndexContext(dataset)
    v = ctx.view(partition)
    out: dict[str, IndexScore | None] = {}
    try:
        _check_view(v)
    except IndexUndefined:
        return {i: None for i in indexes}
    for index_id in indexes:
        desc = INDEXES[index_id]
        try:
            raw = float(desc.func(v))
        except IndexUndefined:
            out[index_id] = None
            continue
        if not math.isfinite(raw):
            out[index_id] = None
            continue
        adjusted = raw if index_id == "dbcv" else noise_adjust(raw, desc.orientation, v.n_total, v.n_noise)
        out[index_id] = IndexScore(index_id, desc.orientation, raw, adjusted)
    return out


# thin public wrappers over explicit distance matrices

def pair_statistics(dist: DistanceMatrix, partition) -> PairStatistics:
    labels = np.asarray(partition.labels if isinstance(partition, Partition) else partition)
    keep = np.flatnonzero(labels != NOISE)
    lab = canonical_labels(labels[keep])
    if np.unique(lab).size < 2:
        raise IndexUndefined("pair statistics need k >= 2")
    pc = _PairCache(np.asarray(dist.d)[np.ix_(keep, keep)])
    return _pair_statistics(pc, lab[pc.iu] == lab[pc.ju])


def _dist_view(dist: DistanceMatrix, partition) -> _View:
    labels = np.asarray(partition.labels if isinstance(partition, Partition) else partition)
    keep = np.flatnonzero(labels != NOISE)
    v = _View(None, np.asarray(dist.d)[np.ix_(keep, keep)], canonical_labels(labels[keep]), None,
              labels.size, labels.size - keep.size)
    if v.k < 2:
        raise IndexUndefined(f"need k >= 2 non-noise clusters, got {v.k}")
    return v


def silhouette(dist: DistanceMatrix, partition) -> float:
    return _silhouette(_dist_view(dist, partition))


def aucc(dist: DistanceMatrix, partition) -> float:
    """ROC area with co-membership as the positive class and -distance as the score."""
    return _aucc(_dist_view(dist, partition))
