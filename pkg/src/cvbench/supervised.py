"""Partitions with a known quality order, built from the ground truth.

Procedure 1 merges ground-truth clusters in order of Gaussian similarity
(symmetric KL), giving k < k*. Procedure 2 splits clusters through their mean
along principal axes in decreasing order of Gaussian volume, giving k > k*.
Both come in a varied-k form (one partition per step) and a fixed-k form
(repeated constructions with progressively excluded merges / axes).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import NOISE, Dataset, Partition, canonical_labels

log = logging.getLogger(__name__)

VARIANTS = ("p1_varied", "p1_fixed", "p2_varied", "p2_fixed")
P1_DIMENSIONS = (2, 4, 6)
MIN_PARTITIONS = 5
DEFAULT_RUNS = 5
_REG_EPS = 1e-6
_REG_TRIGGER = 1e-10


class ConstructionSkipped(ValueError):
    """Too few partitions could be produced for this dataset."""


@dataclass(frozen=True)
class GaussianFit:
    mean: np.ndarray
    covariance: np.ndarray
    size: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def logdet(self) -> float:
        sign, val = np.linalg.slogdet(self.covariance)
        if sign <= 0:
            raise ValueError("covariance is not positive definite")
        return float(val)


@dataclass
class RankedPartitionSet:
    partitions: list[Partition]
    reference_ranks: np.ndarray
    variant: str
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        self.reference_ranks = np.asarray(self.reference_ranks)
        if len(self.partitions) != self.reference_ranks.size:
            raise ValueError("one reference rank per partition required")
        if np.unique(self.reference_ranks).size != self.reference_ranks.size:
            raise ValueError("reference ranks must be tie-free")

    def __len__(self):
        return len(self.partitions)


def _check_gaussian(dataset: Dataset) -> None:
    if np.any(dataset.truth.labels == NOISE):
        raise ValueError("supervised construction needs noise-free data")
    if dataset.meta is not None and dataset.meta.distribution != "gaussian":
        raise ValueError(f"supervised construction needs Gaussian clusters, got {dataset.meta.distribution}")


def _cluster_ids(dataset: Dataset) -> np.ndarray:
    return np.unique(dataset.truth.labels[dataset.truth.labels != NOISE])


def fit_gaussian(points: np.ndarray) -> GaussianFit:
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n < 2:
        raise ValueError(f"cannot fit a Gaussian to {n} point(s)")
    mean = points.mean(axis=0)
    x = points - mean
    cov = x.T @ x / n
    cov = (cov + cov.T) / 2
    trace = float(np.trace(cov))
    if np.linalg.eigvalsh(cov).min() < _REG_TRIGGER * trace or trace == 0:
        dim = cov.shape[0]
        ridge = _REG_EPS * (trace / dim) if trace > 0 else _REG_EPS
        cov = cov + ridge * np.eye(dim)
    return GaussianFit(mean, cov, n)


def fit_cluster_gaussians(dataset: Dataset) -> list[GaussianFit]:
    """ML Gaussian per ground-truth cluster, in increasing label order."""
    labels = dataset.truth.labels
    return [fit_gaussian(dataset.points[labels == c]) for c in _cluster_ids(dataset)]


def _kl(a: GaussianFit, b: GaussianFit) -> float:
    try:
        chol_b = np.linalg.cholesky(b.covariance)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular covariance") from exc
    inv_cov_a = np.linalg.solve(chol_b, np.linalg.solve(chol_b, a.covariance).T)
    diff = np.linalg.solve(chol_b, b.mean - a.mean)
    logdet_b = 2.0 * float(np.sum(np.log(np.diag(chol_b))))
    return 0.5 * (float(np.trace(inv_cov_a)) + float(diff @ diff) - a.dim + logdet_b - a.logdet())


def symmetric_kl(a: GaussianFit, b: GaussianFit) -> float:
    """Mean of KL(a||b) and KL(b||a) for multivariate Gaussians."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    return max(0.0, 0.5 * (_kl(a, b) + _kl(b, a)))


def divergence_matrix(fits: list[GaussianFit]) -> np.ndarray:
    k = len(fits)
    m = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            m[i, j] = m[j, i] = symmetric_kl(fits[i], fits[j])
    return m


def _ranked(partitions, variant, min_partitions, dataset_id, **notes) -> RankedPartitionSet:
    if len(partitions) < min_partitions:
        raise ConstructionSkipped(
            f"{variant}: only {len(partitions)} partitions for dataset {dataset_id} (need {min_partitions})")
    return RankedPartitionSet(partitions, np.arange(1, len(partitions) + 1), variant, notes)


# ---------------------------------------------------------- procedure 1

def _sorted_pairs(div: np.ndarray) -> list[tuple[float, int, int]]:
    k = div.shape[0]
    return sorted((div[i, j], i, j) for i in range(k) for j in range(i + 1, k))


def _greedy_merges(pairs, excluded: set, limit: int | None):
    """Lowest-divergence pairs of still-unmerged original clusters, skipping excluded pairs."""
    used: set[int] = set()
    chosen = []
    for d, i, j in pairs:
        if limit is not None and len(chosen) == limit:
            break
        if (i, j) in excluded or i in used or j in used:
            continue
        used.update((i, j))
        chosen.append((d, i, j))
    return chosen


def _merged_labels(codes: np.ndarray, merges) -> np.ndarray:
    """codes index the original clusters 0..k*-1."""
    target = np.arange(codes.max() + 1)
    for _, i, j in merges:
        target[j] = i
    return canonical_labels(target[codes])


def _truth_codes(dataset: Dataset) -> np.ndarray:
    return np.searchsorted(_cluster_ids(dataset), dataset.truth.labels)


def _check_p1(dataset: Dataset) -> None:
    _check_gaussian(dataset)
    if dataset.dim not in P1_DIMENSIONS:
        raise ValueError(f"procedure 1 is defined for D in {P1_DIMENSIONS}, got D={dataset.dim}")


def procedure1_varied(dataset: Dataset, min_partitions: int = MIN_PARTITIONS) -> RankedPartitionSet:
    _check_p1(dataset)
    codes = _truth_codes(dataset)
    if codes.max() + 1 < 3:
        raise ConstructionSkipped("procedure 1 needs k* >= 3")
    div = divergence_matrix(fit_cluster_gaussians(dataset))
    merges = _greedy_merges(_sorted_pairs(div), set(), None)
    parts = [Partition.from_labels(canonical_labels(codes), "p1_varied:step=0", variant="p1_varied", step=0)]
    for step in range(1, len(merges) + 1):
        labels = _merged_labels(codes, merges[:step])
        parts.append(Partition.from_labels(labels, f"p1_varied:step={step}", variant="p1_varied", step=step,
                                           divergence=merges[step - 1][0]))
    return _ranked(parts, "p1_varied", min_partitions, dataset.id)


def _fixed_p1(dataset: Dataset, target_k: int, runs: int):
    _check_p1(dataset)
    codes = _truth_codes(dataset)
    k_star = int(codes.max()) + 1
    needed = k_star - target_k
    if not 1 <= needed <= k_star // 2:
        raise ValueError(f"procedure 1 cannot reach k={target_k} from k*={k_star} with disjoint merges")
    pairs = _sorted_pairs(divergence_matrix(fit_cluster_gaussians(dataset)))
    excluded: set = set()
    accepted = []
    previous = None
    rejected = 0
    while len(accepted) < runs:
        merges = _greedy_merges(pairs, excluded, needed)
        if len(merges) < needed:
            break
        excluded.update((i, j) for _, i, j in merges)
        divs = [d for d, _, _ in merges]
        if previous is not None and any(d < p for d, p in zip(divs, previous)):
            rejected += 1
            continue
        previous = divs
        accepted.append(merges)
    parts = [
        Partition.from_labels(_merged_labels(codes, m), f"p1_fixed:k={target_k}:run={r + 1}",
                              variant="p1_fixed", run=r + 1, target_k=target_k)
        for r, m in enumerate(accepted)
    ]
    return parts, {"rejected_runs": rejected}


# ---------------------------------------------------------- procedure 2

def _principal_axes(cov: np.ndarray) -> np.ndarray:
    """Eigenvectors as rows by decreasing eigenvalue, first nonzero component positive."""
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")
    axes = evecs[:, order].T.copy()
    for row in axes:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0:
            row *= -1
    return axes


def volume_order(fits: list[GaussianFit]) -> list[int]:
    """Cluster indices by decreasing log-det covariance (lower index first on ties)."""
    return sorted(range(len(fits)), key=lambda c: (-fits[c].logdet(), c))


def _split(points, codes, c, fit: GaussianFit, axis: np.ndarray, new_code: int):
    """Children of cluster c on either side of the hyperplane through its mean; None if one is empty."""
    members = np.flatnonzero(codes == c)
    side = (points[members] - fit.mean) @ axis > 0
    if side.all() or not side.any():
        return None
    out = codes.copy()
    out[members[side]] = new_code
    return out


def procedure2_varied(dataset: Dataset, min_partitions: int = MIN_PARTITIONS) -> RankedPartitionSet:
    _check_gaussian(dataset)
    codes = _truth_codes(dataset)
    fits = fit_cluster_gaussians(dataset)
    parts = [Partition.from_labels(canonical_labels(codes), "p2_varied:step=0", variant="p2_varied", step=0)]
    skipped = []
    next_code = len(fits)
    for c in volume_order(fits):
        split = _split(dataset.points, codes, c, fits[c], _principal_axes(fits[c].covariance)[0], next_code)
        if split is None:
            log.warning("dataset %s: split of cluster %d leaves an empty side, skipped", dataset.id, c)
            skipped.append(c)
            continue
        codes, next_code = split, next_code + 1
        step = len(parts)
        parts.append(Partition.from_labels(canonical_labels(codes), f"p2_varied:step={step}",
                                           variant="p2_varied", step=step, split_cluster=c))
    return _ranked(parts, "p2_varied", min_partitions, dataset.id, skipped_clusters=skipped)


def _fixed_p2(dataset: Dataset, target_k: int, runs: int):
    _check_gaussian(dataset)
    base = _truth_codes(dataset)
    fits = fit_cluster_gaussians(dataset)
    k_star = len(fits)
    m = target_k - k_star
    if not 1 <= m <= k_star:
        raise ValueError(f"procedure 2 cannot reach k={target_k} from k*={k_star} with single splits")
    chosen = volume_order(fits)[:m]
    axes = {c: _principal_axes(fits[c].covariance) for c in chosen}
    parts = []
    failed_axes = []
    for r in range(dataset.dim):
        if len(parts) == runs:
            break
        codes, next_code = base, k_star
        for c in chosen:
            codes = _split(dataset.points, codes, c, fits[c], axes[c][r], next_code)
            if codes is None:
                break
            next_code += 1
        if codes is None:
            failed_axes.append(r + 1)
            continue
        parts.append(Partition.from_labels(canonical_labels(codes), f"p2_fixed:k={target_k}:axis={r + 1}",
                                           variant="p2_fixed", run=len(parts) + 1, axis=r + 1,
                                           target_k=target_k))
    return parts, {"failed_axes": failed_axes}


def scenario3_target(k_star: int, n: int, procedure: str) -> int:
    """Fixed-k target: 30% below k* for procedure 1, 30% above for procedure 2."""
    from .datagen import round_half_up

    if procedure == "p1":
        return max(2, round_half_up(0.7 * k_star))
    if procedure == "p2":
        return min(n - 1, round_half_up(1.3 * k_star))
    raise ValueError(f"unknown procedure {procedure!r}")


def procedure_fixed_k(dataset: Dataset, variant: str, target_k: int | None = None, runs: int = DEFAULT_RUNS,
                      min_partitions: int = MIN_PARTITIONS) -> RankedPartitionSet:
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if target_k is None:
        target_k = scenario3_target(int(_cluster_ids(dataset).size), dataset.n, variant)
    if variant == "p1":
        parts, notes = _fixed_p1(dataset, target_k, runs)
    elif variant == "p2":
        parts, notes = _fixed_p2(dataset, target_k, runs)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return _ranked(parts, f"{variant}_fixed", min_partitions, dataset.id, target_k=target_k, **notes)


def build_ranked_set(dataset: Dataset, variant: str, runs: int = DEFAULT_RUNS,
                     min_partitions: int = MIN_PARTITIONS) -> RankedPartitionSet:
    if variant == "p1_varied":
        return procedure1_varied(dataset, min_partitions)
    if variant == "p2_varied":
        return procedure2_varied(dataset, min_partitions)
    if variant in ("p1_fixed", "p2_fixed"):
        return procedure_fixed_k(dataset, variant[:2], None, runs, min_partitions)
    raise ValueError(f"unknown variant {variant!r}")

