"""External validity indexes against a ground truth and their aggregated ranking."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import NOISE, Partition, average_ranks

EXTERNAL_IDS = ("jaccard", "ss3", "ari", "nmi", "nid")


@dataclass(frozen=True)
class PairCounts:
    n11: int  # together in both
    n10: int  # together in truth only
    n01: int  # together in candidate only
    n00: int

    @property
    def total(self) -> int:
        return self.n11 + self.n10 + self.n01 + self.n00


@dataclass(frozen=True)
class ContingencyTable:
    table: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    n: int


def _labels(x) -> np.ndarray:
    return np.asarray(x.labels if isinstance(x, Partition) else x)


def _comparable(truth, partition):
    """Apply the noise convention: drop points that are NOISE on both sides,
    and turn one-sided NOISE points into singletons."""
    a = _labels(truth).astype(np.int64)
    b = _labels(partition).astype(np.int64)
    if a.shape != b.shape:
        raise ValueError(f"label vectors differ in length: {a.size} vs {b.size}")
    both = (a == NOISE) & (b == NOISE)
    a, b = a[~both].copy(), b[~both].copy()
    for lab in (a, b):
        noise = lab == NOISE
        if noise.any():
            base = lab.max() + 1 if (~noise).any() else 0
            lab[noise] = base + np.arange(noise.sum())
    return a, b


def contingency(truth, partition) -> ContingencyTable:
    a, b = _comparable(truth, partition)
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ua.size, ub.size), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return ContingencyTable(table, table.sum(axis=1), table.sum(axis=0), int(a.size))


def _comb2(x):
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def pair_counts(truth, partition) -> PairCounts:
    ct = contingency(truth, partition)
    n11 = int(_comb2(ct.table).sum())
    same_a = int(_comb2(ct.rows).sum())
    same_b = int(_comb2(ct.cols).sum())
    total = ct.n * (ct.n - 1) // 2
    return PairCounts(n11, same_a - n11, same_b - n11, total - same_a - same_b + n11)


def jaccard(pc: PairCounts) -> float:
    denom = pc.n11 + pc.n10 + pc.n01
    return 1.0 if denom == 0 else pc.n11 / denom


def sokal_sneath3(pc: PairCounts) -> float:
    """Mean of the four conditional agreement ratios a/(a+b), a/(a+c), d/(d+b), d/(d+c)."""
    a, b, c, d = pc.n11, pc.n10, pc.n01, pc.n00
    terms = [num / den for num, den in ((a, a + b), (a, a + c), (d, d + b), (d, d + c)) if den > 0]
    return float(np.mean(terms)) if terms else 1.0


def adjusted_rand(pc: PairCounts) -> float:
    total = pc.total
    if total == 0:
        return 1.0
    same_a = pc.n11 + pc.n10
    same_b = pc.n11 + pc.n01
    expected = same_a * same_b / total
    max_index = 0.5 * (same_a + same_b)
    if max_index == expected:
        # both sides all-singletons or a single cluster
        return 1.0 if pc.n10 == 0 and pc.n01 == 0 else 0.0
    return (pc.n11 - expected) / (max_index - expected)


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def _mutual_information(ct: ContingencyTable) -> float:
    nz = ct.table > 0
    nij = ct.table[nz].astype(float)
    outer = np.outer(ct.rows, ct.cols)[nz].astype(float)
    return float(max(0.0, np.sum(nij / ct.n * np.log(nij * ct.n / outer))))


def nmi(ct: ContingencyTable) -> float:
    ha, hb = _entropy(ct.rows, ct.n), _entropy(ct.cols, ct.n)
    if ha == 0 or hb == 0:
        return 1.0 if ha == 0 and hb == 0 else 0.0
    return min(1.0, _mutual_information(ct) / math.sqrt(ha * hb))


def nid(ct: ContingencyTable) -> float:
    """Normalised information distance 1 - I/max(H_a, H_b)."""
    ha, hb = _entropy(ct.rows, ct.n), _entropy(ct.cols, ct.n)
    if ha == 0 and hb == 0:
        return 0.0
    return max(0.0, 1.0 - _mutual_information(ct) / max(ha, hb))


def external_score(index_id: str, truth, partition) -> float:
    """Score in max-is-better orientation; NID is returned as the similarity 1 - NID."""
    if index_id in ("jaccard", "ss3", "ari"):
        pc = pair_counts(truth, partition)
        return {"jaccard": jaccard, "ss3": sokal_sneath3, "ari": adjusted_rand}[index_id](pc)
    if index_id == "nmi":
        return nmi(contingency(truth, partition))
    if index_id == "nid":
        return 1.0 - nid(contingency(truth, partition))
    raise ValueError(f"unknown external index {index_id!r}")


def external_scores(truth, partition) -> dict[str, float]:
    pc = pair_counts(truth, partition)
    ct = contingency(truth, partition)
    return {
        "jaccard": jaccard(pc),
        "ss3": sokal_sneath3(pc),
        "ari": adjusted_rand(pc),
        "nmi": nmi(ct),
        "nid": 1.0 - nid(ct),
    }


def aggregate_ranks(score_table: np.ndarray) -> np.ndarray:
    """Sum of per-column average ranks (all columns max-is-better), re-ranked; 1 = best."""
    score_table = np.asarray(score_table, dtype=float)
    summed = sum(average_ranks(score_table[:, j], "max") for j in range(score_table.shape[1]))
    return average_ranks(summed, "min")


def aggregate_external_ranks(truth, partitions: Sequence[Partition]) -> tuple[np.ndarray, np.ndarray]:
    """Return (aggregated reference ranks, per-partition score table in EXTERNAL_IDS order)."""
    if len(partitions) < 2:
        raise ValueError("need at least two partitions to rank")
    table = np.array([[external_scores(truth, p)[i] for i in EXTERNAL_IDS] for p in partitions])
    return aggregate_ranks(table), table
