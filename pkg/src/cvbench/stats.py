"""Rank-based tests: Spearman, pairwise Wilcoxon signed-rank (Bonferroni), Kruskal-Wallis."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as sps
from scipy.stats import rankdata

log = logging.getLogger(__name__)

ALPHA = 0.05
EXACT_SPEARMAN_BELOW = 10
EXACT_WILCOXON_BELOW = 20
NUMERIC_PROPERTIES = ("k_star", "dimensions", "overlap", "imbalance")
GROUP_PROPERTIES = ("noise", "compactness")


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n: int
    method: str
    adjusted_p: float

    @property
    def significant(self) -> bool:
        return self.adjusted_p < ALPHA


def bonferroni(p: float, m: int) -> float:
    return min(1.0, p * m)


# ---------------------------------------------------------------- Spearman

def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0:
        return math.nan
    return float(a @ b) / denom


@lru_cache(maxsize=None)
def _permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.int8)


def spearman_rho(x, y) -> float | None:
    """Pearson correlation of average ranks; None when either side is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("spearman needs equal-length vectors")
    if x.size < 2:
        return None
    rho = _pearson(rankdata(x), rankdata(y))
    return None if math.isnan(rho) else max(-1.0, min(1.0, rho))


def spearman(x, y) -> tuple[float, float] | None:
    """(rho, two-sided p). Exact permutation p below n=10, t approximation from there."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3:
        raise ValueError(f"spearman needs at least 3 pairs, got {n}")
    rho = spearman_rho(x, y)
    if rho is None:
        return None
    if n < EXACT_SPEARMAN_BELOW:
        return rho, _spearman_exact_p(rankdata(x), rankdata(y), rho)
    if abs(rho) >= 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, float(min(1.0, 2.0 * sps.t.sf(abs(t), n - 2)))


def _spearman_exact_p(rx: np.ndarray, ry: np.ndarray, rho: float) -> float:
    perms = _permutations(rx.size)
    a = rx - rx.mean()
    b = ry - ry.mean()
    stats = (b[perms] @ a) / math.sqrt(float(a @ a) * float(b @ b))
    return float(np.mean(np.abs(stats) >= abs(rho) - 1e-12))


def spearman_test(x, y) -> TestResult | None:
    out = spearman(x, y)
    if out is None:
        return None
    n = len(x)
    method = "spearman-exact" if n < EXACT_SPEARMAN_BELOW else "spearman-t"
    return TestResult(out[0], out[1], n, method, out[1])


# ---------------------------------------------------------------- Wilcoxon

def _signed_rank_null(doubled_ranks: np.ndarray) -> np.ndarray:
    """Counts of every attainable 2*W+ over all 2^n sign assignments."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=float)
    counts[0] = 1.0
    for r in doubled_ranks.astype(np.int64):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon(x, y) -> TestResult:
    """Two-sided signed-rank test on paired samples; zero differences dropped."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d = d[d != 0]
    n = d.size
    if n == 0:
        return TestResult(0.0, 1.0, 0, "wilcoxon-degenerate", 1.0)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)
    if n < EXACT_WILCOXON_BELOW:
        counts = _signed_rank_null(np.rint(2 * ranks))
        w2 = int(round(2 * w_plus))
        lower = counts[: w2 + 1].sum()
        upper = counts[w2:].sum()
        p = float(min(1.0, 2.0 * min(lower, upper) / counts.sum()))
        return TestResult(stat, p, n, "wilcoxon-exact", p)
    _, tie_counts = np.unique(ranks, return_counts=True)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    z = max(0.0, abs(w_plus - mean) - 0.5) / math.sqrt(var)
    p = float(min(1.0, 2.0 * sps.norm.sf(z)))
    return TestResult(stat, p, n, "wilcoxon-normal", p)


def wilcoxon_pairwise(samples: Mapping[str, Sequence[float]]) -> dict[tuple[str, str], TestResult]:
    """All index pairs, Bonferroni-adjusted over the number of pairs."""
    names = list(samples)
    lengths = {len(samples[k]) for k in names}
    if len(lengths) > 1:
        raise ValueError("paired samples must have equal length")
    pairs = list(itertools.combinations(names, 2))
    m = len(pairs)
    out = {}
    for a, b in pairs:
        r = wilcoxon(samples[a], samples[b])
        out[(a, b)] = TestResult(r.statistic, r.p_value, r.n, r.method, bonferroni(r.p_value, m))
    return out


# ----------------------------------------------------------- Kruskal-Wallis

def kruskal_wallis(groups: Sequence[Sequence[float]]) -> TestResult:
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2 or any(g.size == 0 for g in groups):
        raise ValueError("kruskal_wallis needs at least two non-empty groups")
    pooled = np.concatenate(groups)
    n = pooled.size
    if n < 5:
        log.warning("kruskal_wallis on only %d observations", n)
    ranks = rankdata(pooled)
    bounds = np.cumsum([0] + [g.size for g in groups])
    h = 12.0 / (n * (n + 1)) * sum(
        ranks[bounds[i]:bounds[i + 1]].sum() ** 2 / groups[i].size for i in range(len(groups))) - 3.0 * (n + 1)
    _, ties = np.unique(pooled, return_counts=True)
    correction = 1.0 - np.sum(ties**3 - ties) / (n**3 - n)
    if correction <= 0:
        return TestResult(0.0, 1.0, n, "kruskal-wallis", 1.0)
    h = max(0.0, h / correction)
    p = float(sps.chi2.sf(h, len(groups) - 1))
    return TestResult(h, p, n, "kruskal-wallis", p)


# -------------------------------------------------------- property effects

def _property_value(record, prop: str):
    tags = record.tags
    if prop == "noise":
        return bool(tags["has_noise"])
    if prop == "compactness":
        return tags["compactness_level"]
    return float(tags[prop])


def property_association(records, prop: str) -> dict[str, TestResult | None]:
    """Per index: Spearman(property, rho_all) for numeric properties,
    Kruskal-Wallis over property levels for noise and compactness."""
    if prop not in NUMERIC_PROPERTIES + GROUP_PROPERTIES:
        raise ValueError(f"unknown property {prop!r}")
    by_index: dict[str, list] = {}
    for r in records:
        if r.rho_all is not None and r.tags:
            by_index.setdefault(r.index, []).append(r)
    out: dict[str, TestResult | None] = {}
    for index, recs in sorted(by_index.items()):
        values = [_property_value(r, prop) for r in recs]
        perf = np.array([r.rho_all for r in recs])
        if prop in NUMERIC_PROPERTIES:
            out[index] = spearman_test(np.array(values), perf) if len(recs) >= 3 else None
            continue
        levels = sorted(set(values), key=str)
        groups = [perf[[v == lev for v in values]] for lev in levels]
        out[index] = kruskal_wallis(groups) if len(groups) >= 2 else None
    return out
