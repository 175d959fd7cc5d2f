"""Scenario runners: reference rankings vs internal index rankings, and their summaries."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .clustering import ALGORITHMS, SweepSpec, compute_k_max, fixed_k_partitions, fixed_k_targets, sweep_varied_k
from .core import Dataset, Partition, dedupe_partitions
from .external import EXTERNAL_IDS, adjusted_rand, aggregate_external_ranks, pair_counts
from .internal import INDEX_IDS, INDEXES, IndexContext, compute_many
from .stats import spearman_rho
from .supervised import ConstructionSkipped, RankedPartitionSet, build_ranked_set

log = logging.getLogger(__name__)

ARI_THRESHOLD = 0.6
MIN_REGION = 3
MIN_FIXED_K_PARTITIONS = 4
MAX_MISSING_FRACTION = 0.20
S3_VARIANTS = ("p1_varied", "p2_varied", "p1_fixed", "p2_fixed")


@dataclass
class EvaluationRecord:
    dataset: str
    scenario: int
    source: str
    index: str
    top_pick_hit: bool
    rho_all: float | None
    rho_under: float | None
    rho_over: float | None
    range: float
    n_partitions: int
    tags: dict = field(default_factory=dict)

    def __post_init__(self):
        for rho in (self.rho_all, self.rho_under, self.rho_over):
            if rho is not None and not -1.0 - 1e-12 <= rho <= 1.0 + 1e-12:
                raise ValueError(f"correlation {rho} outside [-1, 1]")


@dataclass(frozen=True)
class Reject:
    dataset: str
    scenario: int
    source: str
    reason: str
    max_ari: float | None = None


@dataclass(frozen=True)
class ScenarioSpec:
    indexes: tuple[str, ...] = INDEX_IDS
    algorithms: tuple[str, ...] = ALGORITHMS
    kmeans_runs: int = 10
    variants: tuple[str, ...] = S3_VARIANTS
    runs: int = 5
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.indexes) - set(INDEX_IDS)
        if unknown:
            raise ValueError(f"unknown internal indexes {sorted(unknown)}")
        unknown = set(self.variants) - set(S3_VARIANTS)
        if unknown:
            raise ValueError(f"unknown scenario 3 variants {sorted(unknown)}")


@dataclass
class ScenarioResult:
    records: list[EvaluationRecord] = field(default_factory=list)
    rejects: list[Reject] = field(default_factory=list)
    external_records: list[EvaluationRecord] = field(default_factory=list)

    def extend(self, other: "ScenarioResult") -> None:
        self.records.extend(other.records)
        self.rejects.extend(other.rejects)
        self.external_records.extend(other.external_records)


# ------------------------------------------------------------- primitives

def filter_collection(truth, partitions: Sequence[Partition]) -> tuple[bool, float]:
    """Accept when some partition reaches ARI >= 0.6 against the ground truth."""
    if not partitions:
        return False, math.nan
    best = max(adjusted_rand(pair_counts(truth, p)) for p in partitions)
    return best >= ARI_THRESHOLD, best


def pick_best(values: Sequence[float], orientation: str, ks: Sequence[int]) -> int:
    """Position of the best value; ties go to the lowest k, then the lowest position."""
    values = np.asarray(values, dtype=float)
    target = values.max() if orientation == "max" else values.min()
    tied = np.flatnonzero(values == target)
    return int(min(tied, key=lambda i: (ks[i], i)))


def top_pick_agreement(reference_ranks, scores, orientation: str, ks) -> bool:
    return pick_best(scores, orientation, ks) == pick_best(reference_ranks, "min", ks)


def _oriented(scores, orientation):
    s = np.asarray(scores, dtype=float)
    return s if orientation == "max" else -s


def _rho(a, b) -> float | None:
    if len(a) < MIN_REGION:
        return None
    return spearman_rho(a, b)


def region_correlations(reference_ranks, scores, orientation: str, ks, k_o: int | None = None):
    """(rho_all, rho_under, rho_over, range) between index and reference orderings."""
    ref = -np.asarray(reference_ranks, dtype=float)
    sc = _oriented(scores, orientation)
    ks = np.asarray(ks)
    if k_o is None:
        k_o = int(ks[pick_best(reference_ranks, "min", ks)])
    rho_all = _rho(sc, ref)
    under = ks < k_o
    over = ks > k_o
    rho_under = _rho(sc[under], ref[under])
    rho_over = _rho(sc[over], ref[over])
    defined = [r for r in (rho_all, rho_under, rho_over) if r is not None]
    rng = max(defined) - min(defined) if defined else 0.0
    return rho_all, rho_under, rho_over, rng


def evaluate_collection(dataset_id: str, scenario: int, source: str, partitions: Sequence[Partition],
                        reference_ranks, index_scores: dict[str, list], orientations: dict[str, str],
                        tags: dict) -> list[EvaluationRecord]:
    """One record per index; partitions where the index is undefined are dropped,
    and the whole cell is skipped when more than 20% are undefined."""
    ks = np.array([p.k for p in partitions])
    reference_ranks = np.asarray(reference_ranks, dtype=float)
    ref_best = pick_best(reference_ranks, "min", ks)
    k_o = int(ks[ref_best])
    out = []
    for index, scores in index_scores.items():
        defined = np.array([s is not None for s in scores])
        if np.mean(~defined) > MAX_MISSING_FRACTION or not defined.any():
            log.info("%s/%s/%s: %d of %d scores undefined, cell skipped",
                     dataset_id, source, index, int((~defined).sum()), len(scores))
            continue
        vals = np.array([s for s in scores if s is not None], dtype=float)
        sub_ks = ks[defined]
        orientation = orientations[index]
        positions = np.flatnonzero(defined)
        hit = bool(positions[pick_best(vals, orientation, sub_ks)] == ref_best)
        rho_all, rho_under, rho_over, rng = region_correlations(
            reference_ranks[defined], vals, orientation, sub_ks, k_o)
        out.append(EvaluationRecord(dataset_id, scenario, source, index, hit, rho_all, rho_under, rho_over,
                                    rng, int(defined.sum()), dict(tags)))
    return out


def _tags(dataset: Dataset) -> dict:
    return dataset.meta.as_dict() if dataset.meta is not None else {}


def internal_scores(dataset: Dataset, partitions: Sequence[Partition], indexes: Iterable[str],
                    context: IndexContext | None = None) -> dict[str, list]:
    """Noise-adjusted scores per index (None where undefined)."""
    indexes = tuple(indexes)
    ctx = context or IndexContext(dataset)
    table: dict[str, list] = {i: [] for i in indexes}
    for p in partitions:
        scores = compute_many(indexes, dataset, p, ctx)
        for i in indexes:
            table[i].append(None if scores[i] is None else scores[i].adjusted)
    return table


def _orientations(indexes) -> dict[str, str]:
    return {i: INDEXES[i].orientation for i in indexes}


def _evaluate_reference(dataset, scenario, source, partitions, reference, spec, context) -> list[EvaluationRecord]:
    scores = internal_scores(dataset, partitions, spec.indexes, context)
    return evaluate_collection(dataset.id, scenario, source, partitions, reference, scores,
                               _orientations(spec.indexes), _tags(dataset))


# -------------------------------------------------------------- scenarios

def run_scenario1(datasets: Sequence[Dataset], spec: ScenarioSpec = ScenarioSpec(),
                  partitions: dict[str, dict[str, list[Partition]]] | None = None) -> ScenarioResult:
    """Varied k: one collection per (dataset, algorithm) with k = 2..k_max."""
    result = ScenarioResult()
    for ds in datasets:
        if partitions is not None:
            by_algo = partitions[ds.id]
        else:
            sweep = SweepSpec(k_max=compute_k_max(ds.truth.k_star), algorithms=spec.algorithms, seed=spec.seed)
            by_algo = sweep_varied_k(ds, sweep)
        ctx = IndexContext(ds)
        for algo, parts in by_algo.items():
            accepted, best = filter_collection(ds.truth.labels, parts)
            if not accepted:
                log.info("%s/%s rejected: max ARI %.3f", ds.id, algo, best)
                result.rejects.append(Reject(ds.id, 1, algo, "max ARI below 0.6", best))
                continue
            reference, _ = aggregate_external_ranks(ds.truth.labels, parts)
            result.records.extend(_evaluate_reference(ds, 1, algo, parts, reference, spec, ctx))
    return result


def scenario2_collections(dataset: Dataset, spec: ScenarioSpec = ScenarioSpec()) -> dict[int, list[Partition]]:
    """Deduplicated fixed-k partitions per target k."""
    from .clustering import run_agglomerative

    linkages = {a: run_agglomerative(dataset.points, a) for a in spec.algorithms if a != "kmeans"}
    out = {}
    for target in fixed_k_targets(dataset.truth.k_star, dataset.n):
        parts = fixed_k_partitions(dataset, target, spec.seed, spec.kmeans_runs, spec.algorithms, linkages)
        out[target] = dedupe_partitions(parts)
    return out


def _case(target: int, k_star: int) -> str:
    if target == k_star:
        return "k=k*"
    return "k<k*" if target < k_star else "k>k*"


def run_scenario2(datasets: Sequence[Dataset], spec: ScenarioSpec = ScenarioSpec(),
                  collections: dict[str, dict[int, list[Partition]]] | None = None) -> ScenarioResult:
    """Fixed k: one collection per (dataset, target k) pooling all algorithms."""
    result = ScenarioResult()
    for ds in datasets:
        by_target = collections[ds.id] if collections is not None else scenario2_collections(ds, spec)
        ctx = IndexContext(ds)
        for target, parts in sorted(by_target.items()):
            case = _case(target, ds.truth.k_star)
            unique = dedupe_partitions(parts)
            if len(unique) < MIN_FIXED_K_PARTITIONS:
                result.rejects.append(Reject(ds.id, 2, case, f"only {len(unique)} unique partitions at k={target}"))
                continue
            reference, _ = aggregate_external_ranks(ds.truth.labels, unique)
            result.records.extend(_evaluate_reference(ds, 2, case, unique, reference, spec, ctx))
    return result


def external_records(dataset: Dataset, ranked: RankedPartitionSet) -> list[EvaluationRecord]:
    """External index orderings vs a constructed reference ranking."""
    from .external import external_scores

    table = [external_scores(dataset.truth.labels, p) for p in ranked.partitions]
    scores = {i: [row[i] for row in table] for i in EXTERNAL_IDS}
    return evaluate_collection(dataset.id, 3, ranked.variant, ranked.partitions, ranked.reference_ranks, scores,
                               {i: "max" for i in EXTERNAL_IDS}, _tags(dataset))


def scenario3_sets(dataset: Dataset, spec: ScenarioSpec = ScenarioSpec()):
    """(variant -> RankedPartitionSet, list of rejects)."""
    sets, rejects = {}, []
    for variant in spec.variants:
        try:
            sets[variant] = build_ranked_set(dataset, variant, spec.runs)
        except ConstructionSkipped as exc:
            rejects.append(Reject(dataset.id, 3, variant, str(exc)))
        except ValueError as exc:
            rejects.append(Reject(dataset.id, 3, variant, f"not applicable: {exc}"))
    return sets, rejects


def run_scenario3(datasets: Sequence[Dataset], spec: ScenarioSpec = ScenarioSpec(),
                  ranked_sets: dict[str, dict[str, RankedPartitionSet]] | None = None) -> ScenarioResult:
    """Constructed rankings: internal indexes and external indexes against the known order."""
    result = ScenarioResult()
    for ds in datasets:
        if ranked_sets is not None:
            sets = ranked_sets.get(ds.id, {})
        else:
            sets, rejects = scenario3_sets(ds, spec)
            result.rejects.extend(rejects)
        ctx = IndexContext(ds)
        for variant, ranked in sets.items():
            result.records.extend(
                _evaluate_reference(ds, 3, variant, ranked.partitions, ranked.reference_ranks, spec, ctx))
            result.external_records.extend(external_records(ds, ranked))
    return result


# -------------------------------------------------------------- summaries

SUMMARY_COLUMNS = ("top_pick", "mean_rho_all", "median_rho_all", "mean_rho_under", "mean_rho_over", "mean_range")
_BETTER = {"top_pick": "max", "mean_rho_all": "max", "median_rho_all": "max", "mean_rho_under": "max",
           "mean_rho_over": "max", "mean_range": "min"}


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else None


def _median(xs):
    xs = [x for x in xs if x is not None]
    return float(np.median(xs)) if xs else None


def summarize(records: Sequence[EvaluationRecord]) -> dict[str, dict]:
    """Per-index aggregates; the result does not depend on record order."""
    by_index: dict[str, list[EvaluationRecord]] = {}
    for r in records:
        by_index.setdefault(r.index, []).append(r)
    out = {}
    for index in sorted(by_index):
        recs = by_index[index]
        out[index] = {
            "n": len(recs),
            "top_pick": 100.0 * float(np.mean([r.top_pick_hit for r in recs])),
            "mean_rho_all": _mean([r.rho_all for r in recs]),
            "median_rho_all": _median([r.rho_all for r in recs]),
            "mean_rho_under": _mean([r.rho_under for r in recs]),
            "mean_rho_over": _mean([r.rho_over for r in recs]),
            "mean_range": _mean([r.range for r in recs]),
        }
    return out


def rank_summary(summary: dict[str, dict]) -> dict[str, dict[str, float]]:
    """Average rank of each index per summary column (1 = best)."""
    from scipy.stats import rankdata

    ranks: dict[str, dict[str, float]] = {i: {} for i in summary}
    for col in SUMMARY_COLUMNS:
        present = [i for i in summary if summary[i][col] is not None]
        if not present:
            continue
        vals = np.array([summary[i][col] for i in present], dtype=float)
        r = rankdata(-vals if _BETTER[col] == "max" else vals, method="average")
        for i, v in zip(present, r):
            ranks[i][col] = float(v)
    return ranks


def _group_key(record: EvaluationRecord, by: str) -> str:
    if by == "all":
        return "all"
    if by == "source":
        return record.source
    return f"{by}={record.tags.get(by)}"


SUMMARY_GROUPS = ("all", "source", "k_star", "dimensions", "distribution", "compactness_level", "has_noise")


def summary_rows(records: Sequence[EvaluationRecord], groups: Sequence[str] = SUMMARY_GROUPS) -> list[dict]:
    """Table rows with each value followed by its rank among indexes, e.g. "0.690 (1)"."""
    rows = []
    for by in groups:
        buckets: dict[str, list[EvaluationRecord]] = {}
        for r in records:
            buckets.setdefault(_group_key(r, by), []).append(r)
        for key in sorted(buckets):
            summ = summarize(buckets[key])
            ranks = rank_summary(summ)
            for index, row in summ.items():
                out = {"group": key, "index": index, "n": row["n"]}
                for col in SUMMARY_COLUMNS:
                    v = row[col]
                    out[col] = "" if v is None else f"{v:.3f} ({_fmt_rank(ranks[index][col])})"
                rows.append(out)
    return rows


def _fmt_rank(r: float) -> str:
    return str(int(r)) if float(r).is_integer() else f"{r:.1f}"
