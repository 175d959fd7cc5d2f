import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvbench.clustering import fixed_k_targets
from cvbench.core import Partition
from cvbench.datagen import GenConfig, generate_dataset
from cvbench.evaluation import (EvaluationRecord, ScenarioSpec, evaluate_collection, external_records,
                                filter_collection, pick_best, region_correlations, run_scenario1, run_scenario2,
                                run_scenario3, scenario2_collections, summarize, summary_rows, top_pick_agreement)
from cvbench.external import external_score
from cvbench.supervised import procedure1_varied


def _parts(labelings):
    return [Partition.from_labels(lab) for lab in labelings]


def test_filter_examples():
    truth = np.repeat([0, 1, 2], 20)
    ok, best = filter_collection(truth, _parts([truth, np.zeros(60, int)]))
    assert ok and best == 1.0
    rng = np.random.default_rng(0)
    ok, best = filter_collection(np.repeat(np.arange(5), 200), _parts([rng.integers(0, 5, 1000) for _ in range(5)]))
    assert not ok and best < 0.05


def test_filter_boundary_is_inclusive():
    truth = [1, 1, 3, 1, 2, 2, 0, 0, 3]
    cand = [1, 1, 3, 2, 2, 2, 0, 0, 3]
    assert external_score("ari", truth, cand) == 0.6
    assert filter_collection(truth, _parts([cand]))[0]
    assert not filter_collection(truth, _parts([[0, 0, 0, 0, 1, 1, 1, 1, 1]]))[0]


def test_top_pick_identity():
    ref = np.array([3.0, 1.0, 2.0, 5.0, 4.0])
    ks = [2, 3, 4, 5, 6]
    assert top_pick_agreement(ref, -ref, "max", ks)
    assert top_pick_agreement(ref, ref, "min", ks)


def test_top_pick_tie_rule():
    ks = [4, 2, 3]
    # constant index: the tie-break picks the lowest k (position 1)
    assert pick_best([1.0, 1.0, 1.0], "max", ks) == 1
    assert not top_pick_agreement([2.0, 3.0, 1.0], [0.5, 0.5, 0.5], "max", ks)
    assert top_pick_agreement([2.0, 1.0, 3.0], [0.5, 0.5, 0.5], "max", ks)
    # equal k: lowest position wins
    assert pick_best([0.0, 0.0], "min", [3, 3]) == 0


def test_region_examples():
    ref = np.arange(1, 9, dtype=float)
    ks = [2, 3, 4, 5, 6, 7, 8, 9]
    # reference best is at k=2, so nothing lies below it
    assert region_correlations(ref, -ref, "max", ks) == (1.0, None, 1.0, 0.0)
    ref = np.array([4, 3, 2, 1, 2.5, 3.5, 4.5, 5.5]) * 2
    ref = np.argsort(np.argsort(ref)) + 1.0
    assert region_correlations(ref, -ref, "max", ks) == (1.0, 1.0, 1.0, 0.0)
    assert region_correlations(ref, ref, "max", ks) == (-1.0, -1.0, -1.0, 0.0)


def test_monotone_index_under_over_pattern():
    # reference peaks at k=5, index grows with k
    ks = np.arange(2, 11)
    ref = np.abs(ks - 5) + 1.0 + 0.01 * ks
    rho_all, under, over, rng_ = region_correlations(ref, ks.astype(float), "max", ks)
    assert under > 0 and over < 0 and rng_ == pytest.approx(under - over)


def test_region_needs_three_points():
    ks = [2, 3, 4, 5, 6, 7]
    ref = np.array([2.0, 1.0, 3.0, 4.0, 5.0, 6.0])
    _, under, over, _ = region_correlations(ref, -ref, "max", ks)
    assert under is None and over == 1.0


def test_constant_index_correlation_missing():
    ks = [2, 3, 4, 5]
    rho_all, _, _, rng_ = region_correlations([1.0, 2.0, 3.0, 4.0], [0.3] * 4, "max", ks)
    assert rho_all is None and rng_ == 0.0


def test_missing_scores_rule():
    parts = _parts([[0, 1, 1, 1], [0, 1, 2, 2], [0, 0, 1, 1], [0, 1, 2, 3], [0, 0, 0, 1]])
    ref = [1, 2, 3, 4, 5]
    one_missing = [0.9, 0.8, None, 0.6, 0.5]
    two_missing = [0.9, None, None, 0.6, 0.5]
    recs = evaluate_collection("d", 1, "x", parts, ref, {"a": one_missing, "b": two_missing},
                               {"a": "max", "b": "max"}, {})
    assert [r.index for r in recs] == ["a"]
    assert recs[0].n_partitions == 4 and recs[0].rho_all == 1.0 and recs[0].top_pick_hit


def test_record_rejects_bad_rho():
    with pytest.raises(ValueError):
        EvaluationRecord("d", 1, "s", "i", True, 1.5, None, None, 0.0, 3)


@pytest.mark.parametrize("k_star, n", [(2, 10), (3, 50), (10, 200), (50, 60)])
def test_scenario2_targets_unique_and_at_least_two(k_star, n):
    t = fixed_k_targets(k_star, n)
    assert len(t) == len(set(t)) and min(t) >= 2 and t[0] == k_star
    assert fixed_k_targets(3, 500)[1] == 2


@pytest.fixture(scope="module")
def easy():
    return [generate_dataset(GenConfig(3, 2, "gaussian", "balanced", 0.1, cluster_size_range=(25, 30), seed=s),
                             f"e{s}") for s in range(3)]


def test_scenario1_easy_silhouette():
    datasets = [generate_dataset(GenConfig(k, d, "gaussian", "balanced", 0.1, cluster_size_range=(20, 40), seed=s),
                                 f"e{s}{k}{d}") for s in range(2) for k in (6, 8) for d in (2, 4)]
    spec = ScenarioSpec(indexes=("silhouette", "vrc"), algorithms=("kmeans", "ward"))
    res = run_scenario1(datasets, spec)
    assert len(res.records) == 2 * (2 * len(datasets) - len(res.rejects))
    assert summarize(res.records)["silhouette"]["mean_rho_all"] > 0.6


def test_scenario1_easy_top_pick(easy):
    res = run_scenario1(easy, ScenarioSpec(indexes=("silhouette",), algorithms=("kmeans", "ward")))
    assert summarize(res.records)["silhouette"]["top_pick"] == 100.0


def test_scenario1_truth_plus_corruptions():
    ds = generate_dataset(GenConfig(4, 2, cluster_size_range=(25, 25), seed=9), "t")
    rng = np.random.default_rng(0)
    truth = ds.truth.labels
    parts = [Partition.from_labels(truth, "truth")]
    for k in range(2, 8):
        lab = truth.copy()
        flip = rng.random(lab.size) < 0.05 * k
        lab[flip] = rng.integers(0, k, flip.sum())
        parts.append(Partition.from_labels(lab, f"c{k}"))
    res = run_scenario1([ds], ScenarioSpec(indexes=("silhouette",)), {"t": {"mix": parts}})
    assert res.records[0].top_pick_hit


def test_scenario2_cases_and_dedupe(easy):
    spec = ScenarioSpec(indexes=("silhouette",), kmeans_runs=4)
    cols = scenario2_collections(easy[0], spec)
    assert sorted(cols) == [2, 3, 4]
    for parts in cols.values():
        forms = {tuple(p.labels.tolist()) for p in parts}
        assert len(forms) == len(parts)
    res = run_scenario2(easy[:1], spec)
    assert {r.source for r in res.records} | {r.source for r in res.rejects} <= {"k=k*", "k<k*", "k>k*"}
    assert any("unique partitions" in r.reason for r in res.rejects) or res.records


def test_scenario3_external_and_oracle():
    ds = generate_dataset(GenConfig(8, 2, "gaussian", "balanced", 0.1, cluster_size_range=(30, 40), seed=3), "g")
    rs = procedure1_varied(ds)
    ext = external_records(ds, rs)
    assert {r.index for r in ext} == {"jaccard", "ss3", "ari", "nmi", "nid"}
    assert all(r.rho_all == 1.0 and r.top_pick_hit for r in ext)
    res = run_scenario3([ds], ScenarioSpec(indexes=("silhouette", "dunn"), variants=("p1_varied",)),
                        {"g": {"p1_varied": rs}})
    assert len(res.records) == 2 and len(res.external_records) == 5


def test_scenario3_skips_are_recorded():
    ds = generate_dataset(GenConfig(4, 3, "gaussian", "balanced", 0.1, cluster_size_range=(30, 40), seed=3), "s")
    res = run_scenario3([ds], ScenarioSpec(indexes=("silhouette",)))
    reasons = {r.source: r.reason for r in res.rejects}
    assert "p1_varied" in reasons and "p1_fixed" in reasons


def _random_records(seed, n=30):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        for index in ("a", "b", "c"):
            rho = lambda: None if rng.random() < 0.2 else float(rng.uniform(-1, 1))  # noqa: E731
            out.append(EvaluationRecord(f"d{i}", 1, "kmeans", index, bool(rng.random() < 0.5), rho(), rho(), rho(),
                                        float(rng.uniform(0, 2)), 10, {"k_star": int(rng.integers(2, 5))}))
    return out


@settings(max_examples=20)
@given(st.integers(0, 1000), st.randoms())
def test_summaries_order_invariant(seed, rnd: random.Random):
    recs = _random_records(seed)
    shuffled = recs[:]
    rnd.shuffle(shuffled)
    assert summary_rows(recs) == summary_rows(shuffled)


def test_monotone_transform_leaves_records_unchanged():
    parts = _parts([[0, 1, 1, 1, 1, 1], [0, 1, 2, 2, 2, 2], [0, 0, 1, 1, 2, 3], [0, 1, 2, 3, 4, 4],
                    [0, 0, 0, 1, 1, 1], [0, 1, 0, 1, 2, 2]])
    ref = [3, 1, 2, 6, 4, 5]
    scores = [0.1, 0.9, 0.5, -0.2, 0.3, 0.35]
    a = evaluate_collection("d", 1, "s", parts, ref, {"i": scores}, {"i": "max"}, {})
    b = evaluate_collection("d", 1, "s", parts, ref, {"i": [np.exp(5 * s) for s in scores]}, {"i": "max"}, {})
    assert a == b


def test_summary_rank_format():
    recs = _random_records(1)
    rows = summary_rows(recs, ("all",))
    assert len(rows) == 3 and all("(" in r["mean_rho_all"] for r in rows)
