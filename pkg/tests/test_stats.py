import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps
from scipy.stats import rankdata

from cvbench.evaluation import EvaluationRecord
from cvbench.stats import (bonferroni, kruskal_wallis, property_association, spearman, spearman_rho,
                           spearman_test, wilcoxon, wilcoxon_pairwise)

small_ints = st.lists(st.integers(-20, 20), min_size=3, max_size=8)


def test_spearman_examples():
    assert spearman_rho([1, 2, 3], [1, 2, 3]) == 1.0
    assert spearman_rho([1, 2, 3], [3, 2, 1]) == -1.0
    assert spearman_rho([1, 2, 2, 4], [1, 3, 2, 4]) == pytest.approx(4.5 / math.sqrt(22.5), abs=1e-12)
    assert spearman_rho([1, 1, 1], [1, 2, 3]) is None
    assert spearman([1, 1, 1], [1, 2, 3]) is None
    with pytest.raises(ValueError):
        spearman([1, 2], [1, 2])


def _exhaustive_p(x, y):
    rx, ry = rankdata(x), rankdata(y)
    rho = np.corrcoef(rx, ry)[0, 1]
    perms = np.array(list(itertools.permutations(ry)))
    a = (rx - rx.mean()) / np.linalg.norm(rx - rx.mean())
    b = perms - perms.mean(axis=1, keepdims=True)
    r = (b @ a) / np.linalg.norm(b, axis=1)
    return float(np.mean(np.abs(r) >= abs(rho) - 1e-12))


@settings(max_examples=40)
@given(st.data())
def test_spearman_exact_p_matches_enumeration(data):
    x = data.draw(small_ints)
    y = data.draw(st.lists(st.integers(-20, 20), min_size=len(x), max_size=len(x)))
    out = spearman(x, y)
    if out is None:
        return
    assert out[1] == pytest.approx(_exhaustive_p(x, y), abs=1e-12)


def test_spearman_t_approximation_matches_scipy(rng):
    x, y = rng.normal(size=30), rng.normal(size=30)
    rho, p = spearman(x, y)
    ref = sps.spearmanr(x, y)
    assert rho == pytest.approx(ref.statistic, abs=1e-12) and p == pytest.approx(ref.pvalue, rel=1e-9)
    assert spearman_test(x, y).method == "spearman-t"
    assert spearman_test(x[:6], y[:6]).method == "spearman-exact"


@settings(max_examples=50)
@given(st.data())
def test_spearman_symmetric_and_rank_invariant(data):
    x = np.array(data.draw(st.lists(st.integers(-50, 50), min_size=3, max_size=25)), dtype=float)
    y = np.array(data.draw(st.lists(st.integers(-50, 50), min_size=x.size, max_size=x.size)), dtype=float)
    r = spearman_rho(x, y)
    assert spearman_rho(y, x) == r
    t = spearman_rho(x**3 + 4 * x, np.exp(y / 10))
    assert (r is None and t is None) or t == pytest.approx(r, abs=1e-12)


def test_wilcoxon_identical_samples():
    res = wilcoxon_pairwise({"a": [0.1, 0.2, 0.3], "b": [0.1, 0.2, 0.3]})
    assert res[("a", "b")].adjusted_p == 1.0 and not res[("a", "b")].significant


def test_wilcoxon_shifted_sample():
    x = np.linspace(0, 1, 20)
    r = wilcoxon(x + 5, x)
    assert r.p_value < 0.05 and r.method == "wilcoxon-normal"


def test_wilcoxon_exact_matches_enumeration():
    x = np.array([1.8, 0.3, 2.4, -0.7, 1.1, 0.9, -0.2, 3.1])
    y = np.zeros(8)
    d = x - y
    ranks = rankdata(np.abs(d))
    w_obs = ranks[d > 0].sum()
    mean = ranks.sum() / 2
    extreme = 0
    for signs in itertools.product((0, 1), repeat=8):
        w = ranks[np.array(signs, dtype=bool)].sum()
        extreme += abs(w - mean) >= abs(w_obs - mean) - 1e-12
    r = wilcoxon(x, y)
    assert r.method == "wilcoxon-exact"
    assert r.p_value == pytest.approx(extreme / 256, abs=1e-15)
    assert r.statistic == min(w_obs, ranks.sum() - w_obs)


@settings(max_examples=40)
@given(st.lists(st.integers(-6, 6), min_size=1, max_size=15))
def test_wilcoxon_exact_matches_scipy(diffs):
    d = np.array(diffs, dtype=float)
    if not np.any(d != 0):
        assert wilcoxon(d, np.zeros_like(d)).p_value == 1.0
        return
    ours = wilcoxon(d, np.zeros_like(d))
    nz = d[d != 0]
    if np.unique(np.abs(nz)).size == nz.size:
        ref = sps.wilcoxon(nz, method="exact")
        assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-12)
    assert 0 < ours.p_value <= 1


def test_wilcoxon_normal_matches_scipy(rng):
    d = np.round(rng.normal(0.3, 1, size=40), 1)
    ours = wilcoxon(d, np.zeros_like(d))
    ref = sps.wilcoxon(d, zero_method="wilcox", correction=True, method="approx")
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_bonferroni_pairs():
    rng = np.random.default_rng(3)
    samples = {c: rng.normal(size=12) for c in "abcd"}
    res = wilcoxon_pairwise(samples)
    assert len(res) == 6
    for r in res.values():
        assert r.adjusted_p == min(1.0, 6 * r.p_value) >= r.p_value
    assert bonferroni(0.3, 5) == 1.0
    with pytest.raises(ValueError):
        wilcoxon_pairwise({"a": [1, 2], "b": [1]})


def test_kruskal_examples():
    r = kruskal_wallis([[1, 2, 3], [1, 2, 3]])
    assert r.statistic == pytest.approx(0.0, abs=1e-12) and r.p_value == pytest.approx(1.0)
    r = kruskal_wallis([[1, 2, 3], [101, 102, 103]])
    # complete separation: rank sums 6 and 15
    assert r.statistic == pytest.approx(12 / 42 * (36 / 3 + 225 / 3) - 21)
    assert r.p_value < 0.05


def test_kruskal_hand_oracle():
    groups = [[2.1, 3.4, 1.9], [5.5, 4.2, 6.1, 3.4], [0.7, 8.8]]
    pooled = np.concatenate(groups)
    n = pooled.size
    ranks = rankdata(pooled)
    sums, i = [], 0
    for g in groups:
        sums.append(ranks[i:i + len(g)].sum())
        i += len(g)
    h = 12 / (n * (n + 1)) * sum(s**2 / len(g) for s, g in zip(sums, groups)) - 3 * (n + 1)
    _, t = np.unique(pooled, return_counts=True)
    h /= 1 - np.sum(t**3 - t) / (n**3 - n)
    r = kruskal_wallis(groups)
    assert r.statistic == pytest.approx(h, abs=1e-12)
    assert r.statistic == pytest.approx(sps.kruskal(*groups).statistic, abs=1e-12)
    assert r.p_value == pytest.approx(sps.kruskal(*groups).pvalue, abs=1e-12)


def test_kruskal_transform_invariant(rng):
    groups = [rng.normal(size=5), rng.normal(1, size=6), rng.normal(2, size=4)]
    a = kruskal_wallis(groups).statistic
    b = kruskal_wallis([np.exp(g) for g in groups]).statistic
    assert a == pytest.approx(b, abs=1e-12)
    with pytest.raises(ValueError):
        kruskal_wallis([[1.0]])


def _rec(i, rho, **tags):
    return EvaluationRecord(f"d{i}", 1, "kmeans", "idx", True, rho, None, None, 0.0, 5, tags)


def test_property_rigged_overlap():
    overlaps = np.linspace(0.0, 0.1, 12)
    recs = [_rec(i, float(o), overlap=float(o), k_star=4, has_noise=i % 2 == 0, compactness_level="compact")
            for i, o in enumerate(overlaps)]
    res = property_association(recs, "overlap")["idx"]
    assert res.statistic == 1.0 and res.significant
    assert property_association(recs, "k_star")["idx"] is None
    assert property_association(recs, "compactness")["idx"] is None
    assert property_association(recs, "noise")["idx"].method == "kruskal-wallis"
    with pytest.raises(ValueError):
        property_association(recs, "colour")
