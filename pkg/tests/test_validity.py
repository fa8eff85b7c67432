from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import silhouette_samples

from sdcluster.bootstrap import BootstrapConfig
from sdcluster.clustering import Clustering
from sdcluster.coefficient_matrix import SDMatrix
from sdcluster.errors import ConfigError, ZeroSeparationError
from sdcluster.market_data import panel_from_arrays
from sdcluster.validity import davies_bouldin, sd_dbi, sd_sc, select_k, silhouette_values, write_select_k_csv

CFG = BootstrapConfig(reps=100, seed=5)


def matrix_of(values, prefix="T"):
    values = np.asarray(values, dtype=float)
    return SDMatrix(tuple(f"{prefix}{i}" for i in range(len(values))), 1, "asc", values)


def block_values(sizes, intra=0.1, inter=0.9):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    v = np.where(labels[:, None] == labels[None, :], intra, inter)
    np.fill_diagonal(v, 0.0)
    return v, labels


def brute_silhouette(d, labels):
    out = []
    for i in range(len(labels)):
        same = [k for k in range(len(labels)) if labels[k] == labels[i] and k != i]
        if not same:
            out.append(0.0)
            continue
        a = sum(d[i][k] for k in same) / len(same)
        b = min(
            sum(d[i][k] for k in range(len(labels)) if labels[k] == c) / sum(1 for lab in labels if lab == c)
            for c in set(labels) if c != labels[i]
        )
        out.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return out


def test_perfect_separation():
    v, labels = block_values([2, 2], intra=0.0, inter=1.0)
    m = matrix_of(v)
    score, per_point = sd_sc(m, Clustering(m.tickers, labels, 2))
    assert score == 1.0 and set(per_point.values()) == {1.0}


def test_indifference():
    v = np.full((4, 4), 0.5)
    np.fill_diagonal(v, 0)
    m = matrix_of(v)
    score, _ = sd_sc(m, Clustering(m.tickers, [0, 0, 1, 1], 2))
    assert score == 0.0


def test_hand_built_two_thirds():
    v, labels = block_values([2, 2], intra=0.2, inter=0.6)
    m = matrix_of(v)
    score, _ = sd_sc(m, Clustering(m.tickers, labels, 2))
    assert score == pytest.approx(0.4 / 0.6, abs=1e-12)


def test_singleton_gets_zero():
    v, _ = block_values([2, 1])
    m = matrix_of(v)
    _, per_point = sd_sc(m, Clustering(m.tickers, [0, 0, 1], 2))
    assert per_point["T2"] == 0.0


def test_needs_two_clusters():
    m = matrix_of(block_values([3])[0])
    with pytest.raises(ConfigError):
        sd_sc(m, Clustering(m.tickers, [0, 0, 0], 1))


@settings(max_examples=40)
@given(st.integers(3, 9), st.integers(0, 10_000), st.integers(2, 4))
def test_silhouette_matches_oracles(n, seed, K):
    rng = np.random.default_rng(seed)
    d = rng.uniform(size=(n, n))
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0)
    labels = rng.integers(0, K, size=n)
    if len(np.unique(labels)) < 2:
        return
    got = silhouette_values(d, labels)
    np.testing.assert_allclose(got, brute_silhouette(d.tolist(), labels.tolist()), atol=1e-12)
    if len(np.unique(labels)) < n:  # sklearn rejects all-singleton labelings
        np.testing.assert_allclose(got, silhouette_samples(d, labels, metric="precomputed"), atol=1e-12)
    assert np.all((got >= -1) & (got <= 1))


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.permutations(range(6)))
def test_sd_sc_relabel_and_reorder(seed, perm):
    rng = np.random.default_rng(seed)
    d = rng.uniform(size=(6, 6))
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0)
    m = matrix_of(d)
    labels = np.array([0, 0, 1, 1, 2, 2])
    base, _ = sd_sc(m, Clustering(m.tickers, labels, 3))
    relabeled, _ = sd_sc(m, Clustering(m.tickers, (labels + 1) % 3, 3))
    tick = [m.tickers[i] for i in perm]
    reordered, _ = sd_sc(m, Clustering(tick, labels[list(perm)], 3))
    assert relabeled == pytest.approx(base, abs=1e-12)
    assert reordered == pytest.approx(base, abs=1e-12)


def test_davies_bouldin_examples():
    assert davies_bouldin([0.0, 0.0], [[0, 0.5], [0.5, 0]]) == 0.0
    assert davies_bouldin([0.1, 0.1], [[0, 0.5], [0.5, 0]]) == pytest.approx(0.4)
    with pytest.raises(ZeroSeparationError):
        davies_bouldin([0.1, 0.1], [[0, 0.0], [0.0, 0]])


def test_davies_bouldin_three_clusters():
    S = [0.1, 0.2, 0.3]
    M = [[0, 0.5, 1.0], [0.5, 0, 0.25], [1.0, 0.25, 0]]
    # R rows: max(0.6, 0.4)=0.6, max(0.6, 2.0)=2.0, max(0.4, 2.0)=2.0
    assert davies_bouldin(S, M) == pytest.approx((0.6 + 2.0 + 2.0) / 3)


def test_sd_dbi_on_panel(small_panel):
    clustering = Clustering(small_panel.tickers, [0, 0, 1, 1], 2)
    value = sd_dbi(small_panel, clustering, CFG)
    assert value >= 0.0
    assert value == sd_dbi(small_panel, clustering, CFG)


def test_sd_dbi_identical_centers():
    x = np.random.default_rng(3).normal(size=30)
    panel = panel_from_arrays(np.column_stack([x, x]), ["A", "B"])
    with pytest.raises(ZeroSeparationError):
        sd_dbi(panel, Clustering(panel.tickers, [0, 1], 2), CFG)


def noise_panel(n, seed=0):
    return panel_from_arrays(np.random.default_rng(seed).normal(size=(20, n)), [f"T{i}" for i in range(n)])


def test_select_k_two_blocks():
    v, _ = block_values([3, 3])
    panel = noise_panel(6)
    result = select_k(panel, "hierarchical", (2, 4), CFG, matrix=matrix_of(v), with_dbi=False)
    assert result.best_k == 2
    scores = [r.sd_sc for r in result.reports]
    assert scores[0] > max(scores[1:])


@pytest.mark.parametrize("blocks", [[2, 2, 2], [3, 2, 3], [2, 2, 2, 2]])
def test_true_k_wins_on_block_matrix(blocks):
    v, _ = block_values(blocks, intra=0.2, inter=0.8)
    n = len(v)
    true_k = len(blocks)
    panel = noise_panel(n)
    result = select_k(panel, "hierarchical", (2, min(2 * true_k, n)), CFG, matrix=matrix_of(v), with_dbi=False)
    assert result.best_k == true_k


def test_select_k_single_candidate():
    v, _ = block_values([2, 2])
    result = select_k(noise_panel(4), "hierarchical", (2, 2), CFG, matrix=matrix_of(v), with_dbi=False)
    assert result.best_k == 2 and [r.K for r in result.reports] == [2]


def test_select_k_ties_pick_smallest():
    v = np.full((5, 5), 0.4)
    np.fill_diagonal(v, 0)
    result = select_k(noise_panel(5), "hierarchical", (2, 4), CFG, matrix=matrix_of(v), with_dbi=False)
    assert result.best_k == 2
    assert all(abs(r.sd_sc) < 1e-12 for r in result.reports)


@pytest.mark.parametrize("k_range", [(1, 3), (3, 2), (2, 7)])
def test_select_k_range_checked(k_range):
    with pytest.raises(ConfigError):
        select_k(noise_panel(6), "hierarchical", k_range, CFG, matrix=matrix_of(block_values([3, 3])[0]))


def test_select_k_algorithm_checked():
    with pytest.raises(ConfigError):
        select_k(noise_panel(4), "dbscan", (2, 3), CFG)


def test_select_k_kmeans_with_dbi(tmp_path, small_panel):
    result = select_k(small_panel, "kmeans", (2, 3), CFG)
    assert result.best_k == 2
    assert result.clusterings[2].partition() == {frozenset({"AAA", "BBB"}), frozenset({"CCC", "DDD"})}
    for r in result.reports:
        assert r.sd_dbi is None or r.sd_dbi >= 0
        assert r.sd_sc == pytest.approx(np.mean(list(r.per_point_silhouette.values())))
    write_select_k_csv(result, tmp_path / "k.csv")
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "K,sd_sc,sd_dbi" and len(lines) == 3
