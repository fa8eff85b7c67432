"""Agglomerative average-linkage clustering on a precomputed SD coefficient matrix."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .clustering import Clustering
from .coefficient_matrix import SDMatrix
from .errors import ConfigError, DataError
from .market_data import ReturnPanel

# Linkage values this close to the minimum count as tied.
TIE_TOL = 1e-12


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Full merge history. Leaves are ``0..n-1``; merge ``s`` creates id ``n + s``."""

    tickers: tuple[str, ...]
    merges: tuple[Merge, ...]

    @property
    def n(self) -> int:
        return len(self.tickers)

    def cut(self, K: int) -> np.ndarray:
        """Labels after applying the first ``n - K`` merges.

        Clusters are numbered by their lowest leaf index.
        """
        n = self.n
        if not 1 <= K <= n:
            raise ConfigError(f"K must lie in [1, {n}], got {K}")
        parent = list(range(n))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        leaf_of = list(range(n))  # any leaf inside each node id
        for merge in self.merges[: n - K]:
            a, b = find(leaf_of[merge.left]), find(leaf_of[merge.right])
            parent[max(a, b)] = min(a, b)
            leaf_of.append(min(a, b))
        roots = [find(i) for i in range(n)]
        numbering = {r: k for k, r in enumerate(sorted(set(roots)))}
        return np.array([numbering[r] for r in roots], dtype=int)

    def to_dict(self) -> dict:
        return {
            "tickers": list(self.tickers),
            "merges": [[m.left, m.right, m.height, m.size] for m in self.merges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Dendrogram":
        merges = tuple(Merge(int(a), int(b), float(h), int(s)) for a, b, h, s in data["merges"])
        return cls(tuple(data["tickers"]), merges)


def average_linkage(dist, A: Sequence[int], B: Sequence[int]) -> float:
    """Mean of all |A|·|B| cross-cluster entries of ``dist``."""
    values = dist.values if isinstance(dist, SDMatrix) else np.asarray(dist, dtype=float)
    A, B = list(A), list(B)
    if not A or not B:
        raise DataError("clusters must be nonempty")
    if set(A) & set(B):
        raise DataError("clusters must be disjoint")
    return float(values[np.ix_(A, B)].mean())


def build_dendrogram(values: np.ndarray, tickers: Sequence[str]) -> Dendrogram:
    """Merge the closest pair of clusters until one remains.

    Linkages are maintained with the Lance-Williams recurrence for average
    linkage, ``d(A∪B, C) = (|A| d(A,C) + |B| d(B,C)) / (|A| + |B|)``. Ties
    go to the pair whose (smaller, larger) representative tickers sort
    first, a cluster's representative being its smallest ticker.
    """
    tickers = tuple(tickers)
    n = len(tickers)
    dist = np.array(values, dtype=float, copy=True)
    np.fill_diagonal(dist, np.inf)
    active = list(range(n))  # slots still holding a cluster
    node = list(range(n))  # dendrogram id held by each slot
    size = [1] * n
    rep = list(tickers)
    merges: list[Merge] = []
    for step in range(n - 1):
        act = np.array(active)
        sub = dist[np.ix_(act, act)]
        iu = np.triu_indices(len(act), k=1)
        flat = sub[iu]
        best = flat.min()
        tied = np.flatnonzero(flat <= best + TIE_TOL)
        pairs = [(act[iu[0][t]], act[iu[1][t]]) for t in tied]
        a, b = min(pairs, key=lambda p: tuple(sorted((rep[p[0]], rep[p[1]]))))
        height = float(dist[a, b])
        sa, sb = size[a], size[b]
        merged = (sa * dist[a, :] + sb * dist[b, :]) / (sa + sb)
        dist[a, :] = merged
        dist[:, a] = merged
        dist[a, a] = np.inf
        dist[b, :] = np.inf
        dist[:, b] = np.inf
        left, right = sorted((node[a], node[b]))
        merges.append(Merge(left, right, height, sa + sb))
        node[a] = n + step
        size[a] = sa + sb
        rep[a] = min(rep[a], rep[b])
        active.remove(b)
    return Dendrogram(tickers, tuple(merges))


def sd_hierarchical(
    matrix: SDMatrix,
    K: int,
    panel: Optional[ReturnPanel] = None,
    dendrogram: Optional[Dendrogram] = None,
) -> tuple[Clustering, Dendrogram]:
    """Average-linkage clustering of ``matrix`` stopped at ``K`` clusters.

    The full dendrogram is returned alongside the K-cut; pass a previously
    built ``dendrogram`` to skip rebuilding it. Centers are filled in when
    ``panel`` is given.
    """
    n = matrix.n
    if not 1 <= K <= n:
        raise ConfigError(f"K must lie in [1, {n}], got {K}")
    if dendrogram is None:
        dendrogram = build_dendrogram(matrix.values, matrix.tickers)
    labels = dendrogram.cut(K)
    clustering = Clustering(matrix.tickers, labels, K, None, n - K, True)
    if panel is not None:
        clustering = clustering.with_centers(panel)
    return clustering, dendrogram


def write_dendrogram(dendrogram: Dendrogram, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dendrogram.to_dict(), indent=2) + "\n", encoding="utf-8")
