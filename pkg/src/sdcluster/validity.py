"""SD-SC (silhouette) and SD-DBI (Davies-Bouldin) indices and choice of K."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Optional

import numpy as np

from ._workers import parallel_map
from .bootstrap import BootstrapConfig
from .clustering import Clustering
from .coefficient_matrix import SDMatrix, build_matrix
from .errors import ConfigError, NumericalError, ZeroSeparationError
from .hierarchical import Dendrogram, build_dendrogram, sd_hierarchical
from .kmeans import DEFAULT_ITER_REPS, DEFAULT_MAX_ITER, kmeans_distance, sd_kmeans
from .market_data import ReturnPanel
from .seeding import derive_seed

logger = logging.getLogger(__name__)

ALGORITHMS = ("kmeans", "hierarchical")


@dataclass(frozen=True)
class ValidityReport:
    K: int
    sd_sc: float
    sd_dbi: Optional[float] = None
    per_point_silhouette: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "K": int(self.K),
            "sd_sc": float(self.sd_sc),
            "sd_dbi": None if self.sd_dbi is None else float(self.sd_dbi),
            "per_point_silhouette": {t: float(v) for t, v in self.per_point_silhouette.items()},
        }


def silhouette_values(dist: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-point silhouette ``(b - a) / max(a, b)`` over a precomputed distance matrix.

    Points alone in their cluster get 0, as do points with ``a = b = 0``.
    """
    labels = np.asarray(labels)
    ids = np.unique(labels)
    masks = [labels == k for k in ids]
    out = np.zeros(labels.size)
    for i in range(labels.size):
        own = labels[i]
        own_mask = masks[int(np.searchsorted(ids, own))]
        size = own_mask.sum()
        if size == 1:
            continue
        a = dist[i, own_mask].sum() / (size - 1)  # diagonal is zero
        b = min(dist[i, m].mean() for k, m in zip(ids, masks) if k != own)
        denom = max(a, b)
        out[i] = (b - a) / denom if denom > 0 else 0.0
    return out


def sd_sc(matrix: SDMatrix, clustering: Clustering) -> tuple[float, dict]:
    """SD silhouette coefficient and the per-asset values behind it."""
    if len(np.unique(clustering.labels)) < 2:
        raise ConfigError("SD-SC needs at least 2 nonempty clusters")
    dist = matrix.reindex(clustering.tickers)
    values = silhouette_values(dist, clustering.labels)
    return float(values.mean()), dict(zip(clustering.tickers, values.tolist()))


def davies_bouldin(compactness, separation) -> float:
    """``mean_i max_{k != i} (S_i + S_k) / M_ik``.

    Raises :class:`ZeroSeparationError` when some off-diagonal ``M_ik`` is 0.
    """
    S = np.asarray(compactness, dtype=float)
    M = np.asarray(separation, dtype=float)
    K = S.size
    if K < 2:
        raise ConfigError("SD-DBI needs at least 2 clusters")
    off = ~np.eye(K, dtype=bool)
    if np.any(M[off] <= 0):
        i, k = np.argwhere(off & (M <= 0))[0]
        raise ZeroSeparationError(f"clusters {i} and {k} have zero SD separation")
    R = np.where(off, (S[:, None] + S[None, :]) / np.where(off, M, 1.0), -np.inf)
    return float(R.max(axis=1).mean())


def _coefficient_job(job, cfg: BootstrapConfig) -> float:
    seed, x, y = job
    return kmeans_distance(x, y, cfg.replace(seed=seed))


def sd_dbi(panel: ReturnPanel, clustering: Clustering, cfg: BootstrapConfig, workers: int = 1) -> float:
    """SD Davies-Bouldin index with member-mean centers.

    Compactness of cluster i is the mean SD coefficient between its members
    and its center; separation is the coefficient between two centers. All
    of these are fresh bootstrap tests, since centers are not panel columns.
    """
    clustering = clustering.with_centers(panel)
    K = clustering.K
    if K < 2:
        raise ConfigError("SD-DBI needs at least 2 clusters")
    centers = clustering.centers
    member_jobs = [
        (derive_seed(cfg.seed, "dbi-member", t), panel.column(t), centers[k])
        for t, k in zip(clustering.tickers, clustering.labels)
    ]
    pairs = [(i, k) for i in range(K) for k in range(i + 1, K)]
    center_jobs = [(derive_seed(cfg.seed, "dbi-center", i, k), centers[i], centers[k]) for i, k in pairs]
    coeffs = parallel_map(partial(_coefficient_job, cfg=cfg), member_jobs + center_jobs, workers)
    member = np.array(coeffs[: len(member_jobs)])
    S = np.array([member[clustering.labels == k].mean() for k in range(K)])
    M = np.zeros((K, K))
    for (i, k), c in zip(pairs, coeffs[len(member_jobs):]):
        M[i, k] = M[k, i] = c
    return davies_bouldin(S, M)


@dataclass
class SelectKResult:
    best_k: int
    reports: list[ValidityReport]
    clusterings: dict[int, Clustering]
    matrix: SDMatrix
    dendrogram: Optional[Dendrogram] = None

    def report_for(self, K: int) -> ValidityReport:
        return next(r for r in self.reports if r.K == K)


def select_k(
    panel: ReturnPanel,
    algorithm: str,
    k_range: tuple[int, int],
    cfg: BootstrapConfig,
    matrix: Optional[SDMatrix] = None,
    seed: Optional[int] = None,
    max_iter: int = DEFAULT_MAX_ITER,
    iter_reps: Optional[int] = DEFAULT_ITER_REPS,
    with_dbi: bool = True,
    workers: int = 1,
) -> SelectKResult:
    """Cluster for every K in ``k_range`` and keep the K with the largest SD-SC.

    Ties (within 1e-12) go to the smallest K. ``matrix`` is built from
    ``panel`` when not supplied; SD-SC always uses it.
    """
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    k_min, k_max = k_range
    n = panel.n_assets
    if not 2 <= k_min <= k_max <= n:
        raise ConfigError(f"need 2 <= K_min <= K_max <= {n}, got [{k_min}, {k_max}]")
    if matrix is None:
        matrix = build_matrix(panel, cfg, workers)
    dendrogram = build_dendrogram(matrix.reindex(panel.tickers), panel.tickers) if algorithm == "hierarchical" else None

    reports: list[ValidityReport] = []
    clusterings: dict[int, Clustering] = {}
    for K in range(k_min, k_max + 1):
        if algorithm == "kmeans":
            clustering = sd_kmeans(panel, K, cfg, max_iter=max_iter, seed=seed, iter_reps=iter_reps, workers=workers)
        else:
            clustering, _ = sd_hierarchical(matrix.subset(panel.tickers), K, panel, dendrogram)
        score, per_point = sd_sc(matrix, clustering)
        dbi = None
        if with_dbi:
            try:
                dbi = sd_dbi(panel, clustering, cfg, workers)
            except NumericalError as exc:
                logger.warning("SD-DBI undefined for K=%d: %s", K, exc)
        clusterings[K] = clustering
        reports.append(ValidityReport(K, score, dbi, per_point))
        logger.info("K=%d SD-SC=%.4f SD-DBI=%s", K, score, dbi)

    best = reports[0]
    for report in reports[1:]:
        if report.sd_sc > best.sd_sc + 1e-12:
            best = report
    return SelectKResult(best.K, reports, clusterings, matrix, dendrogram)


def write_select_k_csv(result: SelectKResult, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["K", "sd_sc", "sd_dbi"])
        for r in result.reports:
            writer.writerow([r.K, repr(r.sd_sc), "" if r.sd_dbi is None else repr(r.sd_dbi)])
