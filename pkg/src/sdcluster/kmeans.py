"""K-means with the SD coefficient as point-to-center distance.

Centers are the equally weighted mean return series of their members, so
every distance evaluation is a fresh bootstrap test between a stock and a
derived series.
"""

from __future__ import annotations

import logging
from functools import partial
from typing import Optional

import numpy as np

from ._workers import parallel_map
from .bootstrap import BootstrapConfig, pair_test
from .clustering import Clustering, member_means
from .errors import ConfigError, DegenerateProfileError
from .market_data import ReturnPanel
from .seeding import derive_seed, rng_for

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 100
DEFAULT_ITER_REPS = 300


def kmeans_distance(stock, center, cfg: BootstrapConfig) -> float:
    """SD coefficient between a stock and a center series.

    A pair whose statistic is undefined everywhere (perfectly separated
    supports) is treated as maximally distant.
    """
    try:
        return pair_test(stock, center, cfg, keep_boot=False).coefficient
    except DegenerateProfileError:
        return 1.0


def _distance_job(job, cfg: BootstrapConfig) -> float:
    seed, stock, center = job
    return kmeans_distance(stock, center, cfg.replace(seed=seed))


def _distances(panel: ReturnPanel, centers: np.ndarray, cfg: BootstrapConfig, workers: int) -> np.ndarray:
    # seeds ignore the iteration, so unchanged centers reproduce their distances exactly
    n, K = panel.n_assets, centers.shape[0]
    jobs = [
        (derive_seed(cfg.seed, "kmeans", panel.tickers[i], t), panel.returns[:, i], centers[t])
        for i in range(n)
        for t in range(K)
    ]
    return np.array(parallel_map(partial(_distance_job, cfg=cfg), jobs, workers)).reshape(n, K)


def _repair_empty(labels: np.ndarray, dist: np.ndarray, K: int) -> np.ndarray:
    """Re-seed each empty cluster with the stock farthest from its current center."""
    labels = labels.copy()
    for t in range(K):
        sizes = np.bincount(labels, minlength=K)
        if sizes[t]:
            continue
        movable = np.flatnonzero(sizes[labels] > 1)
        own = dist[movable, labels[movable]]
        pick = movable[int(np.argmax(own))]
        logger.debug("cluster %d empty; re-seeded with asset %d", t, pick)
        labels[pick] = t
    return labels


def sd_kmeans(
    panel: ReturnPanel,
    K: int,
    cfg: BootstrapConfig,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: Optional[int] = None,
    iter_reps: Optional[int] = DEFAULT_ITER_REPS,
    workers: int = 1,
) -> Clustering:
    """Partition ``panel`` into ``K`` clusters.

    Initial centers are ``K`` distinct stocks drawn uniformly using ``seed``
    (defaults to ``cfg.seed``). Each pass assigns every stock to the center
    with the smallest SD coefficient (lowest index on ties) and then resets
    centers to member means. The loop stops once no assignment changes or
    after ``max_iter`` passes. Iterations use ``iter_reps`` bootstrap
    replications; a final pass at ``cfg.reps`` records each stock's distance
    to its own center.
    """
    n = panel.n_assets
    if not 2 <= K <= n:
        raise ConfigError(f"K must lie in [2, {n}] for {n} assets, got {K}")
    if max_iter < 1:
        raise ConfigError(f"max_iter must be >= 1, got {max_iter}")
    seed = cfg.seed if seed is None else seed
    iter_cfg = cfg.replace(reps=iter_reps) if iter_reps else cfg

    start = rng_for(seed, "kmeans-init").choice(n, size=K, replace=False)
    centers = panel.returns[:, start].T.copy()
    labels: Optional[np.ndarray] = None
    history: list[bytes] = []  # labels after each pass
    iterations = 0
    converged = False
    while True:
        dist = _distances(panel, centers, iter_cfg, workers)
        new = _repair_empty(np.argmin(dist, axis=1), dist, K)
        changed = labels is None or bool(np.any(new != labels))
        labels = new
        iterations += 1
        if not changed:
            converged = True
            break
        if iterations >= max_iter:
            break
        key = labels.tobytes()
        if key in history:
            # Distance seeds do not depend on the pass, so the next assignment is a
            # function of this one: the loop is periodic from here until max_iter.
            first = history.index(key)
            period = len(history) - first
            labels = np.frombuffer(history[first + (max_iter - 1 - first) % period], dtype=labels.dtype).copy()
            logger.info("assignment cycle of length %d; skipping ahead to pass %d", period, max_iter)
            iterations = max_iter
            break
        history.append(key)
        centers = member_means(panel, panel.tickers, labels, K)
    centers = member_means(panel, panel.tickers, labels, K)
    logger.info("SD-K-means K=%d finished after %d iterations (converged=%s)", K, iterations, converged)

    final = _own_center_distances(panel, labels, centers, cfg, workers)
    return Clustering(panel.tickers, labels, K, centers, iterations, converged, final)


def _own_center_distances(panel, labels, centers, cfg, workers) -> dict:
    jobs = [
        (derive_seed(cfg.seed, "kmeans-final", t), panel.returns[:, i], centers[labels[i]])
        for i, t in enumerate(panel.tickers)
    ]
    values = parallel_map(partial(_distance_job, cfg=cfg), jobs, workers)
    return dict(zip(panel.tickers, values))
