"""Minimum-variance portfolios, single-index alpha/beta and random-draw pool comparisons."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .market_data import ReturnPanel
from .seeding import rng_for

logger = logging.getLogger(__name__)

# Covariances worse conditioned than this get diagonal loading.
MAX_CONDITION = 1e12
RIDGE_SCALE = 1e-8


@dataclass(frozen=True)
class PortfolioStats:
    weights: dict
    exp_return: float
    risk: float  # per-period variance
    ridge: float = 0.0

    @property
    def tickers(self) -> tuple[str, ...]:
        return tuple(self.weights)


@dataclass(frozen=True)
class AlphaBeta:
    alpha: float
    beta: float


def gmvp_weights(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Fully invested weights minimizing ``w' cov w``; returns ``(w, ridge)``.

    A singular or badly conditioned ``cov`` is loaded with
    ``1e-8 * trace / n`` on the diagonal; the loading used is returned.
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    ones = np.ones(n)
    ridge = 0.0
    if not np.isfinite(cov).all():
        raise NumericalError("covariance has non-finite entries")
    if np.linalg.cond(cov) > MAX_CONDITION:
        ridge = RIDGE_SCALE * float(np.trace(cov)) / n
    try:
        x = np.linalg.solve(cov + ridge * np.eye(n), ones)
    except np.linalg.LinAlgError:
        ridge = RIDGE_SCALE * float(np.trace(cov)) / n
        x = np.linalg.solve(cov + ridge * np.eye(n), ones)
    if ridge:
        logger.warning("covariance near singular; diagonal loading %.3g applied", ridge)
    total = x.sum()
    if not np.isfinite(total) or total == 0.0:
        raise NumericalError("minimum-variance weights are undefined for this covariance")
    return x / total, ridge


def gmvp(panel: ReturnPanel, tickers: Optional[Sequence[str]] = None) -> PortfolioStats:
    """Global minimum-variance portfolio over ``tickers`` (all assets by default).

    Weights may be negative. Risk and expected return are the in-sample
    variance (ddof=1) and mean of the portfolio's per-period return.
    """
    sub = panel if tickers is None else panel.select(tickers)
    if sub.n_assets < 2:
        raise DataError("a portfolio needs at least 2 assets")
    if sub.n_periods < 2:
        raise DataError("a portfolio needs at least 2 periods")
    returns = sub.returns
    cov = np.cov(returns, rowvar=False, ddof=1)
    w, ridge = gmvp_weights(cov)
    risk = max(float(w @ cov @ w), 0.0)
    exp_return = float(returns.mean(axis=0) @ w)
    return PortfolioStats(dict(zip(sub.tickers, w.tolist())), exp_return, risk, ridge)


def alpha_beta(asset, market) -> AlphaBeta:
    """OLS of ``asset`` on ``market``: slope is beta, intercept alpha."""
    a = np.asarray(asset, dtype=float)
    m = np.asarray(market, dtype=float)
    if a.ndim != 1 or a.shape != m.shape:
        raise DataError("asset and market must be 1-D series of equal length")
    if a.size < 3:
        raise DataError("alpha/beta needs at least 3 observations")
    mc = m - m.mean()
    var_m = float(mc @ mc)
    if var_m <= 0.0:
        raise NumericalError("market return has zero variance")
    beta = float((a - a.mean()) @ mc) / var_m
    return AlphaBeta(float(a.mean() - beta * m.mean()), beta)


def market_series(panel: ReturnPanel) -> np.ndarray:
    """Equal-weight average return of every asset in the panel."""
    return panel.returns.mean(axis=1)


def alpha_beta_table(
    panel: ReturnPanel, clusters: Optional[dict] = None
) -> list[tuple[str, float, float, Optional[int]]]:
    """``(ticker, alpha, beta, cluster)`` rows against the panel's own market average."""
    market = market_series(panel)
    clusters = clusters or {}
    rows = []
    for t in panel.tickers:
        ab = alpha_beta(panel.column(t), market)
        rows.append((t, ab.alpha, ab.beta, clusters.get(t)))
    return rows


@dataclass(frozen=True)
class PoolSummary:
    label: str
    size: int
    mean_risk: float
    std_risk: float
    mean_return: float
    std_return: float
    risks: tuple[float, ...]
    returns: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "size": self.size,
            "mean_risk": self.mean_risk,
            "std_risk": self.std_risk,
            "mean_return": self.mean_return,
            "std_return": self.std_return,
        }


@dataclass(frozen=True)
class DrawExperiment:
    m: int
    draws: int
    seed: int
    pools: tuple[PoolSummary, PoolSummary]

    def to_dict(self) -> dict:
        return {"m": self.m, "draws": self.draws, "seed": self.seed, "pools": [p.to_dict() for p in self.pools]}


def _draw_pool(panel: ReturnPanel, pool: Sequence[str], label: str, m: int, draws: int, seed: int) -> PoolSummary:
    pool = list(pool)
    risks, rets = [], []
    for d in range(draws):
        # the draw index alone fixes the stream, so equal pools see equal draws
        pick = rng_for(seed, "draw", d).choice(len(pool), size=m, replace=False)
        stats = gmvp(panel, [pool[i] for i in sorted(pick)])
        risks.append(stats.risk)
        rets.append(stats.exp_return)
    r, e = np.array(risks), np.array(rets)
    # shifting by the first draw keeps identical draws at exactly zero spread
    return PoolSummary(label, len(pool), float(r.mean()), float((r - r[0]).std()),
                       float(e.mean()), float((e - e[0]).std()), tuple(risks), tuple(rets))


def draw_experiment(
    panel: ReturnPanel,
    pool_a: Sequence[str],
    pool_b: Sequence[str],
    m: int,
    draws: int,
    seed: int,
    labels: tuple[str, str] = ("A", "B"),
) -> DrawExperiment:
    """Compare two pools by GMVPs built on ``draws`` random ``m``-asset subsets of each."""
    if m < 2:
        raise ConfigError(f"portfolio size m must be >= 2, got {m}")
    if draws < 1:
        raise ConfigError(f"draws must be >= 1, got {draws}")
    for name, pool in zip(labels, (pool_a, pool_b)):
        if len(pool) < m:
            raise DataError(f"pool {name} has {len(pool)} assets, fewer than m={m}")
        missing = [t for t in pool if t not in panel.tickers]
        if missing:
            raise DataError(f"pool {name} has tickers not in the panel: {missing}")
    a = _draw_pool(panel, pool_a, labels[0], m, draws, seed)
    b = _draw_pool(panel, pool_b, labels[1], m, draws, seed)
    return DrawExperiment(m, draws, seed, (a, b))


def write_scatter_csv(experiment: DrawExperiment, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pool", "draw", "risk", "exp_return"])
        for pool in experiment.pools:
            for d, (r, e) in enumerate(zip(pool.risks, pool.returns)):
                writer.writerow([pool.label, d, repr(r), repr(e)])


def write_alpha_beta_csv(rows, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ticker", "alpha", "beta", "cluster"])
        for t, a, b, k in rows:
            writer.writerow([t, repr(a), repr(b), "" if k is None else k])
