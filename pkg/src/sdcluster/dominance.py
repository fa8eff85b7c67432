"""Directional SD tests between series, ranking of cluster centers, pool refinement.

One-sided critical values come from the bootstrap distribution of the
signed extremes of T (its maximum for the upper tail, minus its minimum for
the lower tail). With ``T = (F_j - G_j) / sd``:

* ascending: ``min T < -M_lower`` means F lies below G somewhere and never
  significantly above, i.e. f dominates g for risk averters;
* descending: ``max T > M_upper`` means f's reversed integral is larger,
  i.e. f dominates g for risk seekers.

Rejecting on one side only gives a strict verdict, on neither side
equivalence, on both sides no clear ordering.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bootstrap import BootstrapConfig, critical_value, run_bootstrap
from .clustering import Clustering
from .errors import ConfigError, DataError
from .market_data import ReturnPanel
from .sd_core import Direction, as_sample
from .seeding import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05


class Outcome(str, enum.Enum):
    DOMINATES = "dominates"
    DOMINATED_BY = "dominated_by"
    EQUIVALENT = "equivalent"
    NO_CLEAR = "no_clear"

    def flipped(self) -> "Outcome":
        swap = {Outcome.DOMINATES: Outcome.DOMINATED_BY, Outcome.DOMINATED_BY: Outcome.DOMINATES}
        return swap.get(self, self)

    @property
    def symbol(self) -> str:
        return {"dominates": "≻", "dominated_by": "≺", "equivalent": "≡", "no_clear": "⊁"}[self.value]


@dataclass(frozen=True)
class DominanceVerdict:
    order: int
    direction: Direction
    outcome: Outcome
    alpha: float
    max_t: float
    min_t: float
    crit_upper: float
    crit_lower: float

    def flipped(self) -> "DominanceVerdict":
        """The same test read from the other series' side."""
        return DominanceVerdict(self.order, self.direction, self.outcome.flipped(), self.alpha,
                                -self.min_t, -self.max_t, self.crit_lower, self.crit_upper)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "direction": self.direction.value,
            "outcome": self.outcome.value,
            "alpha": self.alpha,
            "max_t": self.max_t,
            "min_t": self.min_t,
            "crit": [self.crit_lower, self.crit_upper],
        }


def directional_test(
    f,
    g,
    order: int,
    direction: Direction | str,
    alpha: float = DEFAULT_ALPHA,
    cfg: Optional[BootstrapConfig] = None,
) -> DominanceVerdict:
    """Verdict on whether ``f`` dominates ``g`` at the given order and direction.

    ``cfg`` supplies reps, seed and grid settings; its order and direction
    are overridden by the arguments.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha!r}")
    cfg = (cfg or BootstrapConfig()).replace(order=order, direction=Direction.parse(direction))
    profile, draws = run_bootstrap(f, g, cfg)
    max_t = profile.max if profile is not None else 0.0
    min_t = profile.min if profile is not None else 0.0
    crit_upper = critical_value(draws.max, alpha)
    crit_lower = critical_value(-draws.min, alpha)
    upper = max_t > crit_upper
    lower = min_t < -crit_lower
    if upper and lower:
        outcome = Outcome.NO_CLEAR
    elif not (upper or lower):
        outcome = Outcome.EQUIVALENT
    else:
        f_wins = lower if cfg.direction is Direction.ASC else upper
        outcome = Outcome.DOMINATES if f_wins else Outcome.DOMINATED_BY
    return DominanceVerdict(cfg.order, cfg.direction, outcome, alpha, max_t, min_t, crit_upper, crit_lower)


@dataclass(frozen=True)
class ClusterRanking:
    order: int
    direction: Direction
    alpha: float
    verdicts: dict  # (i, k) with i < k -> verdict of cluster i against cluster k
    groups: tuple[tuple[int, ...], ...]
    group_verdicts: dict  # (gi, gk) with gi < gk -> verdict between equivalence groups
    optimal: tuple[int, ...]

    def verdict(self, i: int, k: int) -> DominanceVerdict:
        return self.verdicts[(i, k)] if i < k else self.verdicts[(k, i)].flipped()

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "direction": self.direction.value,
            "alpha": self.alpha,
            "verdicts": [{"pair": [i, k], **v.to_dict()} for (i, k), v in sorted(self.verdicts.items())],
            "groups": [list(g) for g in self.groups],
            "group_verdicts": [{"pair": [i, k], **v.to_dict()} for (i, k), v in sorted(self.group_verdicts.items())],
            "optimal": list(self.optimal),
        }


def _components(K: int, equivalent: Sequence[tuple[int, int]]) -> tuple[tuple[int, ...], ...]:
    parent = list(range(K))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, k in equivalent:
        a, b = find(i), find(k)
        parent[max(a, b)] = min(a, b)
    groups: dict[int, list[int]] = {}
    for i in range(K):
        groups.setdefault(find(i), []).append(i)
    return tuple(tuple(v) for _, v in sorted(groups.items()))


def rank_centers(
    clustering: Clustering,
    order: int,
    direction: Direction | str,
    alpha: float = DEFAULT_ALPHA,
    cfg: Optional[BootstrapConfig] = None,
) -> ClusterRanking:
    """Pairwise verdicts between cluster centers and the investor-optimal clusters.

    Clusters joined by equivalence verdicts form groups; groups are compared
    through their pooled member-mean series. Optimal groups dominate at
    least one other group and are dominated by none. When no group
    dominates another, every cluster is optimal.
    """
    direction = Direction.parse(direction)
    cfg = cfg or BootstrapConfig()
    if clustering.centers is None:
        raise DataError("cluster centers are required; build the clustering with a panel")
    K = clustering.K
    if K < 2:
        raise ConfigError("ranking needs at least 2 clusters")
    centers = clustering.centers
    sizes = clustering.sizes

    verdicts = {}
    for i in range(K):
        for k in range(i + 1, K):
            seeded = cfg.replace(seed=derive_seed(cfg.seed, "rank", i, k, order))
            verdicts[(i, k)] = directional_test(centers[i], centers[k], order, direction, alpha, seeded)
    groups = _components(K, [p for p, v in verdicts.items() if v.outcome is Outcome.EQUIVALENT])

    group_verdicts = {}
    for gi in range(len(groups)):
        for gk in range(gi + 1, len(groups)):
            a, b = groups[gi], groups[gk]
            if len(a) == 1 and len(b) == 1:
                i, k = a[0], b[0]
                group_verdicts[(gi, gk)] = verdicts[(i, k)] if i < k else verdicts[(k, i)].flipped()
                continue
            mean_a = np.average(centers[list(a)], axis=0, weights=sizes[list(a)])
            mean_b = np.average(centers[list(b)], axis=0, weights=sizes[list(b)])
            seeded = cfg.replace(seed=derive_seed(cfg.seed, "rank-group", a, b, order))
            group_verdicts[(gi, gk)] = directional_test(mean_a, mean_b, order, direction, alpha, seeded)

    optimal_groups = _optimal_groups(len(groups), group_verdicts)
    optimal = tuple(sorted(c for g in optimal_groups for c in groups[g]))
    return ClusterRanking(order, direction, alpha, verdicts, groups, group_verdicts, optimal)


def _optimal_groups(n_groups: int, group_verdicts: dict) -> list[int]:
    wins = np.zeros(n_groups, dtype=int)
    losses = np.zeros(n_groups, dtype=int)
    for (i, k), v in group_verdicts.items():
        if v.outcome is Outcome.DOMINATES:
            wins[i] += 1
            losses[k] += 1
        elif v.outcome is Outcome.DOMINATED_BY:
            wins[k] += 1
            losses[i] += 1
    if not wins.any():
        return list(range(n_groups))
    best = [g for g in range(n_groups) if wins[g] > 0 and losses[g] == 0]
    if not best:
        # dominance cycle: fall back to the best net record
        net = wins - losses
        best = [g for g in range(n_groups) if net[g] == net.max()]
    return best


def refine_pool(
    panel: ReturnPanel,
    clustering: Clustering,
    ranking: ClusterRanking,
    order: Optional[int] = None,
    direction: Optional[Direction | str] = None,
    alpha: Optional[float] = None,
    cfg: Optional[BootstrapConfig] = None,
) -> list[str]:
    """Members of optimal clusters plus stocks elsewhere not dominated by any optimal center.

    The rescued stocks are those whose own directional test against every
    optimal center is not ``DOMINATED_BY``. The result feeds the next-order
    clustering stage.
    """
    order = ranking.order if order is None else order
    direction = ranking.direction if direction is None else Direction.parse(direction)
    alpha = ranking.alpha if alpha is None else alpha
    cfg = cfg or BootstrapConfig()
    if clustering.centers is None:
        clustering = clustering.with_centers(panel)
    optimal = set(ranking.optimal)
    pool = []
    for ticker, label in zip(clustering.tickers, clustering.labels):
        if label in optimal:
            pool.append(ticker)
            continue
        stock = as_sample(panel.column(ticker), ticker)
        beaten = False
        for o in sorted(optimal):
            seeded = cfg.replace(seed=derive_seed(cfg.seed, "refine", ticker, o, order))
            verdict = directional_test(stock, clustering.centers[o], order, direction, alpha, seeded)
            if verdict.outcome is Outcome.DOMINATED_BY:
                beaten = True
                break
        if not beaten:
            logger.info("refine: %s kept despite non-optimal cluster %d", ticker, label)
            pool.append(ticker)
    if not pool:
        raise DataError("refined pool is empty")
    return pool


def optimal_members(clustering: Clustering, ranking: ClusterRanking) -> list[str]:
    chosen = set(ranking.optimal)
    return [t for t, k in zip(clustering.tickers, clustering.labels) if k in chosen]


def dominance_table(ranking: ClusterRanking) -> str:
    """Center-vs-center symbol table: row i, column k shows i's relation to k."""
    K = 1 + max(max(p) for p in ranking.verdicts) if ranking.verdicts else 0
    sub = ranking.order
    header = ["", *(f"Cluster {k + 1}" for k in range(K))]
    lines = ["\t".join(header)]
    for i in range(K):
        row = [f"Cluster {i + 1}"]
        for k in range(K):
            row.append("-" if i == k else f"{ranking.verdict(i, k).outcome.symbol}{sub}")
        lines.append("\t".join(row))
    lines.append("")
    lines.append(f"≻{sub} dominates, ≺{sub} is dominated, ≡{sub} equivalent, ⊁{sub} no clear relation "
                 f"({ranking.direction.value}, alpha={ranking.alpha})")
    return "\n".join(lines) + "\n"


def write_ranking(ranking: ClusterRanking, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ranking.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
