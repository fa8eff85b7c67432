"""Cluster assignments shared by the K-means and hierarchical variants."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError
from .market_data import ReturnPanel


@dataclass(frozen=True)
class Clustering:
    """Assignment of ``tickers`` to clusters ``0..K-1``.

    ``centers`` holds one return series per cluster (row ``k`` is the
    per-period mean of cluster ``k``'s members) when a panel was available.
    """

    tickers: tuple[str, ...]
    labels: np.ndarray
    K: int
    centers: Optional[np.ndarray] = None
    iterations_used: int = 0
    converged: bool = True
    center_distances: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=int)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "tickers", tuple(self.tickers))
        if labels.shape != (len(self.tickers),):
            raise DataError("one label per ticker required")
        if labels.size and (labels.min() < 0 or labels.max() >= self.K):
            raise DataError(f"labels must lie in [0, {self.K})")

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)

    @property
    def assignments(self) -> dict[str, int]:
        return {t: int(k) for t, k in zip(self.tickers, self.labels)}

    def members(self, k: int) -> tuple[str, ...]:
        return tuple(t for t, lab in zip(self.tickers, self.labels) if lab == k)

    def partition(self) -> frozenset:
        """Clusters as a set of ticker sets (label-free)."""
        return frozenset(frozenset(self.members(k)) for k in range(self.K) if self.sizes[k])

    def with_centers(self, panel: ReturnPanel) -> "Clustering":
        return replace(self, centers=member_means(panel, self.tickers, self.labels, self.K))

    def to_dict(self) -> dict:
        out = {
            "K": int(self.K),
            "assignments": self.assignments,
            "iterations_used": int(self.iterations_used),
            "converged": bool(self.converged),
        }
        if self.center_distances is not None:
            out["center_distances"] = {t: float(v) for t, v in self.center_distances.items()}
        return out

    @classmethod
    def from_dict(cls, data: dict, panel: Optional[ReturnPanel] = None) -> "Clustering":
        try:
            assignments = data["assignments"]
            K = int(data["K"])
        except (KeyError, TypeError, ValueError):
            raise DataError("clustering JSON needs 'K' and 'assignments'") from None
        tickers = tuple(assignments)
        labels = np.array([int(assignments[t]) for t in tickers], dtype=int)
        out = cls(tickers, labels, K, None, int(data.get("iterations_used", 0)),
                  bool(data.get("converged", True)), data.get("center_distances"))
        return out.with_centers(panel) if panel is not None else out


def member_means(panel: ReturnPanel, tickers, labels: np.ndarray, K: int) -> np.ndarray:
    """(K, periods) array of per-period mean returns of each cluster."""
    cols = panel.returns[:, [panel.tickers.index(t) for t in tickers]]
    centers = np.zeros((K, panel.n_periods))
    for k in range(K):
        mask = labels == k
        if mask.any():
            centers[k] = cols[:, mask].mean(axis=1)
    return centers


def write_clustering(clustering: Clustering, path: str | Path) -> None:
    Path(path).write_text(json.dumps(clustering.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_clustering(path: str | Path, panel: Optional[ReturnPanel] = None) -> Clustering:
    path = Path(path)
    if not path.exists():
        raise DataError(f"clustering file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from None
    return Clustering.from_dict(data, panel)
