"""Pooled-resampling bootstrap for the SD supremum statistic.

Both samples are resampled with replacement from their pooled multiset,
which imposes the null of identical distributions. Replication ``k`` draws
from its own stream keyed by ``(seed, k)``, so results do not depend on how
replications are chunked or scheduled.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError
from .seeding import replication_rng
from .sd_core import (
    DEFAULT_GRID_POINTS,
    DEFAULT_VAR_FLOOR,
    Direction,
    StatProfile,
    as_sample,
    grid_rows,
    make_grid,
    stat_profile,
    t_statistic_batch,
)

# Replications evaluated per vectorized block; bounds peak memory only.
_BLOCK = 256


@dataclass(frozen=True)
class BootstrapConfig:
    reps: int = 1000
    seed: int = 0
    grid_points: int = DEFAULT_GRID_POINTS
    var_floor: float = DEFAULT_VAR_FLOOR
    order: int = 1
    direction: Direction = Direction.ASC
    interior_grid: bool = False

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "direction", Direction.parse(self.direction))
        except DataError as exc:
            raise ConfigError(str(exc)) from None
        if isinstance(self.reps, bool) or int(self.reps) != self.reps or self.reps < 1:
            raise ConfigError(f"reps must be a positive integer, got {self.reps!r}")
        if int(self.grid_points) != self.grid_points or self.grid_points < 2:
            raise ConfigError(f"grid_points must be an integer >= 2, got {self.grid_points!r}")
        if self.order not in (1, 2, 3):
            raise ConfigError(f"order must be 1, 2 or 3, got {self.order!r}")
        if not self.var_floor > 0:
            raise ConfigError(f"var_floor must be positive, got {self.var_floor!r}")
        if int(self.seed) != self.seed or self.seed < 0 or self.seed >= 1 << 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    def replace(self, **changes) -> "BootstrapConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "reps": int(self.reps),
            "seed": int(self.seed),
            "grid_points": int(self.grid_points),
            "var_floor": float(self.var_floor),
            "order": int(self.order),
            "direction": self.direction.value,
            "interior_grid": bool(self.interior_grid),
        }


@dataclass(frozen=True)
class PairTestResult:
    t0_max_abs: float
    p_value: float
    reps: int
    profile: Optional[StatProfile]
    boot_stats: Optional[np.ndarray] = None
    boot_max: Optional[np.ndarray] = None
    boot_min: Optional[np.ndarray] = None
    n_degenerate: int = 0

    @property
    def coefficient(self) -> float:
        """SD coefficient: the complement of the bootstrap p-value."""
        return 1.0 - self.p_value


@dataclass(frozen=True)
class _BootDraws:
    abs_max: np.ndarray
    max: np.ndarray
    min: np.ndarray
    degenerate: np.ndarray


def pooled_resample(f, g, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``len(f)`` and ``len(g)`` values with replacement from ``f`` ∪ ``g``."""
    f = np.asarray(f, dtype=float).ravel()
    g = np.asarray(g, dtype=float).ravel()
    pooled = np.concatenate([f, g])
    idx = rng.integers(0, pooled.size, size=pooled.size)
    return pooled[idx[: f.size]], pooled[idx[f.size :]]


def _extremes(f: np.ndarray, g: np.ndarray, cfg: BootstrapConfig) -> _BootDraws:
    """Signed and absolute extremes of T over each row's own pooled-range grid."""
    lo = np.minimum(f.min(axis=1), g.min(axis=1))
    hi = np.maximum(f.max(axis=1), g.max(axis=1))
    flat = ~(hi > lo)
    rows = f.shape[0]
    abs_max = np.zeros(rows)
    top = np.zeros(rows)
    bottom = np.zeros(rows)
    live = np.flatnonzero(~flat)
    if live.size:
        grids = grid_rows(lo[live], hi[live], cfg.grid_points, cfg.interior_grid)
        t = t_statistic_batch(f[live], g[live], grids, cfg.order, cfg.direction, cfg.var_floor)
        any_defined = ~np.all(np.isnan(t), axis=1)
        ok = live[any_defined]
        if ok.size:
            t_ok = t[any_defined]
            top[ok] = np.nanmax(t_ok, axis=1)
            bottom[ok] = np.nanmin(t_ok, axis=1)
            abs_max[ok] = np.maximum(np.abs(top[ok]), np.abs(bottom[ok]))
        flat[live[~any_defined]] = True
    return _BootDraws(abs_max, top, bottom, flat)


def boot_stat(f_star, g_star, cfg: BootstrapConfig) -> tuple[float, bool]:
    """max |T| of one resampled pair on its own grid.

    Returns ``(stat, degenerate)``; a resample whose statistic is undefined
    everywhere contributes 0 and is flagged.
    """
    f_star = np.asarray(f_star, dtype=float).ravel()[None, :]
    g_star = np.asarray(g_star, dtype=float).ravel()[None, :]
    draws = _extremes(f_star, g_star, cfg)
    return float(draws.abs_max[0]), bool(draws.degenerate[0])


def _bootstrap(f: np.ndarray, g: np.ndarray, cfg: BootstrapConfig) -> _BootDraws:
    pooled = np.concatenate([f, g])
    size = pooled.size
    parts = []
    for start in range(0, cfg.reps, _BLOCK):
        stop = min(start + _BLOCK, cfg.reps)
        idx = np.stack([replication_rng(cfg.seed, k).integers(0, size, size=size) for k in range(start, stop)])
        draws = pooled[idx]
        parts.append(_extremes(draws[:, : f.size], draws[:, f.size :], cfg))
    fields = ("abs_max", "max", "min", "degenerate")
    return _BootDraws(*(np.concatenate([getattr(p, name) for p in parts]) for name in fields))


def _is_canonical(f: np.ndarray, g: np.ndarray) -> bool:
    return (f.size, f.tobytes()) <= (g.size, g.tobytes())


def run_bootstrap(f, g, cfg: BootstrapConfig) -> tuple[Optional[StatProfile], _BootDraws]:
    """Observed profile plus bootstrap extremes, oriented as ``(f, g)``.

    The computation always runs on a canonical ordering of the two samples
    and is mirrored back, so swapping ``f`` and ``g`` negates the profile and
    swaps the signed extremes exactly.
    """
    f = as_sample(f, "f")
    g = as_sample(g, "g")
    swap = not _is_canonical(f, g)
    a, b = (g, f) if swap else (f, g)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    profile = None
    if hi > lo:
        grid = make_grid(a, b, cfg.grid_points, cfg.interior_grid)
        profile = stat_profile(a, b, grid, cfg.order, cfg.direction, cfg.var_floor)
    draws = _bootstrap(a, b, cfg)
    if swap:
        profile = profile.negated() if profile is not None else None
        draws = _BootDraws(draws.abs_max, -draws.min, -draws.max, draws.degenerate)
    return profile, draws


def pair_test(f, g, cfg: BootstrapConfig, keep_boot: bool = True) -> PairTestResult:
    """Two-sided bootstrap SD test of ``f`` against ``g``.

    ``p = #{A_k >= T0} / B`` where ``T0`` is the observed max |T| and ``A_k``
    the resampled maxima. If the pooled sample is constant the two empirical
    distributions coincide, so ``T0`` is taken as 0. A non-constant pair
    whose statistic is undefined at every grid point raises
    :class:`~sdcluster.errors.DegenerateProfileError`.
    """
    profile, draws = run_bootstrap(f, g, cfg)
    t0 = profile.max_abs if profile is not None else 0.0
    hits = int(np.count_nonzero(draws.abs_max >= t0))
    return PairTestResult(
        t0_max_abs=t0,
        p_value=hits / cfg.reps,
        reps=cfg.reps,
        profile=profile,
        boot_stats=draws.abs_max if keep_boot else None,
        boot_max=draws.max if keep_boot else None,
        boot_min=draws.min if keep_boot else None,
        n_degenerate=int(draws.degenerate.sum()),
    )


def critical_value(boot_stats, alpha: float) -> float:
    """Bootstrap critical value c with ``#{stat_k >= c} = floor(B * alpha)``.

    Realized as the ``(B - floor(B alpha) + 1)``-th smallest statistic. When
    ``floor(B alpha)`` is 0 the sample maximum is returned.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha!r}")
    stats = np.sort(np.asarray(boot_stats, dtype=float).ravel())
    if stats.size == 0:
        raise DataError("no bootstrap statistics supplied")
    tail = max(math.floor(stats.size * alpha + 1e-9), 1)
    return float(stats[stats.size - tail])
