"""Empirical ascending/descending SD integrals and the standardized test statistic.

For a sample ``h`` of size ``N`` and order ``j`` the ascending integral is

    H_j^A(x) = 1 / (N (j-1)!) * sum_i (x - h_i)_+^(j-1)

and the descending one mirrors it with ``(h_i - x)_+``. For ``j = 1`` the
zeroth power is the indicator ``h_i <= x`` (resp. ``h_i >= x``), which makes
the ascending integral the empirical CDF and the descending one the
empirical survival function.

The statistic between samples ``f`` and ``g`` at grid point ``x`` is

    T_j(x) = (F_j(x) - G_j(x)) / sqrt(V_F(x) + V_G(x))

and is left undefined (NaN) where the pooled variance is at or below a
floor.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from math import comb, factorial

import numpy as np

from .errors import DataError, DegenerateProfileError, NumericalError

ORDERS = (1, 2, 3)
DEFAULT_GRID_POINTS = 100
DEFAULT_VAR_FLOOR = 1e-12


class Direction(str, enum.Enum):
    """Integration direction: ascending for risk averters, descending for risk seekers."""

    ASC = "asc"
    DESC = "desc"

    @classmethod
    def parse(cls, value: "Direction | str") -> "Direction":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        aliases = {"a": "asc", "ascending": "asc", "asd": "asc", "d": "desc", "descending": "desc", "dsd": "desc"}
        try:
            return cls(aliases.get(text, text))
        except ValueError:
            raise DataError(f"unknown direction {value!r}; use 'asc' or 'desc'") from None


def check_order(order: int) -> int:
    if order not in ORDERS:
        raise DataError(f"SD order must be 1, 2 or 3, got {order!r}")
    return int(order)


def as_sample(values, name: str = "sample") -> np.ndarray:
    """Validate and return a 1-D float array of at least two finite values."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size < 2:
        raise DataError(f"{name} needs at least 2 observations, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def _powered_parts(sample: np.ndarray, x: np.ndarray, order: int, direction: Direction) -> np.ndarray:
    """(x - h)_+^(j-1) (or the descending mirror), shape (len(x), N)."""
    diff = x[:, None] - sample[None, :]
    if direction is Direction.DESC:
        diff = -diff
    if order == 1:
        return (diff >= 0).astype(float)
    return np.where(diff > 0, diff, 0.0) ** (order - 1)


def sd_integral(sample, x, order: int, direction: Direction | str = Direction.ASC):
    """Empirical j-th order SD integral of ``sample`` at ``x`` (scalar or array)."""
    order = check_order(order)
    direction = Direction.parse(direction)
    sample = np.asarray(sample, dtype=float).ravel()
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    parts = _powered_parts(sample, xs, order, direction)
    out = parts.sum(axis=1) / (sample.size * factorial(order - 1))
    return float(out[0]) if np.ndim(x) == 0 else out


def sd_variance(sample, x, order: int, direction: Direction | str = Direction.ASC):
    """Estimated variance of :func:`sd_integral`, clamped at zero."""
    order = check_order(order)
    direction = Direction.parse(direction)
    sample = np.asarray(sample, dtype=float).ravel()
    n = sample.size
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    parts = _powered_parts(sample, xs, order, direction)
    fact = factorial(order - 1)
    h = parts.sum(axis=1) / (n * fact)
    second = (parts**2).sum(axis=1) / (n * fact**2)
    out = np.maximum((second - h**2) / n, 0.0)
    return float(out[0]) if np.ndim(x) == 0 else out


def unit_grid(points: int, interior: bool = False) -> np.ndarray:
    """Equally spaced fractions of the range: [0, 1] closed, or strictly inside."""
    if points < 2:
        raise DataError(f"grid needs at least 2 points, got {points}")
    if interior:
        return np.linspace(0.0, 1.0, points + 2)[1:-1]
    return np.linspace(0.0, 1.0, points)


def grid_rows(lo: np.ndarray, hi: np.ndarray, points: int, interior: bool = False) -> np.ndarray:
    """One grid per row spanning ``[lo, hi]``; closed grids hit both ends exactly."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    u = unit_grid(points, interior)
    grids = lo[:, None] + (hi - lo)[:, None] * u[None, :]
    if not interior:
        grids[:, 0] = lo
        grids[:, -1] = hi
    return grids


def make_grid(f, g, points: int = DEFAULT_GRID_POINTS, interior: bool = False) -> np.ndarray:
    """Equally spaced grid over the pooled range of ``f`` and ``g``.

    With ``interior=True`` the two range endpoints (which are always sample
    points) are excluded and ``points`` values are placed strictly inside.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    lo = min(f.min(), g.min())
    hi = max(f.max(), g.max())
    if not hi > lo:
        raise NumericalError(f"degenerate pooled range [{lo}, {hi}]: cannot build a grid")
    return grid_rows(np.array([lo]), np.array([hi]), points, interior)[0]


@dataclass(frozen=True)
class StatProfile:
    """T_j(x) over a grid; NaN marks points whose pooled variance is below the floor."""

    order: int
    direction: Direction
    grid: np.ndarray
    t_values: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.t_values)

    @property
    def max(self) -> float:
        return float(np.nanmax(self.t_values))

    @property
    def min(self) -> float:
        return float(np.nanmin(self.t_values))

    @property
    def max_abs(self) -> float:
        return max(abs(self.max), abs(self.min))

    def negated(self) -> "StatProfile":
        return StatProfile(self.order, self.direction, self.grid, -self.t_values)


# Batched machinery shared by the observed statistic and the bootstrap.


def _ranks_of_grid(h: np.ndarray, x: np.ndarray, strict: bool) -> np.ndarray:
    """Per row, count of ``h <= x`` (or ``h < x`` when strict). ``x`` rows ascend."""
    n, g = h.shape[1], x.shape[1]
    merged = np.concatenate([x, h] if strict else [h, x], axis=1)
    order = np.argsort(merged, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(n + g), order.shape), axis=1)
    pos = ranks[:, :g] if strict else ranks[:, n:]
    return pos - np.arange(g)[None, :]


def _first_order_parts(h: np.ndarray, x: np.ndarray, direction: Direction) -> np.ndarray:
    n = h.shape[1]
    if direction is Direction.ASC:
        return _ranks_of_grid(h, x, strict=False)
    return n - _ranks_of_grid(h, x, strict=True)


def _power_sums(h: np.ndarray, x: np.ndarray, center: np.ndarray, powers: tuple[int, ...], direction: Direction):
    """sum_i (x - h_i)_+^q for each q in ``powers`` (descending: (h_i - x)_+^q).

    Uses sorted prefix sums of powers of the centered sample and the binomial
    expansion, so the cost is O(N log N + G) per row instead of O(N G).
    """
    hs = np.sort(h, axis=1) - center[:, None]
    xc = x - center[:, None]
    n = h.shape[1]
    top = max(powers)
    zeros = np.zeros((h.shape[0], 1))
    prefix = [None] + [np.concatenate([zeros, np.cumsum(hs**k, axis=1)], axis=1) for k in range(1, top + 1)]
    if direction is Direction.ASC:
        c = _ranks_of_grid(h, x, strict=False)
        part = [c.astype(float)] + [np.take_along_axis(prefix[k], c, axis=1) for k in range(1, top + 1)]
        base, sign = xc, -1.0
    else:
        c = _ranks_of_grid(h, x, strict=True)
        part = [(n - c).astype(float)] + [
            prefix[k][:, -1:] - np.take_along_axis(prefix[k], c, axis=1) for k in range(1, top + 1)
        ]
        base, sign = -xc, 1.0
    out = {}
    for q in powers:
        total = np.zeros_like(xc)
        for k in range(q + 1):
            total += comb(q, k) * sign**k * base ** (q - k) * part[k]
        out[q] = total
    return out


def t_statistic_batch(
    f: np.ndarray,
    g: np.ndarray,
    grids: np.ndarray,
    order: int,
    direction: Direction | str,
    var_floor: float = DEFAULT_VAR_FLOOR,
) -> np.ndarray:
    """T_j over ``grids`` for each row pair of ``f`` (B, Nf) and ``g`` (B, Ng).

    Returns a (B, G) array with NaN where the pooled variance is not above
    ``var_floor``. First order runs on exact integer counts so the ascending
    and descending statistics are exact negatives of each other off the
    sample points.
    """
    order = check_order(order)
    direction = Direction.parse(direction)
    f = np.atleast_2d(np.asarray(f, dtype=float))
    g = np.atleast_2d(np.asarray(g, dtype=float))
    grids = np.atleast_2d(np.asarray(grids, dtype=float))
    nf, ng = f.shape[1], g.shape[1]
    if order == 1:
        cf = _first_order_parts(f, grids, direction).astype(np.int64)
        cg = _first_order_parts(g, grids, direction).astype(np.int64)
        num = (cf * ng - cg * nf) / float(nf * ng)
        var = (cf * (nf - cf)) / float(nf) ** 3 + (cg * (ng - cg)) / float(ng) ** 3
    else:
        p = order - 1
        fact = float(factorial(p))
        lo = np.minimum(f.min(axis=1), g.min(axis=1))
        hi = np.maximum(f.max(axis=1), g.max(axis=1))
        center = 0.5 * (lo + hi)
        parts = []
        for h, n in ((f, nf), (g, ng)):
            sums = _power_sums(h, grids, center, (p, 2 * p), direction)
            level = sums[p] / (n * fact)
            second = sums[2 * p] / (n * fact**2)
            parts.append((level, np.maximum((second - level**2) / n, 0.0)))
        num = parts[0][0] - parts[1][0]
        var = parts[0][1] + parts[1][1]
    defined = var > var_floor
    t = np.full(var.shape, np.nan)
    t[defined] = num[defined] / np.sqrt(var[defined])
    return t


def stat_profile(
    f,
    g,
    grid,
    order: int,
    direction: Direction | str = Direction.ASC,
    var_floor: float = DEFAULT_VAR_FLOOR,
) -> StatProfile:
    """Test statistic profile of ``f`` against ``g`` on ``grid``.

    Raises :class:`DegenerateProfileError` if no grid point has pooled
    variance above ``var_floor``.
    """
    order = check_order(order)
    direction = Direction.parse(direction)
    if not var_floor > 0:
        raise DataError(f"var_floor must be positive, got {var_floor}")
    f = as_sample(f, "f")
    g = as_sample(g, "g")
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size < 1:
        raise DataError("grid is empty")
    if np.any(np.diff(grid) <= 0):
        raise DataError("grid must be strictly increasing")
    t = t_statistic_batch(f[None, :], g[None, :], grid[None, :], order, direction, var_floor)[0]
    if np.all(np.isnan(t)):
        raise DegenerateProfileError(
            f"order-{order} {direction.value} statistic undefined at all {grid.size} grid points"
        )
    return StatProfile(order, direction, grid, t)
