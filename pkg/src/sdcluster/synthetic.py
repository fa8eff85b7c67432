"""Seeded synthetic return panels with known group structure.

Each group shares one common factor, ``r_it = mu_g + sigma_g (rho z_gt +
sqrt(1 - rho^2) e_it)``. The factor and every idiosyncratic series are
standardized in-sample, so every asset's sample mean is exactly ``mu_g``
and group members are strongly co-moving.
"""

from __future__ import annotations

import csv
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from .market_data import ReturnPanel, panel_from_arrays
from .seeding import rng_for

# (mu, sigma) per group
TWO_REGIMES = ((0.001, 0.015), (0.004, 0.05))
THREE_GROUPS = ((0.0, 0.01), (0.0, 0.035), (0.02, 0.01))


def _standardize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean(axis=0)) / x.std(axis=0)


def factor_panel(
    groups: Sequence[tuple[float, float]],
    per_group: int,
    periods: int,
    seed: int,
    rho: float = 0.9,
    prefixes: Sequence[str] | None = None,
) -> tuple[ReturnPanel, np.ndarray]:
    """Panel of ``len(groups) * per_group`` assets and the true group labels."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    prefixes = prefixes or [chr(ord("A") + g) for g in range(len(groups))]
    columns, tickers, labels = [], [], []
    for g, (mu, sigma) in enumerate(groups):
        rng = rng_for(seed, "group", g)
        z = _standardize(rng.standard_normal(periods))
        e = _standardize(rng.standard_normal((periods, per_group)))
        block = mu + sigma * (rho * z[:, None] + np.sqrt(1.0 - rho**2) * e)
        columns.append(block)
        tickers += [f"{prefixes[g]}{i + 1}" for i in range(per_group)]
        labels += [g] * per_group
    return panel_from_arrays(np.hstack(columns), tickers), np.array(labels)


def two_regime_panel(seed: int = 7, per_group: int = 6, periods: int = 260) -> tuple[ReturnPanel, np.ndarray]:
    """Calm low-return assets (``L*``) next to volatile higher-return ones (``H*``)."""
    return factor_panel(TWO_REGIMES, per_group, periods, seed, prefixes=("L", "H"))


def three_group_panel(
    seed: int = 11, per_group: int = 4, periods: int = 520, rho: float = 0.99
) -> tuple[ReturnPanel, np.ndarray]:
    """Three tightly co-moving groups separated by location or scale."""
    return factor_panel(THREE_GROUPS, per_group, periods, seed, rho=rho)


def write_price_csv(panel: ReturnPanel, path: str | Path, start_price: float = 100.0) -> None:
    """Long-format ``date,ticker,close`` prices whose log returns reproduce ``panel``.

    The first row sits one week before the first return period.
    """
    prices = start_price * np.exp(np.vstack([np.zeros(panel.n_assets), np.cumsum(panel.returns, axis=0)]))
    first = date.fromordinal(panel.periods[0].toordinal() - 7)
    dates = (first, *panel.periods)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "ticker", "close"])
        for d, row in zip(dates, prices):
            for t, p in zip(panel.tickers, row):
                writer.writerow([d.isoformat(), t, repr(float(p))])


def bundled_prices() -> Path:
    """Path of the 12-asset demonstration price file shipped with the package."""
    return Path(__file__).with_name("data") / "synthetic_12.csv"
