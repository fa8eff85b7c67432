"""Price ingestion, weekly aggregation and balanced log-return panels.

Input CSV layout is long format with header ``date,ticker,close``. Return
panels are written wide: ``period,<ticker1>,<ticker2>,...``.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
PRICE_HEADER = ("date", "ticker", "close")


def parse_date(text: str) -> date:
    """Parse a strict ``YYYY-MM-DD`` date."""
    text = text.strip()
    if not _DATE_RE.match(text):
        raise ValueError(f"expected YYYY-MM-DD, got {text!r}")
    return datetime.strptime(text, "%Y-%m-%d").date()


@dataclass(frozen=True)
class PricePanel:
    """Closing prices, one row per date and one column per ticker.

    Missing observations are stored as NaN.
    """

    dates: tuple[date, ...]
    tickers: tuple[str, ...]
    prices: np.ndarray

    def __post_init__(self) -> None:
        prices = np.asarray(self.prices, dtype=float)
        if prices.shape != (len(self.dates), len(self.tickers)):
            raise DataError(
                f"price matrix shape {prices.shape} does not match "
                f"{len(self.dates)} dates x {len(self.tickers)} tickers"
            )
        if len(set(self.tickers)) != len(self.tickers):
            raise DataError("tickers must be unique")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")
        present = prices[~np.isnan(prices)]
        if np.any(present <= 0) or not np.all(np.isfinite(present)):
            raise DataError("prices must be finite and strictly positive")
        object.__setattr__(self, "prices", prices)

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.prices).sum())

    def column(self, ticker: str) -> np.ndarray:
        return self.prices[:, self.tickers.index(ticker)]


@dataclass(frozen=True)
class ReturnPanel:
    """Balanced matrix of log returns (rows are periods, columns are assets)."""

    periods: tuple[date, ...]
    tickers: tuple[str, ...]
    returns: np.ndarray
    report: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        returns = np.asarray(self.returns, dtype=float)
        if returns.ndim != 2 or returns.shape != (len(self.periods), len(self.tickers)):
            raise DataError(
                f"return matrix shape {returns.shape} does not match "
                f"{len(self.periods)} periods x {len(self.tickers)} tickers"
            )
        if len(set(self.tickers)) != len(self.tickers):
            raise DataError("tickers must be unique")
        if not np.all(np.isfinite(returns)):
            raise DataError("return panel must be balanced: found missing or non-finite entries")
        object.__setattr__(self, "returns", returns)

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    def column(self, ticker: str) -> np.ndarray:
        return self.returns[:, self.tickers.index(ticker)]

    def select(self, tickers: Iterable[str]) -> "ReturnPanel":
        """Sub-panel restricted to ``tickers`` (kept in the order given)."""
        tickers = tuple(tickers)
        missing = [t for t in tickers if t not in self.tickers]
        if missing:
            raise DataError(f"unknown tickers: {missing}")
        idx = [self.tickers.index(t) for t in tickers]
        return ReturnPanel(self.periods, tickers, self.returns[:, idx].copy())

    def require_usable(self, min_assets: int = 2, min_periods: int = 10) -> None:
        if self.n_assets < min_assets:
            raise DataError(f"need at least {min_assets} assets, panel has {self.n_assets}")
        if self.n_periods < min_periods:
            raise DataError(f"need at least {min_periods} periods, panel has {self.n_periods}")

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update("\x1f".join(self.tickers).encode())
        h.update("\x1f".join(p.isoformat() for p in self.periods).encode())
        h.update(np.ascontiguousarray(self.returns, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def load_prices(path: str | Path) -> PricePanel:
    """Read a long-format ``date,ticker,close`` CSV into a :class:`PricePanel`.

    Raises :class:`DataError` naming the offending line for unparsable
    rows, duplicated ``(date, ticker)`` keys and non-positive prices.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"price file not found: {path}")
    cells: dict[tuple[date, str], float] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: line 1: empty file, expected header 'date,ticker,close'")
        if tuple(h.strip().lower() for h in header) != PRICE_HEADER:
            raise DataError(f"{path}: line 1: expected header 'date,ticker,close', got {header!r}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"{path}: line {line}: expected 3 fields, got {len(row)}")
            try:
                day = parse_date(row[0])
                price = float(row[2])
            except ValueError as exc:
                raise DataError(f"{path}: line {line}: {exc}") from None
            ticker = row[1].strip()
            if not ticker:
                raise DataError(f"{path}: line {line}: empty ticker")
            if not math.isfinite(price):
                raise DataError(f"{path}: line {line}: non-finite price {row[2]!r}")
            if price <= 0:
                raise DataError(f"{path}: line {line}: non-positive price {price!r} for {ticker}")
            key = (day, ticker)
            if key in cells:
                raise DataError(f"{path}: line {line}: duplicate row for {ticker} on {day.isoformat()}")
            cells[key] = price
    if not cells:
        raise DataError(f"{path}: no data rows")

    dates = tuple(sorted({d for d, _ in cells}))
    tickers = tuple(sorted({t for _, t in cells}))
    row_of = {d: i for i, d in enumerate(dates)}
    col_of = {t: j for j, t in enumerate(tickers)}
    prices = np.full((len(dates), len(tickers)), np.nan)
    for (d, t), p in cells.items():
        prices[row_of[d], col_of[t]] = p
    return PricePanel(dates, tickers, prices)


def to_weekly(panel: PricePanel) -> PricePanel:
    """Collapse to one row per ISO-8601 week.

    Each asset's weekly value is its last observed close inside the week;
    the row is dated by the last observation date of the week.
    """
    if not panel.dates:
        return panel
    weeks = [d.isocalendar()[:2] for d in panel.dates]
    out_dates: list[date] = []
    rows: list[np.ndarray] = []
    start = 0
    for i in range(1, len(weeks) + 1):
        if i < len(weeks) and weeks[i] == weeks[start]:
            continue
        block = panel.prices[start:i]
        last = np.full(block.shape[1], np.nan)
        for j in range(block.shape[1]):
            present = np.flatnonzero(~np.isnan(block[:, j]))
            if present.size:
                last[j] = block[present[-1], j]
        out_dates.append(panel.dates[i - 1])
        rows.append(last)
        start = i
    return PricePanel(tuple(out_dates), panel.tickers, np.vstack(rows))


def log_returns(panel: PricePanel, min_coverage: float = 1.0) -> ReturnPanel:
    """Balanced log-return panel from prices.

    Assets observed on fewer than ``min_coverage`` of the rows are dropped;
    rows still missing a price for any retained asset are then removed, and
    returns ``ln(p_t / p_{t-1})`` are taken between consecutive retained rows.
    The returned panel's ``report`` lists what was dropped.
    """
    if not 0.0 <= min_coverage <= 1.0:
        raise DataError(f"min_coverage must lie in [0, 1], got {min_coverage}")
    n_rows = len(panel.dates)
    if n_rows < 2:
        raise DataError(f"need at least 2 price rows, got {n_rows}")
    observed = ~np.isnan(panel.prices)
    coverage = observed.mean(axis=0)
    keep = coverage >= min_coverage - 1e-12
    dropped = {t: float(c) for t, c, k in zip(panel.tickers, coverage, keep) if not k}
    if not keep.any():
        raise DataError(f"all {len(panel.tickers)} assets dropped at min_coverage={min_coverage}")
    prices = panel.prices[:, keep]
    tickers = tuple(t for t, k in zip(panel.tickers, keep) if k)
    complete = ~np.isnan(prices).any(axis=1)
    prices = prices[complete]
    dates = [d for d, c in zip(panel.dates, complete) if c]
    if len(dates) < 2:
        raise DataError("fewer than 2 complete price rows remain after filtering")
    returns = np.log(prices[1:] / prices[:-1])
    if dropped:
        logger.info("dropped %d assets below coverage %.3f: %s", len(dropped), min_coverage, sorted(dropped))
    report = {
        "dropped_tickers": dropped,
        "dropped_rows": int(n_rows - len(dates)),
        "min_coverage": float(min_coverage),
    }
    return ReturnPanel(tuple(dates[1:]), tickers, returns, report)


def write_returns(panel: ReturnPanel, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["period", *panel.tickers])
        for day, row in zip(panel.periods, panel.returns):
            writer.writerow([day.isoformat(), *(repr(float(v)) for v in row)])


def read_returns(path: str | Path) -> ReturnPanel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"return file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "period" or len(header) < 2:
            raise DataError(f"{path}: line 1: expected header 'period,<ticker>,...'")
        tickers = tuple(h.strip() for h in header[1:])
        periods: list[date] = []
        rows: list[list[float]] = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {reader.line_num}: expected {len(header)} fields")
            try:
                periods.append(parse_date(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataError(f"{path}: line {reader.line_num}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return ReturnPanel(tuple(periods), tickers, np.array(rows, dtype=float))


def panel_from_arrays(
    returns: np.ndarray,
    tickers: Sequence[str] | None = None,
    start: date = date(2020, 1, 3),
) -> ReturnPanel:
    """Wrap a raw (periods x assets) array as a weekly-dated ReturnPanel."""
    returns = np.asarray(returns, dtype=float)
    if returns.ndim == 1:
        returns = returns[:, None]
    n_periods, n_assets = returns.shape
    if tickers is None:
        tickers = [f"A{i:02d}" for i in range(n_assets)]
    base = start.toordinal()
    periods = tuple(date.fromordinal(base + 7 * i) for i in range(n_periods))
    return ReturnPanel(periods, tuple(tickers), returns)
