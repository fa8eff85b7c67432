"""Symmetric matrix of pairwise SD coefficients for a return panel."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import warnings
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._workers import parallel_map
from .bootstrap import BootstrapConfig, pair_test
from .errors import DataError, NumericalError
from .market_data import ReturnPanel
from .sd_core import Direction
from .seeding import derive_seed

logger = logging.getLogger(__name__)

_SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class SDMatrix:
    tickers: tuple[str, ...]
    order: int
    direction: Direction
    values: np.ndarray
    config_digest: str = ""
    panel_digest: str = ""
    seed: Optional[int] = None
    reps: Optional[int] = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "tickers", tuple(self.tickers))
        object.__setattr__(self, "direction", Direction.parse(self.direction))
        validate_values(values, len(self.tickers))

    @property
    def n(self) -> int:
        return len(self.tickers)

    def index(self, tickers: Sequence[str]) -> np.ndarray:
        pos = {t: i for i, t in enumerate(self.tickers)}
        try:
            return np.array([pos[t] for t in tickers], dtype=int)
        except KeyError as exc:
            raise DataError(f"ticker {exc.args[0]!r} not in matrix") from None

    def reindex(self, tickers: Sequence[str]) -> np.ndarray:
        """Values re-ordered (and restricted) to ``tickers``."""
        idx = self.index(tickers)
        return self.values[np.ix_(idx, idx)]

    def subset(self, tickers: Sequence[str]) -> "SDMatrix":
        return SDMatrix(tuple(tickers), self.order, self.direction, self.reindex(tickers),
                        self.config_digest, self.panel_digest, self.seed, self.reps)


def validate_values(values: np.ndarray, n: int) -> None:
    if values.shape != (n, n):
        raise DataError(f"matrix shape {values.shape} does not match {n} tickers")
    if not np.all(np.isfinite(values)):
        raise DataError("matrix has non-finite entries")
    if np.any(np.diag(values) != 0):
        raise DataError("matrix diagonal must be zero")
    if np.any(np.abs(values - values.T) > _SYMMETRY_TOL):
        i, k = np.unravel_index(np.argmax(np.abs(values - values.T)), values.shape)
        raise DataError(f"matrix is not symmetric: entry ({i},{k})={values[i, k]} vs ({k},{i})={values[k, i]}")
    if np.any(values < 0) or np.any(values > 1):
        raise DataError("matrix entries must lie in [0, 1]")


def config_digest(cfg: BootstrapConfig, panel_digest: str) -> str:
    payload = json.dumps({"cfg": cfg.to_dict(), "panel": panel_digest}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def pair_seed(root: int, a: str, b: str, order: int) -> int:
    """Seed for the unordered pair {a, b}.

    The direction is deliberately left out so ascending and descending
    matrices share resamples (first-order results then coincide exactly on
    grids that avoid sample points).
    """
    lo, hi = sorted((a, b))
    return derive_seed(root, "pair", lo, hi, order)


def _pair_coefficient(job, cfg: BootstrapConfig) -> float:
    a, b, x, y = job
    seeded = cfg.replace(seed=pair_seed(cfg.seed, a, b, cfg.order))
    try:
        return pair_test(x, y, seeded, keep_boot=False).coefficient
    except NumericalError as exc:
        raise type(exc)(f"pair ({a}, {b}): {exc}") from exc


def build_matrix(panel: ReturnPanel, cfg: BootstrapConfig, workers: int = 1) -> SDMatrix:
    """Run one bootstrap test per unordered asset pair and mirror the result."""
    panel.require_usable(min_assets=2, min_periods=2)
    n = panel.n_assets
    jobs = []
    for i in range(n):
        for k in range(i + 1, n):
            jobs.append((panel.tickers[i], panel.tickers[k], panel.returns[:, i], panel.returns[:, k]))
    logger.info("building %d x %d order-%d %s matrix (%d pair tests, B=%d)",
                n, n, cfg.order, cfg.direction.value, len(jobs), cfg.reps)
    coeffs = parallel_map(partial(_pair_coefficient, cfg=cfg), jobs, workers)
    values = np.zeros((n, n))
    rows, cols = np.triu_indices(n, k=1)
    values[rows, cols] = coeffs
    values[cols, rows] = coeffs
    digest = panel.digest()
    return SDMatrix(panel.tickers, cfg.order, cfg.direction, values,
                    config_digest(cfg, digest), digest, cfg.seed, cfg.reps)


def save_matrix(matrix: SDMatrix, path: str | Path) -> None:
    path = Path(path)
    meta = {
        "order": matrix.order,
        "direction": matrix.direction.value,
        "seed": "" if matrix.seed is None else matrix.seed,
        "reps": "" if matrix.reps is None else matrix.reps,
        "config_digest": matrix.config_digest,
        "panel_digest": matrix.panel_digest,
    }
    with path.open("w", newline="", encoding="utf-8") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ticker", *matrix.tickers])
        for t, row in zip(matrix.tickers, matrix.values):
            writer.writerow([t, *(repr(float(v)) for v in row)])


def load_matrix(path: str | Path, panel: Optional[ReturnPanel] = None) -> SDMatrix:
    """Read a matrix CSV, validating symmetry, zero diagonal and [0, 1] range.

    If ``panel`` is given and its digest differs from the stored one a
    warning is issued.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"matrix file not found: {path}")
    meta: dict[str, str] = {}
    body: list[str] = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)
    rows = list(csv.reader(body))
    if not rows or rows[0][0].strip() != "ticker":
        raise DataError(f"{path}: expected header row 'ticker,<t1>,...'")
    tickers = tuple(t.strip() for t in rows[0][1:])
    if [r[0].strip() for r in rows[1:]] != list(tickers):
        raise DataError(f"{path}: row labels must match the header tickers")
    try:
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    matrix = SDMatrix(
        tickers,
        int(meta.get("order", 1)),
        meta.get("direction", "asc"),
        values.reshape(len(tickers), len(tickers)) if values.size else np.zeros((0, 0)),
        meta.get("config_digest", ""),
        meta.get("panel_digest", ""),
        int(meta["seed"]) if meta.get("seed") else None,
        int(meta["reps"]) if meta.get("reps") else None,
    )
    if panel is not None and matrix.panel_digest and matrix.panel_digest != panel.digest():
        warnings.warn(
            f"{path}: matrix was built from panel {matrix.panel_digest}, "
            f"current panel is {panel.digest()}",
            stacklevel=2,
        )
    return matrix
