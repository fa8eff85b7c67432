"""Command-line driver: ingest, matrix, cluster, select-k, rank, refine, portfolio, heatmap, pipeline.

Settings come from built-in defaults, then an optional flat ``key=value``
config file, then command-line flags. All randomness derives from the one
root ``seed``.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bootstrap import BootstrapConfig
from .clustering import Clustering, read_clustering, write_clustering
from .coefficient_matrix import SDMatrix, build_matrix, load_matrix, save_matrix
from .dominance import (
    ClusterRanking,
    DominanceVerdict,
    Outcome,
    dominance_table,
    optimal_members,
    rank_centers,
    refine_pool,
    write_ranking,
)
from .errors import ConfigError, DataError, NumericalError, SDClusterError
from .hierarchical import sd_hierarchical, write_dendrogram
from .kmeans import sd_kmeans
from .market_data import ReturnPanel, load_prices, log_returns, read_returns, to_weekly, write_returns
from .portfolio import alpha_beta_table, draw_experiment, write_alpha_beta_csv, write_scatter_csv
from .sd_core import Direction
from .seeding import derive_seed
from .validity import select_k, write_select_k_csv

logger = logging.getLogger("sdcluster")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


@dataclass(frozen=True)
class RunConfig:
    input: Optional[str] = None
    out_dir: str = "out"
    direction: str = "asc"
    order: int = 1
    reps: int = 1000
    grid_points: int = 100
    var_floor: float = 1e-12
    alpha: float = 0.05
    k: Optional[int] = None
    k_min: int = 2
    k_max: int = 6
    algorithm: str = "hierarchical"
    seed: int = 0
    workers: int = 1
    max_iter: int = 100
    iter_reps: int = 300
    weekly: bool = True
    min_coverage: float = 1.0
    portfolio_size: int = 3
    draws: int = 100

    def __post_init__(self) -> None:
        try:
            Direction.parse(self.direction)
        except DataError as exc:
            raise ConfigError(str(exc)) from None
        if self.algorithm == "hier":
            object.__setattr__(self, "algorithm", "hierarchical")
        if self.algorithm not in ("kmeans", "hierarchical"):
            raise ConfigError(f"algorithm must be kmeans or hierarchical, got {self.algorithm!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.k is not None and self.k < 1:
            raise ConfigError(f"k must be positive, got {self.k}")
        if not 2 <= self.k_min <= self.k_max:
            raise ConfigError(f"need 2 <= k_min <= k_max, got [{self.k_min}, {self.k_max}]")
        for name in ("workers", "max_iter", "iter_reps", "draws"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.portfolio_size < 2:
            raise ConfigError(f"portfolio_size must be >= 2, got {self.portfolio_size}")
        if not 0.0 <= self.min_coverage <= 1.0:
            raise ConfigError(f"min_coverage must lie in [0, 1], got {self.min_coverage}")
        self.bootstrap()  # validates reps, grid_points, order, seed

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def bootstrap(self) -> BootstrapConfig:
        """Test settings for the current order; each order gets its own seed stream."""
        return BootstrapConfig(
            reps=self.reps,
            seed=derive_seed(self.seed, "stage", self.order),
            grid_points=self.grid_points,
            var_floor=self.var_floor,
            order=self.order,
            direction=self.direction,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, text: str):
    default = _FIELDS[name].default
    kind = type(default) if default is not None else int
    if name == "input":
        kind = str
    try:
        if kind is bool:
            lowered = text.strip().lower()
            if lowered not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(text)
            return lowered in ("1", "true", "yes")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text.strip()
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def read_config_file(path: str | Path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {number}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{path}: line {number}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


# ---------------------------------------------------------------------------
# file helpers


def _require(path: str | Path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{what} not found: {path}")
    return path


def _write_json(data, path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: str | Path, what: str):
    path = _require(path, what)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from None


def read_pool(path: str | Path) -> list[str]:
    data = _read_json(path, "pool file")
    try:
        return [str(t) for t in data["pool"]]
    except (KeyError, TypeError):
        raise DataError(f"{path}: expected an object with a 'pool' list") from None


def write_pool(pool: Sequence[str], path: str | Path, **extra) -> None:
    _write_json({"pool": list(pool), **extra}, path)


def read_ranking(path: str | Path) -> ClusterRanking:
    data = _read_json(path, "ranking file")

    def verdict(v: dict) -> DominanceVerdict:
        lo, hi = v["crit"]
        return DominanceVerdict(int(v["order"]), Direction.parse(v["direction"]), Outcome(v["outcome"]),
                                float(v["alpha"]), float(v["max_t"]), float(v["min_t"]), float(hi), float(lo))

    try:
        return ClusterRanking(
            int(data["order"]),
            Direction.parse(data["direction"]),
            float(data["alpha"]),
            {tuple(v["pair"]): verdict(v) for v in data["verdicts"]},
            tuple(tuple(g) for g in data["groups"]),
            {tuple(v["pair"]): verdict(v) for v in data["group_verdicts"]},
            tuple(data["optimal"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed ranking ({exc})") from None


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(cfg: RunConfig, prices_path: str | Path, returns_path: str | Path) -> ReturnPanel:
    prices = load_prices(_require(prices_path, "price file"))
    if cfg.weekly:
        prices = to_weekly(prices)
    panel = log_returns(prices, cfg.min_coverage)
    panel.require_usable()
    write_returns(panel, returns_path)
    _write_json(panel.report, Path(returns_path).with_suffix(".report.json"))
    logger.info("ingest: %d assets x %d periods -> %s", panel.n_assets, panel.n_periods, returns_path)
    return panel


def _load_panel(path: str | Path) -> ReturnPanel:
    panel = read_returns(_require(path, "returns file"))
    panel.require_usable()
    return panel


def cmd_matrix(cfg: RunConfig, returns_path: str | Path, matrix_path: str | Path) -> SDMatrix:
    panel = _load_panel(returns_path)
    matrix = build_matrix(panel, cfg.bootstrap(), cfg.workers)
    save_matrix(matrix, matrix_path)
    return matrix


def _cluster(cfg: RunConfig, panel: ReturnPanel, matrix: Optional[SDMatrix], K: int, out: Path) -> Clustering:
    if cfg.algorithm == "kmeans":
        return sd_kmeans(panel, K, cfg.bootstrap(), max_iter=cfg.max_iter, iter_reps=cfg.iter_reps,
                         workers=cfg.workers)
    if matrix is None:
        raise ConfigError("hierarchical clustering needs a coefficient matrix")
    clustering, dendrogram = sd_hierarchical(matrix.subset(panel.tickers), K, panel)
    write_dendrogram(dendrogram, out.with_suffix(".dendrogram.json"))
    return clustering


def cmd_cluster(
    cfg: RunConfig,
    returns_path: str | Path,
    matrix_path: Optional[str | Path],
    clustering_path: str | Path,
) -> Clustering:
    if cfg.k is None:
        raise ConfigError("cluster needs k; use select-k to choose it")
    panel = _load_panel(returns_path)
    matrix = load_matrix(_require(matrix_path, "matrix file"), panel) if matrix_path else None
    clustering = _cluster(cfg, panel, matrix, cfg.k, Path(clustering_path))
    write_clustering(clustering, clustering_path)
    return clustering


def cmd_select_k(
    cfg: RunConfig,
    returns_path: str | Path,
    matrix_path: str | Path,
    scores_path: str | Path,
    clustering_path: str | Path,
) -> Clustering:
    """Score every K in range, write the scores CSV and the winning clustering."""
    panel = _load_panel(returns_path)
    matrix = load_matrix(_require(matrix_path, "matrix file"), panel)
    k_max = min(cfg.k_max, panel.n_assets)
    k_min = min(cfg.k_min, k_max)
    result = select_k(panel, cfg.algorithm, (k_min, k_max), cfg.bootstrap(), matrix=matrix,
                      max_iter=cfg.max_iter, iter_reps=cfg.iter_reps, workers=cfg.workers)
    write_select_k_csv(result, scores_path)
    best = result.clusterings[result.best_k]
    write_clustering(best, clustering_path)
    if result.dendrogram is not None:
        write_dendrogram(result.dendrogram, Path(clustering_path).with_suffix(".dendrogram.json"))
    logger.info("select-k: K*=%d", result.best_k)
    return best


def cmd_rank(cfg: RunConfig, returns_path: str | Path, clustering_path: str | Path,
             ranking_path: str | Path) -> ClusterRanking:
    panel = _load_panel(returns_path)
    clustering = read_clustering(_require(clustering_path, "clustering file"), panel)
    ranking = rank_centers(clustering, cfg.order, cfg.direction, cfg.alpha, cfg.bootstrap())
    write_ranking(ranking, ranking_path)
    Path(ranking_path).with_suffix(".table.txt").write_text(dominance_table(ranking), encoding="utf-8")
    return ranking


def cmd_refine(cfg: RunConfig, returns_path: str | Path, clustering_path: str | Path,
               ranking_path: str | Path, pool_path: str | Path) -> list[str]:
    panel = _load_panel(returns_path)
    clustering = read_clustering(_require(clustering_path, "clustering file"), panel)
    ranking = read_ranking(ranking_path)
    pool = refine_pool(panel, clustering, ranking, cfg=cfg.bootstrap())
    write_pool(pool, pool_path, optimal=optimal_members(clustering, ranking))
    return pool


def cmd_optimal(cfg: RunConfig, returns_path: str | Path, clustering_path: str | Path,
                ranking_path: str | Path, pool_path: str | Path) -> list[str]:
    """Members of the optimal clusters, with every other panel asset listed as ``rest``."""
    panel = _load_panel(returns_path)
    clustering = read_clustering(_require(clustering_path, "clustering file"), panel)
    chosen = optimal_members(clustering, read_ranking(ranking_path))
    write_pool(chosen, pool_path, rest=[t for t in panel.tickers if t not in chosen])
    return chosen


def cmd_portfolio(
    cfg: RunConfig,
    returns_path: str | Path,
    pool_path: str | Path,
    out_prefix: str | Path,
    clustering_path: Optional[str | Path] = None,
) -> dict:
    """Draw experiment of the pool against the rest of the panel plus alpha/beta rows."""
    panel = _load_panel(returns_path)
    pool = read_pool(pool_path)
    rest = [t for t in panel.tickers if t not in set(pool)]
    experiment = draw_experiment(panel, pool, rest, cfg.portfolio_size, cfg.draws,
                                 derive_seed(cfg.seed, "portfolio"), labels=("selected", "rejected"))
    clusters = None
    if clustering_path:
        clusters = read_clustering(_require(clustering_path, "clustering file")).assignments
    prefix = str(out_prefix)
    write_scatter_csv(experiment, prefix + "_scatter.csv")
    write_alpha_beta_csv(alpha_beta_table(panel, clusters), prefix + "_alpha_beta.csv")
    summary = experiment.to_dict()
    _write_json(summary, prefix + "_summary.json")
    return summary


def heatmap_order(matrix: SDMatrix, clustering: Optional[Clustering]) -> list[str]:
    """Tickers sorted by cluster, then by name."""
    if clustering is None:
        return sorted(matrix.tickers)
    labels = clustering.assignments
    return sorted(matrix.tickers, key=lambda t: (labels.get(t, clustering.K), t))


def render_ppm(values: np.ndarray, scale: int = 1) -> bytes:
    """Binary P6 image, gray ``255 * (1 - c)`` so larger coefficients are darker."""
    gray = np.rint(255.0 * (1.0 - np.clip(values, 0.0, 1.0))).astype(np.uint8)
    if scale > 1:
        gray = np.kron(gray, np.ones((scale, scale), dtype=np.uint8))
    h, w = gray.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.repeat(gray[:, :, None], 3, axis=2).tobytes()


def cmd_heatmap(cfg: RunConfig, matrix_path: str | Path, clustering_path: Optional[str | Path],
                image_path: str | Path, scale: int = 1) -> list[str]:
    if scale < 1:
        raise ConfigError(f"scale must be >= 1, got {scale}")
    matrix = load_matrix(_require(matrix_path, "matrix file"))
    clustering = read_clustering(_require(clustering_path, "clustering file")) if clustering_path else None
    order = heatmap_order(matrix, clustering)
    Path(image_path).write_bytes(render_ppm(matrix.reindex(order), scale))
    save_matrix(matrix.subset(order), Path(image_path).with_suffix(".csv"))
    return order


# ---------------------------------------------------------------------------
# pipeline


def _stage(cfg: RunConfig, returns_path: Path, out: Path, order: int) -> tuple[ClusterRanking, Path, Path]:
    """Matrix, clustering, ranking and heatmap for one order; returns the ranking and artifact paths."""
    cfg = cfg.replace(order=order)
    tag = f"o{order}"
    matrix_path = out / f"matrix_{tag}.csv"
    clustering_path = out / f"clustering_{tag}.json"
    ranking_path = out / f"ranking_{tag}.json"
    cmd_matrix(cfg, returns_path, matrix_path)
    if cfg.k is None:
        cmd_select_k(cfg, returns_path, matrix_path, out / f"select_k_{tag}.csv", clustering_path)
    else:
        cmd_cluster(cfg, returns_path, matrix_path, clustering_path)
    cmd_rank(cfg, returns_path, clustering_path, ranking_path)
    cmd_heatmap(cfg, matrix_path, clustering_path, out / f"heatmap_{tag}.ppm")
    return read_ranking(ranking_path), clustering_path, ranking_path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_pipeline(cfg: RunConfig) -> dict:
    """First-order clustering and ranking, refinement, second-order clustering on the
    refined pool, and the draw experiment of its optimal clusters against the rest.
    """
    if cfg.input is None:
        raise ConfigError("pipeline needs an input price file")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    returns_path = out / "returns.csv"
    cmd_ingest(cfg, cfg.input, returns_path)

    cfg1 = cfg.replace(order=1)
    _, clustering1, ranking1 = _stage(cfg, returns_path, out, 1)
    pool = cmd_refine(cfg1, returns_path, clustering1, ranking1, out / "pool_o1.json")

    pool_returns = out / "returns_pool.csv"
    write_returns(_load_panel(returns_path).select(pool), pool_returns)
    _stage(cfg, pool_returns, out, 2)
    cfg2 = cfg.replace(order=2)
    cmd_optimal(cfg2, pool_returns, out / "clustering_o2.json", out / "ranking_o2.json", out / "optimal_pool.json")
    summary = cmd_portfolio(cfg, returns_path, out / "optimal_pool.json", out / "portfolio", clustering1)

    files = sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "config": {k: v for k, v in cfg.to_dict().items() if k != "out_dir"},
        "seeds": {
            "root": cfg.seed,
            "order1": cfg1.bootstrap().seed,
            "order2": cfg2.bootstrap().seed,
            "portfolio": derive_seed(cfg.seed, "portfolio"),
        },
        "digests": {
            "panel": _load_panel(returns_path).digest(),
            "pool_panel": _load_panel(pool_returns).digest(),
            "files": {p.name: _sha256(p) for p in files},
        },
        "refined_pool": pool,
        "optimal_pool": read_pool(out / "optimal_pool.json"),
        "portfolio": summary,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    _write_json(manifest, out / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# argument parsing


def _add_settings(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("settings (override the config file)")
    g.add_argument("--config", help="key=value settings file")
    g.add_argument("--direction", choices=["asc", "desc"])
    g.add_argument("--order", type=int, choices=[1, 2, 3])
    g.add_argument("--reps", "-B", type=int, help="bootstrap replications")
    g.add_argument("--grid-points", type=int)
    g.add_argument("--var-floor", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--k", "-K", type=int)
    g.add_argument("--k-min", type=int)
    g.add_argument("--k-max", type=int)
    g.add_argument("--algorithm", choices=["kmeans", "hierarchical", "hier"])
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--max-iter", type=int)
    g.add_argument("--iter-reps", type=int)
    g.add_argument("--min-coverage", type=float)
    g.add_argument("--daily", dest="weekly", action="store_false", default=None,
                   help="keep the input frequency instead of weekly closes")
    g.add_argument("--portfolio-size", type=int)
    g.add_argument("--draws", type=int)
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdcluster", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="prices CSV -> balanced log-return panel")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="returns.csv")
    _add_settings(p)

    p = sub.add_parser("matrix", help="pairwise SD coefficient matrix")
    p.add_argument("--returns", required=True)
    p.add_argument("--output", default="matrix.csv")
    _add_settings(p)

    p = sub.add_parser("cluster", help="cluster with a fixed K")
    p.add_argument("--returns", required=True)
    p.add_argument("--matrix")
    p.add_argument("--output", default="clustering.json")
    _add_settings(p)

    p = sub.add_parser("select-k", help="choose K by SD-SC and write the best clustering")
    p.add_argument("--returns", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--scores", default="select_k.csv")
    p.add_argument("--output", default="clustering.json")
    _add_settings(p)

    p = sub.add_parser("rank", help="dominance ranking of cluster centers")
    p.add_argument("--returns", required=True)
    p.add_argument("--clustering", required=True)
    p.add_argument("--output", default="ranking.json")
    _add_settings(p)

    p = sub.add_parser("refine", help="refined pool for the next order")
    p.add_argument("--returns", required=True)
    p.add_argument("--clustering", required=True)
    p.add_argument("--ranking", required=True)
    p.add_argument("--output", default="pool.json")
    p.add_argument("--optimal-only", action="store_true", help="write only optimal-cluster members")
    _add_settings(p)

    p = sub.add_parser("portfolio", help="draw experiment of a pool against the rest")
    p.add_argument("--returns", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--clustering")
    p.add_argument("--prefix", default="portfolio")
    _add_settings(p)

    p = sub.add_parser("heatmap", help="P6 heatmap of a coefficient matrix in cluster order")
    p.add_argument("--matrix", required=True)
    p.add_argument("--clustering")
    p.add_argument("--output", default="heatmap.ppm")
    p.add_argument("--scale", type=int, default=1, help="pixels per matrix cell")
    _add_settings(p)

    p = sub.add_parser("pipeline", help="full two-order run on a price file")
    p.add_argument("--input")
    p.add_argument("--out-dir")
    _add_settings(p)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for name in _FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return RunConfig(**values)


def run(args: argparse.Namespace) -> None:
    if args.command == "pipeline":
        cfg = resolve_config(args)
        cmd_pipeline(cfg)
        return
    # single commands take explicit paths; --input belongs to ingest only
    cfg = resolve_config(argparse.Namespace(**{k: v for k, v in vars(args).items() if k != "input"}))
    if args.command == "ingest":
        cmd_ingest(cfg, args.input, args.output)
    elif args.command == "matrix":
        cmd_matrix(cfg, args.returns, args.output)
    elif args.command == "cluster":
        cmd_cluster(cfg, args.returns, args.matrix, args.output)
    elif args.command == "select-k":
        cmd_select_k(cfg, args.returns, args.matrix, args.scores, args.output)
    elif args.command == "rank":
        cmd_rank(cfg, args.returns, args.clustering, args.output)
    elif args.command == "refine":
        if args.optimal_only:
            cmd_optimal(cfg, args.returns, args.clustering, args.ranking, args.output)
        else:
            cmd_refine(cfg, args.returns, args.clustering, args.ranking, args.output)
    elif args.command == "portfolio":
        cmd_portfolio(cfg, args.returns, args.pool, args.prefix, args.clustering)
    elif args.command == "heatmap":
        cmd_heatmap(cfg, args.matrix, args.clustering, args.output, args.scale)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except NumericalError as exc:
        logger.error("numerical error: %s", exc)
        return EXIT_NUMERICAL
    except SDClusterError as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except OSError as exc:
        logger.error("i/o error: %s", exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
