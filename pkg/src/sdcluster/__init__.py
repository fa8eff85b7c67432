"""Clustering of return series with stochastic-dominance distances."""

from .bootstrap import BootstrapConfig, PairTestResult, critical_value, pair_test
from .clustering import Clustering
from .coefficient_matrix import SDMatrix, build_matrix, load_matrix, save_matrix
from .dominance import ClusterRanking, DominanceVerdict, Outcome, directional_test, rank_centers, refine_pool
from .errors import ConfigError, DataError, NumericalError, SDClusterError
from .hierarchical import Dendrogram, sd_hierarchical
from .kmeans import sd_kmeans
from .market_data import PricePanel, ReturnPanel, load_prices, log_returns, to_weekly
from .portfolio import AlphaBeta, PortfolioStats, alpha_beta, draw_experiment, gmvp
from .sd_core import Direction, make_grid, sd_integral, sd_variance, stat_profile
from .validity import ValidityReport, sd_dbi, sd_sc, select_k

__version__ = "0.1.0"
