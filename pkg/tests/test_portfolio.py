from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from sdcluster.errors import ConfigError, DataError, NumericalError
from sdcluster.market_data import panel_from_arrays
from sdcluster.portfolio import (
    alpha_beta,
    alpha_beta_table,
    draw_experiment,
    gmvp,
    gmvp_weights,
    market_series,
    write_alpha_beta_csv,
    write_scatter_csv,
)
from sdcluster.synthetic import factor_panel


def test_equal_variance_uncorrelated():
    w, ridge = gmvp_weights(np.eye(2))
    np.testing.assert_allclose(w, [0.5, 0.5])
    assert ridge == 0.0


def test_inverse_variance_weights():
    w, _ = gmvp_weights(np.diag([1.0, 3.0]))
    np.testing.assert_allclose(w, [0.75, 0.25], atol=1e-12)


def test_duplicated_columns_use_ridge():
    x = np.random.default_rng(0).normal(size=(50, 1))
    stats = gmvp(panel_from_arrays(np.hstack([x, x, x * 0.5 + 0.01]), ["A", "B", "C"]))
    assert stats.ridge > 0
    assert sum(stats.weights.values()) == pytest.approx(1.0, abs=1e-10)
    assert stats.risk >= 0


def test_non_finite_covariance():
    with pytest.raises(NumericalError):
        gmvp_weights(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_gmvp_needs_two_assets():
    with pytest.raises(DataError):
        gmvp(panel_from_arrays(np.random.default_rng(0).normal(size=(10, 3)), ["A", "B", "C"]), ["A"])


@settings(max_examples=30)
@given(st.integers(2, 6), st.integers(0, 10_000))
def test_gmvp_optimality(n, seed):
    rng = np.random.default_rng(seed)
    returns = rng.normal(size=(40, n)) @ rng.normal(size=(n, n)) * 0.01
    panel = panel_from_arrays(returns, [f"T{i}" for i in range(n)])
    stats = gmvp(panel)
    w = np.array(list(stats.weights.values()))
    cov = np.cov(returns, rowvar=False)
    assert w.sum() == pytest.approx(1.0, abs=1e-10)
    assert stats.risk <= np.ones(n) @ cov @ np.ones(n) / n**2 + 1e-15
    # first-order condition: cov w is proportional to the ones vector
    grad = cov @ w
    assert np.ptp(grad) <= 1e-8 * np.abs(grad).max()
    assert stats.risk == pytest.approx(float(w @ cov @ w))
    assert stats.exp_return == pytest.approx(float(returns.mean(axis=0) @ w))


def test_gmvp_matches_numerical_optimizer():
    rng = np.random.default_rng(3)
    returns = rng.normal(size=(60, 4)) @ rng.normal(size=(4, 4)) * 0.02
    cov = np.cov(returns, rowvar=False)
    res = minimize(lambda w: w @ cov @ w, np.full(4, 0.25), method="SLSQP",
                   constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1}], options={"ftol": 1e-16})
    w, _ = gmvp_weights(cov)
    np.testing.assert_allclose(w, res.x, atol=1e-5)


def test_alpha_beta_exact_cases():
    m = np.random.default_rng(1).normal(size=30)
    ab = alpha_beta(m, m)
    assert ab.alpha == pytest.approx(0.0, abs=1e-15) and ab.beta == pytest.approx(1.0)
    ab = alpha_beta(2 * m, m)
    assert ab.alpha == pytest.approx(0.0, abs=1e-15) and ab.beta == pytest.approx(2.0)


def test_alpha_beta_noisy_within_standard_errors():
    rng = np.random.default_rng(11)
    m = rng.normal(0.002, 0.02, 250)
    a = 0.001 + 0.8 * m + rng.normal(0, 0.01, 250)
    ab = alpha_beta(a, m)
    (beta, alpha), cov = np.polyfit(m, a, 1, cov=True)
    assert ab.beta == pytest.approx(beta) and ab.alpha == pytest.approx(alpha)
    se_beta, se_alpha = np.sqrt(np.diag(cov))
    assert abs(ab.beta - 0.8) <= 3 * se_beta
    assert abs(ab.alpha - 0.001) <= 3 * se_alpha


def test_alpha_beta_residuals_orthogonal():
    rng = np.random.default_rng(12)
    m = rng.normal(size=100)
    a = 0.3 * m + rng.normal(size=100)
    ab = alpha_beta(a, m)
    resid = a - ab.alpha - ab.beta * m
    assert abs(np.corrcoef(resid, m)[0, 1]) <= 1e-10
    assert abs(resid.mean()) <= 1e-12


def test_alpha_beta_errors():
    with pytest.raises(NumericalError):
        alpha_beta([1.0, 2.0, 3.0], [1.0, 1.0, 1.0])
    with pytest.raises(DataError):
        alpha_beta([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(DataError):
        alpha_beta([1.0, 2.0, 3.0], [1.0, 2.0])


def test_alpha_beta_table_uses_panel_mean(tmp_path):
    panel = panel_from_arrays(np.random.default_rng(2).normal(size=(30, 3)), ["A", "B", "C"])
    np.testing.assert_allclose(market_series(panel), panel.returns.mean(axis=1))
    rows = alpha_beta_table(panel, {"A": 0, "B": 1})
    assert [r[0] for r in rows] == ["A", "B", "C"]
    # betas against an equal-weight market average to one
    assert np.mean([r[2] for r in rows]) == pytest.approx(1.0)
    write_alpha_beta_csv(rows, tmp_path / "ab.csv")
    with (tmp_path / "ab.csv").open() as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["ticker", "alpha", "beta", "cluster"]
    assert table[3][3] == ""


def two_pools():
    panel, _ = factor_panel(((0.001, 0.01), (0.001, 0.05)), 6, 200, seed=3, rho=0.5, prefixes=("L", "H"))
    return panel, [t for t in panel.tickers if t.startswith("L")], [t for t in panel.tickers if t.startswith("H")]


def test_low_sigma_pool_has_lower_risk(tmp_path):
    panel, low, high = two_pools()
    exp = draw_experiment(panel, low, high, 3, 100, seed=5)
    assert exp.pools[0].mean_risk < exp.pools[1].mean_risk
    assert len(exp.pools[0].risks) == 100
    write_scatter_csv(exp, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "pool,draw,risk,exp_return" and len(lines) == 201


def test_pool_of_exactly_m_has_no_dispersion():
    panel, low, high = two_pools()
    exp = draw_experiment(panel, low[:3], high[:3], 3, 10, seed=1)
    for pool in exp.pools:
        assert pool.std_risk == 0.0 and pool.std_return == 0.0
        assert len(set(pool.risks)) == 1


def test_single_draw_equals_that_portfolio():
    panel, low, high = two_pools()
    exp = draw_experiment(panel, low, high, 3, 1, seed=2)
    for pool in exp.pools:
        assert pool.std_risk == 0.0
        assert pool.mean_risk == pool.risks[0] and pool.mean_return == pool.returns[0]


def test_equal_pools_give_equal_summaries():
    panel, low, _ = two_pools()
    exp = draw_experiment(panel, low, list(low), 3, 20, seed=9)
    a, b = exp.pools
    assert a.risks == b.risks and a.returns == b.returns


def test_draw_experiment_is_seeded():
    panel, low, high = two_pools()
    assert draw_experiment(panel, low, high, 2, 15, seed=4) == draw_experiment(panel, low, high, 2, 15, seed=4)


def test_draw_experiment_errors():
    panel, low, high = two_pools()
    with pytest.raises(ConfigError):
        draw_experiment(panel, low, high, 1, 10, seed=0)
    with pytest.raises(ConfigError):
        draw_experiment(panel, low, high, 3, 0, seed=0)
    with pytest.raises(DataError, match="fewer than"):
        draw_experiment(panel, low[:2], high, 3, 10, seed=0)
    with pytest.raises(DataError, match="not in the panel"):
        draw_experiment(panel, low[:3] + ["ZZZ"], high, 3, 10, seed=0)
