from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from sdcluster.cli import (
    RunConfig,
    build_parser,
    cmd_pipeline,
    heatmap_order,
    main,
    read_config_file,
    render_ppm,
    resolve_config,
)
from sdcluster.clustering import Clustering
from sdcluster.coefficient_matrix import SDMatrix, load_matrix, save_matrix
from sdcluster.errors import ConfigError
from sdcluster.market_data import read_returns, write_returns
from sdcluster.synthetic import factor_panel, write_price_csv

FAST = ["--reps", "60", "--iter-reps", "40", "--draws", "5", "--seed", "3"]


@pytest.fixture(scope="module")
def prices(tmp_path_factory):
    panel, _ = factor_panel(((0.001, 0.01), (0.004, 0.04)), 3, 60, seed=2, prefixes=("L", "H"))
    path = tmp_path_factory.mktemp("data") / "prices.csv"
    write_price_csv(panel, path)
    return path


def test_heatmap_two_by_two(tmp_path):
    save_matrix(SDMatrix(("A", "B"), 1, "asc", np.array([[0.0, 1.0], [1.0, 0.0]])), tmp_path / "m.csv")
    assert main(["heatmap", "--matrix", str(tmp_path / "m.csv"), "--output", str(tmp_path / "h.ppm")]) == 0
    data = (tmp_path / "h.ppm").read_bytes()
    assert data == b"P6\n2 2\n255\n" + bytes([255] * 3 + [0] * 3 + [0] * 3 + [255] * 3)
    assert load_matrix(tmp_path / "h.csv").tickers == ("A", "B")


def test_render_scale_and_gray_levels():
    img = render_ppm(np.array([[0.0, 0.5], [0.5, 0.0]]), scale=2)
    header, pixels = img[:11], img[11:]
    assert header == b"P6\n4 4\n255\n"
    assert len(pixels) == 4 * 4 * 3
    assert pixels[3] == 255 and pixels[6] == 128


def test_heatmap_orders_by_cluster_then_ticker():
    m = SDMatrix(("d", "a", "c", "b"), 1, "asc", np.zeros((4, 4)))
    clustering = Clustering(("a", "b", "c", "d"), [1, 0, 1, 0], 2)
    assert heatmap_order(m, clustering) == ["b", "d", "a", "c"]
    assert heatmap_order(m, None) == ["a", "b", "c", "d"]


def test_zero_reps_is_config_error(tmp_path, prices):
    assert main(["ingest", "--input", str(prices), "--output", str(tmp_path / "r.csv")]) == 0
    code = main(["matrix", "--returns", str(tmp_path / "r.csv"), "--output", str(tmp_path / "m.csv"), "-B", "0"])
    assert code == 2
    assert not (tmp_path / "m.csv").exists()


def test_missing_input_is_data_error(tmp_path):
    assert main(["ingest", "--input", str(tmp_path / "nope.csv"), "--output", str(tmp_path / "r.csv")]) == 3
    assert main(["matrix", "--returns", str(tmp_path / "nope.csv")]) == 3


def test_bad_price_file_is_data_error(tmp_path):
    (tmp_path / "p.csv").write_text("date,ticker,close\n2024-01-02,AAA,-3\n")
    assert main(["ingest", "--input", str(tmp_path / "p.csv"), "--output", str(tmp_path / "r.csv")]) == 3


def test_config_file_and_flag_precedence(tmp_path):
    (tmp_path / "run.cfg").write_text("# settings\nreps = 77\ndirection=desc\nalgorithm = hier\nweekly = no\n")
    values = read_config_file(tmp_path / "run.cfg")
    assert values == {"reps": 77, "direction": "desc", "algorithm": "hier", "weekly": False}
    cfg = RunConfig(**values)
    assert cfg.algorithm == "hierarchical"
    args = build_parser().parse_args(["pipeline", "--config", str(tmp_path / "run.cfg"), "--reps", "12"])
    cfg = resolve_config(args)
    assert cfg.reps == 12 and cfg.direction == "desc" and not cfg.weekly


@pytest.mark.parametrize("text", ["reps = many\n", "colour = red\n", "just words\n"])
def test_bad_config_file(tmp_path, text):
    (tmp_path / "bad.cfg").write_text(text)
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "bad.cfg")
    assert main(["pipeline", "--config", str(tmp_path / "bad.cfg"), "--input", "x.csv"]) == 2


@pytest.mark.parametrize("changes", [{"reps": 0}, {"alpha": 1.5}, {"k_min": 1}, {"k_min": 5, "k_max": 3},
                                     {"portfolio_size": 1}, {"order": 4}, {"direction": "up"}])
def test_run_config_validation(changes):
    with pytest.raises(ConfigError):
        RunConfig(**changes)


def test_stage_seeds_differ_by_order():
    cfg = RunConfig(seed=5)
    assert cfg.bootstrap().seed != cfg.replace(order=2).bootstrap().seed


def run_pipeline(prices, out, *extra):
    return main(["pipeline", "--input", str(prices), "--out-dir", str(out), "--k", "2", *FAST, *extra])


def test_pipeline_outputs_and_rerun(tmp_path, prices):
    assert run_pipeline(prices, tmp_path / "a") == 0
    assert run_pipeline(prices, tmp_path / "b") == 0
    a, b = tmp_path / "a", tmp_path / "b"
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for expected in ("manifest.json", "optimal_pool.json", "portfolio_scatter.csv", "portfolio_alpha_beta.csv",
                     "heatmap_o1.ppm", "heatmap_o2.ppm", "pool_o1.json"):
        assert expected in names
    for name in names:
        if name == "manifest.json":
            continue
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    ma.pop("created"), mb.pop("created")
    assert ma == mb
    assert ma["seeds"]["root"] == 3


def test_pipeline_matches_manual_chain(tmp_path, prices):
    auto, manual = tmp_path / "auto", tmp_path / "manual"
    manual.mkdir()
    assert run_pipeline(prices, auto) == 0

    def cli(*args, order=1):
        assert main([*args, "--k", "2", "--order", str(order), *FAST]) == 0

    m = manual
    cli("ingest", "--input", str(prices), "--output", str(m / "returns.csv"))
    for order, returns in ((1, m / "returns.csv"), (2, m / "returns_pool.csv")):
        tag = f"o{order}"
        if order == 2:
            pool = json.loads((m / "pool_o1.json").read_text())["pool"]
            write_returns(read_returns(m / "returns.csv").select(pool), returns)
        cli("matrix", "--returns", str(returns), "--output", str(m / f"matrix_{tag}.csv"), order=order)
        cli("cluster", "--returns", str(returns), "--matrix", str(m / f"matrix_{tag}.csv"),
            "--output", str(m / f"clustering_{tag}.json"), order=order)
        cli("rank", "--returns", str(returns), "--clustering", str(m / f"clustering_{tag}.json"),
            "--output", str(m / f"ranking_{tag}.json"), order=order)
        cli("heatmap", "--matrix", str(m / f"matrix_{tag}.csv"), "--clustering", str(m / f"clustering_{tag}.json"),
            "--output", str(m / f"heatmap_{tag}.ppm"), order=order)
        if order == 1:
            cli("refine", "--returns", str(returns), "--clustering", str(m / "clustering_o1.json"),
                "--ranking", str(m / "ranking_o1.json"), "--output", str(m / "pool_o1.json"))
    cli("refine", "--optimal-only", "--returns", str(m / "returns_pool.csv"),
        "--clustering", str(m / "clustering_o2.json"), "--ranking", str(m / "ranking_o2.json"),
        "--output", str(m / "optimal_pool.json"), order=2)
    cli("portfolio", "--returns", str(m / "returns.csv"), "--pool", str(m / "optimal_pool.json"),
        "--clustering", str(m / "clustering_o1.json"), "--prefix", str(m / "portfolio"))

    produced = sorted(p.name for p in manual.iterdir())
    for name in produced:
        assert (auto / name).read_bytes() == (manual / name).read_bytes(), name
    assert set(produced) == {p.name for p in auto.iterdir()} - {"manifest.json"}


def test_pipeline_requires_input(tmp_path):
    with pytest.raises(ConfigError):
        cmd_pipeline(RunConfig(out_dir=str(tmp_path)))


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sdcluster", "ingest", "--input", str(tmp_path / "none.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 3
    assert "not found" in proc.stderr
