import csv
import math

import numpy as np
import pytest

from attribmkt import cli
from attribmkt.config import (
    KINDS,
    ConfigError,
    ExperimentConfig,
    default_config,
    parse_config,
    serialize_config,
)
from attribmkt.design import monopoly_intensity
from attribmkt.experiments import parallel_map, worker_count
from attribmkt.io import GridResult, emit_csv, emit_svg, fmt, write_rows


def write_config(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


class TestConfig:
    def test_defaults_fill_every_key(self):
        cfg = parse_config("[experiment]\nkind = rho-grid\n")
        assert cfg["b_ratio_points"] == 41 and cfg["model"] == "aggregate"
        assert cfg.output_dir == "out" and cfg.emit_svg is False

    def test_typed_values(self):
        cfg = parse_config("[experiment]\nkind = br-sim\nemit_svg = yes\n\n[parameters]\n"
                           "n_firms = 3\nb = 1, 0.5\ncost_matrix = 0.1, 0.2; 0.3, 0.4\n")
        assert cfg["n_firms"] == 3
        assert cfg["b"] == (1.0, 0.5)
        assert cfg["cost_matrix"] == ((0.1, 0.2), (0.3, 0.4))
        assert cfg.emit_svg is True

    @pytest.mark.parametrize("text", [
        "[experiment]\nkind = nope\n",
        "[experiment]\nkind = rho-grid\n[parameters]\nunknown = 1\n",
        "[experiment]\nkind = rho-grid\ncolour = red\n",
        "[experiment]\nkind = rho-grid\n[extra]\nx = 1\n",
        "[parameters]\nx = 1\n",
        "[experiment]\nkind = rho-grid\n[parameters]\nb_ratio_points = many\n",
        "[experiment]\nkind = rho-grid\n[parameters]\nmodel = mean\n",
        "[experiment]\nkind = br-sim\n[parameters]\ncost_matrix = 1, 2; 3\n",
        "not an ini file",
    ])
    def test_rejections(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_unknown_parameter_in_constructor(self):
        with pytest.raises(ConfigError):
            ExperimentConfig("price-eq", {"colour": 1})

    @pytest.mark.parametrize("kind", KINDS)
    def test_round_trip(self, kind):
        text = serialize_config(default_config(kind))
        again = serialize_config(parse_config(text))
        assert text == again
        assert parse_config(again).parameters == default_config(kind).parameters

    def test_round_trip_preserves_floats(self):
        cfg = parse_config("[experiment]\nkind = design-monopoly\n[parameters]\nc = 0.1\nb = 0.3, 0.7\n")
        back = parse_config(serialize_config(cfg))
        assert back["c"] == 0.1 and back["b"] == (0.3, 0.7)


class TestIO:
    def test_fmt(self):
        assert fmt(0.1) == "0.10000000000000001"
        assert float(fmt(1 / 3)) == 1 / 3
        assert fmt(True) == "1" and fmt(np.bool_(False)) == "0"
        assert fmt(np.int64(7)) == "7"

    def test_empty_grid_header_only(self, tmp_path):
        grid = GridResult(("a", "b"), (np.zeros(0), np.zeros(0)), {"v": np.zeros((0, 0))})
        path = emit_csv(grid, tmp_path / "g.csv")
        assert path.read_bytes() == b"a,b,v\r\n"

    def test_axis_major_order(self, tmp_path):
        grid = GridResult(("x", "y"), (np.array([1.0, 2.0]), np.array([10.0, 20.0])),
                          {"v": np.array([[1.0, 2.0], [3.0, 4.0]])})
        rows = read_csv(emit_csv(grid, tmp_path / "g.csv"))
        assert rows[0] == ["x", "y", "v"]
        assert [r[:2] for r in rows[1:]] == [["1", "10"], ["1", "20"], ["2", "10"], ["2", "20"]]
        assert [r[2] for r in rows[1:]] == ["1", "2", "3", "4"]

    def test_grid_shape_checked(self):
        with pytest.raises(ValueError):
            GridResult(("x", "y"), (np.ones(2), np.ones(3)), {"v": np.ones((3, 2))})

    def test_svg(self, tmp_path):
        grid = GridResult(("x", "y"), (np.array([1.0, 2.0]), np.array([10.0, 20.0])),
                          {"v": np.array([[0.0, np.nan], [0.5, 1.0]])})
        path = emit_svg(grid, "v", tmp_path / "g.svg", "t <1>")
        text = path.read_text(encoding="utf-8")
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
        assert "t &lt;1&gt;" in text and "#cccccc" in text
        assert text.count("<rect") == 4 + 50
        assert emit_svg(grid, "v", tmp_path / "h.svg", "t <1>").read_bytes() == path.read_bytes()

    def test_write_error_has_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            write_rows(blocker / "sub" / "a.csv", ["a"], [])


class TestParallel:
    def test_worker_cap(self, monkeypatch):
        monkeypatch.setenv("ATTRIBMKT_THREADS", "1")
        assert worker_count() == 1
        monkeypatch.setenv("ATTRIBMKT_THREADS", "lots")
        with pytest.raises(ValueError):
            worker_count()

    def test_order_kept(self):
        assert parallel_map(math.sqrt, [1.0, 4.0, 9.0, 16.0], workers=2) == [1.0, 2.0, 3.0, 4.0]


class TestCommandLine:
    def test_every_kind_has_a_subcommand(self):
        parser = cli.build_parser()
        for kind in KINDS:
            assert parser.parse_args([kind]).command == kind

    def test_price_eq_defaults(self, tmp_path, capsys):
        assert cli.main(["price-eq", "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "price_equilibrium.csv")
        mono = [r for r in rows[1:] if r[0] == "monopoly"]
        assert float(mono[0][2]) == 0.5
        assert float(mono[0][3]) == pytest.approx(1 / 6)
        closed = [r for r in rows[1:] if r[0] == "closed_form"]
        assert float(closed[0][2]) == pytest.approx(1 / 3)
        assert (tmp_path / "config.ini").exists()
        assert "price_equilibrium.csv" in capsys.readouterr().out

    def test_design_monopoly(self, tmp_path):
        assert cli.main(["design-monopoly", "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "monopoly_summary.csv")
        t = monopoly_intensity((1, 0.8, 0.6, 0.4), (1, 2, 0.5, 1.5), 0.1, -1)
        assert float(rows[1][1]) == t

    def test_design_competition(self, tmp_path):
        assert cli.main(["design-competition", "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "symmetric_intensity.csv")
        assert len(rows) == 7
        assert float(rows[1][1]) == pytest.approx(float(rows[1][3]), abs=1e-9)

    def test_rotation_demo(self, tmp_path):
        assert cli.main(["rotation-demo", "--out", str(tmp_path), "--seed", "5"]) == 0
        rows = read_csv(tmp_path / "rotation_recovery.csv")[1:]
        assert len(rows) == 20
        for r in rows:
            assert abs(math.remainder(float(r[3]) - float(r[4]), math.pi)) < 1e-8
            assert float(r[5]) < 1e-12

    def test_single_firm_sim_matches_closed_form(self, tmp_path):
        cfg = write_config(tmp_path, "[experiment]\nkind = br-sim\n[parameters]\nn_firms = 1\nn_seeds = 2\n")
        assert cli.main(["br-sim", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        t = monopoly_intensity((1, 0.8, 0.6, 0.4), (1, 2, 0.5, 1.5), 0.1, -1)
        for seed in (0, 1):
            final = read_csv(tmp_path / "o" / f"final_seed{seed}.csv")
            assert abs(float(final[1][3]) - t) < 1e-3
        header = read_csv(tmp_path / "o" / "trajectory_seed0.csv")[0]
        assert header == ["round", "firm", "attr", "value", "profit", "active"]

    def test_br_sim_svg(self, tmp_path):
        cfg = write_config(tmp_path, "[experiment]\nkind = br-sim\n[parameters]\n"
                                     "n_firms = 2\nn_seeds = 1\nmax_rounds = 3\n")
        with pytest.warns(RuntimeWarning):
            assert cli.main(["br-sim", "--config", str(cfg), "--out", str(tmp_path), "--svg"]) == 0
        assert (tmp_path / "design_seed0.svg").exists()

    def test_small_grids(self, tmp_path):
        cfg = write_config(tmp_path, "[experiment]\nkind = welfare-grid\n[parameters]\n"
                                     "c_points = 4\nphi_points = 3\nb_points = 3\ngamma_points = 3\n")
        assert cli.main(["welfare-grid", "--config", str(cfg), "--out", str(tmp_path), "--svg"]) == 0
        assert len(read_csv(tmp_path / "welfare_c_phi.csv")) == 13
        assert (tmp_path / "welfare_b_gamma_cs_difference.svg").exists()
        cfg = write_config(tmp_path, "[experiment]\nkind = rho-grid\n[parameters]\n"
                                     "b_ratio_points = 3\ngamma_ratio_points = 3\n", "rho.ini")
        assert cli.main(["rho-grid", "--config", str(cfg), "--out", str(tmp_path), "--svg"]) == 0
        rows = read_csv(tmp_path / "rho_monopoly.csv")
        assert rows[0] == ["b_ratio", "gamma_ratio", "rho_star"]
        assert float(rows[1][2]) == 1.0  # (1/4, 1/16) lies on the squared-taste diagonal
        assert (tmp_path / "rho_duopoly.svg").exists()

    def test_deterministic_bytes(self, tmp_path):
        cfg = write_config(tmp_path, "[experiment]\nkind = br-sim\n[parameters]\n"
                                     "n_firms = 2\nn_attrs = 2\nb = 1, 0.5\ngamma = 1, 2\nn_seeds = 2\n")
        for d in ("a", "b"):
            assert cli.main(["br-sim", "--config", str(cfg), "--out", str(tmp_path / d), "--seed", "9"]) == 0
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
        for name in names:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_config_echo_round_trips(self, tmp_path):
        assert cli.main(["design-monopoly", "--out", str(tmp_path)]) == 0
        echoed = parse_config((tmp_path / "config.ini").read_text(encoding="utf-8"))
        assert echoed.parameters == default_config("design-monopoly").parameters

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "[experiment]\nkind = rho-grid\n[parameters]\nfoo = 1\n")
        assert cli.main(["rho-grid", "--config", str(cfg)]) == 1
        assert "foo" in capsys.readouterr().err

    def test_kind_mismatch(self, tmp_path):
        cfg = write_config(tmp_path, "[experiment]\nkind = rho-grid\n")
        assert cli.main(["br-sim", "--config", str(cfg)]) == 1

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["br-sim", "--config", str(tmp_path / "none.ini")]) == 1

    def test_zero_cost_rejected(self, tmp_path):
        cfg = write_config(tmp_path, "[experiment]\nkind = br-sim\n[parameters]\ncost = 0\n")
        assert cli.main(["br-sim", "--config", str(cfg), "--out", str(tmp_path)]) == 1

    def test_negative_seed(self):
        assert cli.main(["price-eq", "--seed", "-1"]) == 1

    def test_numerical_failure_exit_code(self, tmp_path, monkeypatch):
        from attribmkt import experiments, pricing

        def boom(*args, **kwargs):
            raise pricing.ConvergenceError("forced", 1.0)
        monkeypatch.setitem(experiments.RUNNERS, "price-eq", boom)
        assert cli.main(["price-eq", "--out", str(tmp_path)]) == 2
