"""Command-line client, run in-process through ``main(argv)``.

Exit-code contract: 0 success, 1 input error (including usage errors,
which argparse would otherwise report as 2), 2 numerical or transport
failure.  All numbers on stdout are serialized at 17 significant digits.
"""

import csv
import importlib
import json
import textwrap

import pytest

from qvol import __version__
from qvol.cli import main
from qvol.errors import NumericalError


@pytest.fixture(autouse=True)
def _no_ambient_seed(monkeypatch):
    monkeypatch.delenv("QVOL_SEED", raising=False)


@pytest.fixture(scope="module")
def law_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "law.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query", "volume"])
        for i in range(1, 201):
            writer.writerow([f"q{i}", repr(1000.0 / i**0.7745)])
    return str(path)


@pytest.fixture(scope="module")
def ladder_csv(tmp_path_factory):
    # Decade ladder whose survivors follow S(l) = 1e4 / l exactly.
    path = tmp_path_factory.mktemp("cli") / "ladder.csv"
    values = [100.0] * 900 + [1000.0] * 90 + [10000.0] * 9
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query", "reported_volume"])
        for i, v in enumerate(values):
            writer.writerow([f"q{i}", v])
    return str(path)


def _write_config(tmp_path, text, name="sim.cfg"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


SMALL_CAMPAIGN = """\
    # small campaign
    n_queries = 5000
    c = 1000.0
    beta = 0.7745
    schemes = uniform, nonuniform
    sample_sizes = 100, 200
    methods = nls
    replicates = 2
    base_seed = 9
"""


class TestExitCodes:
    def test_missing_required_arguments(self, capsys):
        assert main(["estimate", "--c", "5"]) == 1
        err = capsys.readouterr().err
        assert "error: input:" in err
        assert "--beta" in err

    def test_missing_command(self, capsys):
        assert main([]) == 1

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert capsys.readouterr().out.strip() == __version__

    def test_missing_file(self, capsys):
        assert main(["fit-continuous", "/no/such/file.csv"]) == 1
        assert "error: input:" in capsys.readouterr().err

    def test_unreachable_server(self, capsys):
        code = main([
            "--server", "http://127.0.0.1:9",
            "estimate", "--c", "10", "--beta", "0.8", "--thresholds", "5",
        ])
        assert code == 2
        assert "error: transport:" in capsys.readouterr().err

    def test_numerical_failure(self, law_csv, capsys, monkeypatch):
        service_module = importlib.import_module("qvol.service.app")

        def _blow_up(sample, method):
            raise NumericalError("solver diverged")

        monkeypatch.setattr(
            service_module, "fit_continuous_pipeline", _blow_up
        )
        assert main(["fit-continuous", law_csv]) == 2
        assert capsys.readouterr().err.strip() == (
            "error: numerical: solver diverged"
        )


class TestFitContinuousCommand:
    def test_json_report(self, law_csv, capsys):
        assert main(["fit-continuous", law_csv]) == 0
        body = json.loads(capsys.readouterr().out)
        assert list(body) == [
            "method", "c", "beta", "delta_c", "delta_beta",
            "cutoff_rank", "ks", "rows",
        ]
        assert body["method"] == "NLS"
        assert body["c"] == pytest.approx(1000.0, rel=1e-9)
        assert body["beta"] == pytest.approx(0.7745, abs=1e-9)
        assert body["cutoff_rank"] == 200
        assert body["rows"] == []

    def test_output_is_bit_stable(self, law_csv, capsys):
        main(["fit-continuous", law_csv])
        first = capsys.readouterr().out
        main(["fit-continuous", law_csv])
        assert capsys.readouterr().out == first

    def test_thresholds_add_rows(self, law_csv, capsys):
        assert main(
            ["fit-continuous", law_csv, "--thresholds", "120,600"]
        ) == 0
        body = json.loads(capsys.readouterr().out)
        assert [row["threshold_v"] for row in body["rows"]] == [120.0, 600.0]
        assert body["rows"][0]["n_hat"] > body["rows"][1]["n_hat"]

    def test_csv_layout(self, law_csv, capsys):
        main(["fit-continuous", law_csv, "--csv", "--thresholds", "120"])
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "method,c,beta,delta_c,delta_beta,cutoff_rank,ks"
        assert lines[2] == ""
        assert lines[3] == (
            "threshold_v,threshold_v_monthly,n_hat,delta_n,v_hat,delta_v"
        )
        fit_fields = lines[1].split(",")
        assert fit_fields[0] == "NLS"
        # 17-significant-digit serialization round-trips exactly.
        beta = float(fit_fields[2])
        assert format(beta, ".17g") == fit_fields[2]
        assert beta == pytest.approx(0.7745, abs=1e-9)

    def test_csn_method(self, law_csv, capsys):
        assert main(
            ["fit-continuous", law_csv, "--method", "csn-max"]
        ) == 0
        assert json.loads(capsys.readouterr().out)["method"] == "CSN_MAX"


class TestFitBinnedCommand:
    def test_json_report(self, ladder_csv, capsys):
        assert main(["fit-binned", ladder_csv]) == 0
        body = json.loads(capsys.readouterr().out)
        assert body["method"] == "CHI2"
        assert body["c"] == pytest.approx(1e4, rel=1e-6)
        assert body["beta"] == pytest.approx(1.0, abs=1e-6)

    def test_constrained_method(self, ladder_csv, capsys):
        assert main(
            ["fit-binned", ladder_csv, "--method", "constrained"]
        ) == 0
        body = json.loads(capsys.readouterr().out)
        assert body["method"] == "CSN_CONSTRAINED_CHI2"

    def test_gamma_that_empties_ladder(self, ladder_csv, capsys):
        assert main(["fit-binned", ladder_csv, "--gamma", "0.01"]) == 1
        assert "error: input:" in capsys.readouterr().err


class TestEstimateCommand:
    def test_json_rows(self, capsys):
        assert main([
            "estimate", "--c", "1000", "--beta", "0.8",
            "--thresholds", "10,100",
        ]) == 0
        body = json.loads(capsys.readouterr().out)
        assert body["method"] is None
        assert body["cutoff_rank"] is None
        assert len(body["rows"]) == 2
        for row in body["rows"]:
            assert row["delta_n"] == 0
            assert row["delta_v"] == 0

    def test_csv_rows_only(self, capsys):
        main([
            "estimate", "--c", "1000", "--beta", "0.8",
            "--thresholds", "10", "--csv",
        ])
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == (
            "threshold_v,threshold_v_monthly,n_hat,delta_n,v_hat,delta_v"
        )
        assert len(lines) == 2

    def test_bad_threshold_token(self, capsys):
        assert main([
            "estimate", "--c", "1000", "--beta", "0.8",
            "--thresholds", "12,abc",
        ]) == 1
        assert "not a number" in capsys.readouterr().err


class TestSimulateCommand:
    def test_campaign_from_config(self, tmp_path, capsys):
        config = _write_config(tmp_path, SMALL_CAMPAIGN)
        assert main(["simulate", "--config", config]) == 0
        body = json.loads(capsys.readouterr().out)
        assert body["base_seed"] == 9
        assert [
            (cell["scheme"], cell["sample_size"]) for cell in body["cells"]
        ] == [
            ("uniform", 100), ("uniform", 200),
            ("nonuniform", 100), ("nonuniform", 200),
        ]

    def test_output_is_bit_stable(self, tmp_path, capsys):
        config = _write_config(tmp_path, SMALL_CAMPAIGN)
        main(["simulate", "--config", config])
        first = capsys.readouterr().out
        main(["simulate", "--config", config])
        assert capsys.readouterr().out == first

    def test_seed_flag_beats_config(self, tmp_path, capsys):
        config = _write_config(tmp_path, SMALL_CAMPAIGN)
        main(["simulate", "--config", config, "--seed", "5"])
        assert json.loads(capsys.readouterr().out)["base_seed"] == 5

    def test_default_seed_notice(self, tmp_path, capsys):
        config = _write_config(
            tmp_path,
            """\
            n_queries = 2000
            c = 1000.0
            beta = 0.7745
            schemes = uniform
            sample_sizes = 100
            methods = nls
            replicates = 1
            """,
        )
        assert main(["simulate", "--config", config]) == 0
        captured = capsys.readouterr()
        assert json.loads(captured.out)["base_seed"] == 42
        assert captured.err.strip() == (
            "qvol: no seed given; using default 42 (set --seed or QVOL_SEED)"
        )

    def test_env_seed_fallback(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("QVOL_SEED", "7")
        config = _write_config(
            tmp_path,
            """\
            n_queries = 2000
            c = 1000.0
            beta = 0.7745
            schemes = uniform
            sample_sizes = 100
            methods = nls
            replicates = 1
            """,
        )
        assert main(["simulate", "--config", config]) == 0
        captured = capsys.readouterr()
        assert json.loads(captured.out)["base_seed"] == 7
        assert captured.err == ""

    def test_bad_env_seed(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("QVOL_SEED", "lots")
        config = _write_config(
            tmp_path,
            """\
            n_queries = 2000
            c = 1000.0
            beta = 0.7745
            schemes = uniform
            sample_sizes = 100
            methods = nls
            replicates = 1
            """,
        )
        assert main(["simulate", "--config", config]) == 1
        assert "QVOL_SEED" in capsys.readouterr().err

    def test_binned_campaign_with_ladder(self, tmp_path, capsys):
        floor = 100.0 / 100**0.7745
        config = _write_config(
            tmp_path,
            f"""\
            n_queries = 100
            c = 100.0
            beta = 0.7745
            schemes = uniform
            sample_sizes = 10
            methods = chi2
            replicates = 2
            base_seed = 3
            binned = true
            binning_floor = {floor}
            binning_first_edge = {floor * 4}
            binning_ratio = 4.0
            binning_bin_count = 3
            """,
        )
        assert main(["simulate", "--config", config, "--csv"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("scheme,sample_size,method,")
        fields = lines[1].split(",")
        assert fields[0] == "uniform"
        assert int(fields[3]) + int(fields[4]) == 2

    def test_unknown_config_key(self, tmp_path, capsys):
        config = _write_config(tmp_path, "frobnicate = 3\n")
        assert main(["simulate", "--config", config]) == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_malformed_config_line(self, tmp_path, capsys):
        config = _write_config(tmp_path, "n_queries 100\n")
        assert main(["simulate", "--config", config]) == 1
        assert "expected key = value" in capsys.readouterr().err

    def test_incomplete_binning_spec(self, tmp_path, capsys):
        config = _write_config(
            tmp_path,
            """\
            n_queries = 100
            c = 100.0
            beta = 0.7745
            base_seed = 1
            binning_floor = 1.0
            """,
        )
        assert main(["simulate", "--config", config]) == 1
        assert "incomplete binning spec" in capsys.readouterr().err


class TestExportPlotCommand:
    def test_population_to_file(self, tmp_path, capsys):
        out = tmp_path / "ranks.csv"
        assert main([
            "export-plot", "--out", str(out),
            "--n-queries", "5", "--c", "10", "--beta", "1",
        ]) == 0
        assert out.read_text().strip().splitlines() == [
            "rank,volume",
            "1,10.0",
            "2,5.0",
            "3,3.333333333333333",
            "4,2.5",
            "5,2.0",
        ]

    def test_population_to_stdout(self, capsys):
        assert main([
            "export-plot", "--out", "-",
            "--n-queries", "3", "--c", "10", "--beta", "1",
        ]) == 0
        assert capsys.readouterr().out.strip().splitlines() == [
            "rank,volume", "1,10.0", "2,5.0", "3,3.333333333333333",
        ]

    def test_scheme_requires_sample_size(self, capsys):
        assert main([
            "export-plot", "--out", "-",
            "--n-queries", "100", "--c", "10", "--beta", "0.7745",
            "--scheme", "nonuniform",
        ]) == 1
        assert "--sample-size" in capsys.readouterr().err

    def test_sampled_export_is_seeded(self, tmp_path, capsys):
        argv = [
            "export-plot", "--out", "-",
            "--n-queries", "1000", "--c", "100", "--beta", "0.7745",
            "--scheme", "nonuniform", "--sample-size", "50", "--seed", "7",
        ]
        assert main(argv) == 0
        first = capsys.readouterr().out
        assert main(argv) == 0
        assert capsys.readouterr().out == first
        assert len(first.strip().splitlines()) == 51
