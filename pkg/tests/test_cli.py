#!/usr/bin/env python3
"""
Tests for the aftkat command line.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from aftkat.cli import EXIT_ERROR, EXIT_FLAGGED, EXIT_OK, _scenario_params, build_parser, main
from aftkat.models import AftkatError
from aftkat.study import StudyReport


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = main(["simulate", "--scenario", "S_small_nohet", "--n", "80", "--p", "4",
                 "--seed", "3", "--block-size", "2", "--out", str(out), "--quiet"])
    assert code == EXIT_OK
    return out


def data_args(directory):
    return ["--survival", str(directory / "survival.tsv"),
            "--covariates", str(directory / "covariates.tsv"),
            "--genotypes", str(directory / "genotypes.tsv")]


class TestSimulate:
    def test_files_written(self, simulated):
        for name in ("survival.tsv", "covariates.tsv", "genotypes.tsv", "genesets.tsv"):
            assert (simulated / name).exists()
        sets = (simulated / "genesets.tsv").read_text().splitlines()
        assert sets[0] == "set\tmarkers"
        assert len(sets) == 4

    def test_same_seed_same_files(self, simulated, tmp_path):
        main(["simulate", "--scenario", "S_small_nohet", "--n", "80", "--p", "4",
              "--seed", "3", "--block-size", "2", "--out", str(tmp_path), "--quiet"])
        assert (tmp_path / "survival.tsv").read_text() == (simulated / "survival.tsv").read_text()

    def test_unknown_scenario(self, tmp_path, capsys):
        code = main(["simulate", "--scenario", "S_missing", "--out", str(tmp_path)])
        assert code == EXIT_ERROR
        assert "unknown scenario" in capsys.readouterr().err

    def test_scenario_params(self):
        assert _scenario_params(["background=200", "sd=0.5", "setting=T3"]) == {
            "background": 200, "sd": 0.5, "setting": "T3"}
        with pytest.raises(AftkatError):
            _scenario_params(["background"])


class TestTestCommand:
    def test_single_row(self, simulated, capsys):
        code = main(["test", *data_args(simulated), "--method", "R", "--perturbations", "100"])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        body = [line for line in lines if not line.startswith("#")]
        assert body[0].split("\t") == ["set_name", "method", "statistic", "p_value", "m", "n_events", "flags"]
        assert len(body) == 2
        assert body[1].split("\t")[1] == "R"
        assert "# L: 100" in lines

    def test_missing_genotypes(self, simulated, tmp_path, capsys):
        code = main(["test", "--survival", str(simulated / "survival.tsv"),
                     "--genotypes", str(tmp_path / "nowhere.tsv")])
        assert code == EXIT_ERROR
        assert "genotypes file not found" in capsys.readouterr().err

    def test_monomorphic_markers_flagged(self, simulated, tmp_path, capsys):
        ids = [line.split("\t")[0] for line in (simulated / "survival.tsv").read_text().splitlines()[1:]]
        genotypes = tmp_path / "mono.tsv"
        genotypes.write_text("id\tm1\tm2\n" + "".join(f"{i}\t0\t0\n" for i in ids))
        code = main(["test", "--survival", str(simulated / "survival.tsv"),
                     "--genotypes", str(genotypes), "--method", "R", "--kernel", "linear",
                     "--perturbations", "50"])
        assert code == EXIT_FLAGGED
        row = capsys.readouterr().out.splitlines()[-1].split("\t")
        assert row[3] == "1.000000e+00"
        assert "degenerate_spectrum" in row[-1]

    def test_config_file(self, simulated, tmp_path, capsys):
        conf = tmp_path / "run.conf"
        conf.write_text("method = Rc\nperturbations = 60\nseed = 9\n")
        code = main(["test", "--config", str(conf), *data_args(simulated)])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "# seed: 9" in out and "# L: 60" in out
        assert "\tRc\t" in out

    def test_heterogeneity_requires_hkernel(self, simulated, capsys):
        code = main(["test", *data_args(simulated), "--method", "Rhet"])
        assert code == EXIT_ERROR
        assert "hkernel" in capsys.readouterr().err


class TestScanCommand:
    def test_scan_writes_results(self, simulated, tmp_path):
        out = tmp_path / "scan"
        code = main(["scan", *data_args(simulated), "--genesets", str(simulated / "genesets.tsv"),
                     "--method", "R", "--perturbations", "100", "--out", str(out)])
        assert code == EXIT_OK
        for name in ("scan_results.tsv", "scan_thresholds.tsv", "scan_summary.json"):
            assert (out / name).exists()

    def test_scan_without_gene_sets(self, simulated, tmp_path):
        code = main(["scan", *data_args(simulated), "--method", "R", "--perturbations", "50",
                     "--out", str(tmp_path)])
        assert code == EXIT_OK
        rows = [line for line in (tmp_path / "scan_results.tsv").read_text().splitlines()
                if not line.startswith("#")]
        assert rows[1].startswith("all\t")


class TestCalibrateAndQQ:
    def test_calibrate_then_qq(self, tmp_path, capsys):
        out = tmp_path / "study"
        code = main(["calibrate", "--scenario", "S_small_nohet", "--n", "60", "--p", "3",
                     "--replicates", "10", "--perturbations", "50", "--alphas", "0.05,0.1",
                     "--svg", "--out", str(out)])
        assert code == EXIT_OK
        assert (out / "study_rates.tsv").exists()
        assert (out / "study_qq.svg").exists()
        capsys.readouterr()

        code = main(["qq", str(out / "study_pvalues.tsv"), "--columns", "R", "--svg",
                     str(tmp_path / "qq.svg")])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "series\ttheoretical\tobserved"
        assert len(lines) == 11
        assert (tmp_path / "qq.svg").exists()

    def test_qq_too_few_values(self, tmp_path, capsys):
        path = tmp_path / "p.tsv"
        path.write_text("p\n0.5\n0.2\n")
        assert main(["qq", str(path)]) == EXIT_ERROR
        assert "at least 10" in capsys.readouterr().err


class TestCalibrateDefaults:
    @pytest.fixture
    def study(self, mocker):
        report = StudyReport(scenario="stub", settings={}, replicates=10, alphas=[0.05],
                             methods=["R"], p_values={"R": list(np.linspace(0.05, 0.95, 10))})
        return mocker.patch("aftkat.cli.run_study", return_value=report)

    def test_light_perturbation_default(self, study, tmp_path):
        assert main(["calibrate", "--scenario", "S_small_nohet", "--out", str(tmp_path)]) == EXIT_OK
        opts = study.call_args.kwargs["opts"]
        assert opts.L == opts.L_tilde == 1000

    def test_explicit_perturbations_kept(self, study, tmp_path):
        main(["calibrate", "--scenario", "S_small_nohet", "--perturbations", "50", "--out", str(tmp_path)])
        assert study.call_args.kwargs["opts"].L == 50

    def test_config_file_perturbations_kept(self, study, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("perturbations = 300\n")
        main(["calibrate", "--config", str(conf), "--scenario", "S_small_nohet", "--out", str(tmp_path)])
        assert study.call_args.kwargs["opts"].L == 300

    def test_scenario_kernel_when_unset(self, study, tmp_path):
        main(["calibrate", "--scenario", "S_confound", "--out", str(tmp_path)])
        assert study.call_args.kwargs["kernel"].kind == "gaussian"

    def test_config_file_kernel_honoured(self, study, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("kernel = linear\n")
        main(["calibrate", "--config", str(conf), "--scenario", "S_confound", "--out", str(tmp_path)])
        assert study.call_args.kwargs["kernel"].kind == "linear"


class TestParser:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(["--version"])
        assert info.value.code == 0
        assert "aftkat" in capsys.readouterr().out

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_alphas_parsed(self):
        args = build_parser().parse_args(["calibrate", "--scenario", "S1_no_het", "--alphas", "0.05, 0.01"])
        np.testing.assert_allclose(args.alphas, [0.05, 0.01])
