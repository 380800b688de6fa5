#!/usr/bin/env python3
"""
Tests for gene-set scans and the FDR step-up thresholds.
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from aftkat import aft_null
from aftkat.assoc_tests import FLAG_FAILED
from aftkat.config import ScanConfig
from aftkat.models import AftkatError, GeneSetMap, KernelError
from aftkat.scan import GenomeScanner, bh_thresholds, run_scan, step_up
from aftkat.scenarios import ScenarioFactory
from aftkat.simgen import gen_dataset


@pytest.fixture(scope="module")
def dataset():
    scenario = ScenarioFactory.create("S_small_nohet", n=100, p=6)
    return gen_dataset(scenario, np.random.default_rng(17))


@pytest.fixture
def config():
    return ScanConfig(method="R", perturbations=100, seed=4)


class TestThresholds:
    def test_genome_wide_first_threshold(self):
        assert bh_thresholds(21285, 0.1)[0] == pytest.approx(4.46e-07, rel=1e-3)

    def test_four_hypotheses(self):
        np.testing.assert_allclose(bh_thresholds(4, 0.1), [0.012, 0.024, 0.036, 0.048])

    def test_increasing_and_linear_in_alpha(self):
        thresholds = bh_thresholds(10, 0.1)
        assert np.all(np.diff(thresholds) > 0)
        np.testing.assert_allclose(bh_thresholds(10, 0.2), 2 * thresholds)

    @pytest.mark.parametrize("m,alpha", [(0, 0.1), (5, 0.0), (5, 1.0)])
    def test_invalid(self, m, alpha):
        with pytest.raises(ValueError):
            bh_thresholds(m, alpha)


class TestStepUp:
    def test_discoveries(self):
        order, _, discoveries = step_up([0.001, 0.5, 0.011, 0.9], 0.1)
        assert order.tolist() == [0, 2, 1, 3]
        assert discoveries == 2

    def test_step_up_passes_later_rank(self):
        _, _, discoveries = step_up([0.04, 0.05], 0.1)
        assert discoveries == 2

    def test_none(self):
        assert step_up([0.5, 0.9], 0.1)[2] == 0

    def test_ties_keep_input_order(self):
        order, _, _ = step_up([0.2, 0.1, 0.2], 0.1)
        assert order.tolist() == [1, 0, 2]

    def test_global_null_error_rate_within_level(self):
        rng = np.random.default_rng(31)
        reps, q = 20000, 0.1
        rejected = sum(step_up(rng.uniform(size=25), q)[2] > 0 for _ in range(reps))
        rate = rejected / reps
        assert rate <= q + 3 * np.sqrt(q * (1 - q) / reps)

    def test_false_discovery_proportion_within_level(self):
        rng = np.random.default_rng(32)
        q, m, signals = 0.2, 40, 10
        proportions = []
        for _ in range(4000):
            p = np.concatenate([rng.beta(0.05, 1.0, size=signals), rng.uniform(size=m - signals)])
            order, _, discoveries = step_up(p, q)
            rejected = order[:discoveries]
            proportions.append(np.sum(rejected >= signals) / max(discoveries, 1))
        assert np.mean(proportions) <= q


class TestGenomeScanner:
    def test_null_fit_once(self, dataset, config, mocker):
        spy = mocker.spy(aft_null, "fit_null")
        report = GenomeScanner(config).scan(dataset, GeneSetMap.blocks(dataset.p, 2))
        assert spy.call_count == 1
        assert report.m == 4
        assert [r.set_name for r in report.results] == ["all", "block1", "block2", "block3"]
        assert all(0.0 < r.p_value <= 1.0 for r in report.results)

    def test_failed_set_is_flagged(self, dataset, config, mocker):
        mocker.patch("aftkat.scan.build_kernel", side_effect=KernelError("bad kernel"))
        report = GenomeScanner(config).scan(dataset, GeneSetMap.single(dataset.p))
        result = report.results[0]
        assert result.flags == [FLAG_FAILED]
        assert result.p_value == 1.0
        assert result.diagnostics["error"] == "bad kernel"
        assert report.flagged[0] is result

    def test_deterministic_across_workers(self, dataset, config):
        gene_sets = GeneSetMap.blocks(dataset.p, 3)
        one = run_scan(config, dataset, gene_sets)
        two = run_scan(config.merged({"workers": 2}), dataset, gene_sets)
        assert [r.p_value for r in one.results] == [r.p_value for r in two.results]

    def test_heterogeneity_needs_subpopulation(self, dataset):
        scanner = GenomeScanner(ScanConfig(method="Rhet", hkernel="identity", perturbations=50))
        with pytest.raises(AftkatError, match="sub-population"):
            scanner.prepare(dataset)

    def test_progress_callback(self, dataset, config):
        calls = []
        run_scan(config, dataset, GeneSetMap.blocks(dataset.p, 3), progress=calls.append)
        assert sum(calls) == 3

    def test_write(self, dataset, config, tmp_path):
        report = run_scan(config, dataset, GeneSetMap.blocks(dataset.p, 2))
        paths = report.write(tmp_path)
        results = paths["results"].read_text().splitlines()
        assert results[0].startswith("# tool: aftkat")
        header = [line for line in results if not line.startswith("#")][0]
        assert header.split("\t") == ["set_name", "method", "statistic", "p_value", "m", "n_events", "flags"]
        thresholds = [line for line in paths["thresholds"].read_text().splitlines()
                      if not line.startswith("#")]
        assert thresholds[0].split("\t") == ["rank", "set_name", "p_value", "threshold", "significant"]
        assert len(thresholds) == 5
        summary = json.loads(paths["summary"].read_text())
        assert summary["m"] == 4
        assert "beta_hat" in summary["null_fit"]
