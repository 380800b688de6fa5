#!/usr/bin/env python3
"""
Tests for the association statistics and their result records.
"""

import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from aftkat import assoc_tests
from aftkat.aft_null import fit_null
from aftkat.assoc_tests import (
    FLAG_DEGENERATE,
    FLAG_NO_EVENTS,
    AssociationSession,
    TestMethod,
    TestOptions,
    TestResult,
    test_R,
    test_R_corrected,
    test_R_het,
    test_R_het_corrected,
)
from aftkat.kernels import KernelMatrix, KernelSpec, build_kernel, build_subpop_kernel
from aftkat.models import AftkatError
from aftkat.scenarios import ScenarioFactory
from aftkat.simgen import gen_dataset
from conftest import make_dataset

FAST = TestOptions(L=200, L_tilde=200, seed=1)


@pytest.fixture(scope="module")
def null_fit(null_dataset):
    return fit_null(null_dataset)


@pytest.fixture(scope="module")
def session(null_fit):
    return AssociationSession(null_fit, FAST)


@pytest.fixture(scope="module")
def ibs(null_dataset):
    return build_kernel(KernelSpec("ibs"), null_dataset.G)


class TestMethodNames:
    @pytest.mark.parametrize("text,expected", [("R", TestMethod.R), ("rhet", TestMethod.R_HET),
                                               ("R^c", TestMethod.RC), ("R^c_het", TestMethod.RC_HET)])
    def test_parse(self, text, expected):
        assert TestMethod.parse(text) is expected

    def test_unknown(self):
        with pytest.raises(AftkatError, match="unknown method"):
            TestMethod.parse("skat")

    def test_properties(self):
        assert TestMethod.RC_HET.heterogeneity and TestMethod.RC_HET.corrected
        assert not TestMethod.R.heterogeneity and not TestMethod.R.corrected


class TestResultRecord:
    def test_row(self):
        result = TestResult(1.5, 0.25, TestMethod.R, m=3, n_events=10)
        assert result.to_row() == ["all", "R", "1.5", "2.500000e-01", "3", "10", "."]
        assert len(result.to_row()) == len(TestResult.COLUMNS)

    def test_p_value_clipped(self):
        assert TestResult(1.0, 0.0, TestMethod.R).p_value > 0
        assert TestResult(1.0, 1.5, TestMethod.R).p_value == 1.0

    def test_non_finite_statistic(self):
        with pytest.raises(AftkatError):
            TestResult(float("nan"), 0.5, TestMethod.R)

    def test_json(self):
        result = TestResult(1.0, 0.5, TestMethod.RC, flags=["x"], diagnostics={"a": np.float64(1.0)})
        data = json.loads(result.to_json())
        assert data["method"] == "Rc" and data["flags"] == ["x"]


class TestUncorrected:
    def test_zero_kernel(self, null_fit):
        K = KernelMatrix.from_matrix(np.zeros((null_fit.dataset.n,) * 2))
        result = test_R(null_fit, K, FAST)
        assert result.statistic == 0.0
        assert result.p_value == 1.0
        assert FLAG_DEGENERATE in result.flags

    def test_identity_kernel_three_subjects(self, three_subjects):
        fit = fit_null(three_subjects)
        result = test_R(fit, KernelMatrix.from_matrix(np.eye(3)), FAST)
        assert result.statistic == pytest.approx(7 / 6)
        assert 0.0 < result.p_value <= 1.0
        assert result.m == 3 and result.n_events == 3

    def test_no_events(self):
        data = make_dataset([1.0, 2.0, 3.0], [0, 2, 0])
        fit = fit_null(data)
        for method in TestMethod:
            result = AssociationSession(fit, FAST).run(method, KernelMatrix.from_matrix(np.eye(3)),
                                                       KernelMatrix.from_matrix(np.eye(3)))
            assert result.p_value == 1.0
            assert FLAG_NO_EVENTS in result.flags

    def test_simulated(self, null_fit, ibs, session):
        result = test_R(null_fit, ibs, session=session)
        assert result.statistic >= 0
        assert 0.0 < result.p_value <= 1.0
        assert result.spectrum.size == ibs.rank
        assert result.diagnostics["tail_method"] in ("imhof", "exact", "moment_match")


class TestHeterogeneity:
    def test_zero_H_matches_R(self, null_fit, ibs, session):
        zero = KernelMatrix.from_matrix(np.zeros((null_fit.dataset.n,) * 2))
        plain = test_R(null_fit, ibs, session=session)
        het = test_R_het(null_fit, ibs, zero, session=session)
        assert het.statistic == pytest.approx(plain.statistic)
        assert het.p_value == pytest.approx(plain.p_value, abs=1e-6)

    def test_ones_H_doubles_statistic(self, null_fit, ibs, session):
        ones = KernelMatrix.from_matrix(np.ones((null_fit.dataset.n,) * 2))
        plain = test_R(null_fit, ibs, session=session)
        het = test_R_het(null_fit, ibs, ones, session=session)
        assert het.statistic == pytest.approx(2 * plain.statistic)
        assert het.p_value == pytest.approx(plain.p_value, abs=1e-6)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_statistic_splits_into_R_and_interaction(self, null_fit, ibs, session, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(null_fit.dataset.n, 2))
        H = build_subpop_kernel(KernelSpec("gaussian"), X)
        M = null_fit.residuals
        het = test_R_het(null_fit, ibs, H, session=session)
        plain = test_R(null_fit, ibs, session=session)
        expected = plain.statistic + M @ (H.matrix * ibs.matrix) @ M
        assert het.statistic == pytest.approx(expected, rel=1e-10)

    def test_requires_H(self, ibs, session):
        with pytest.raises(AftkatError, match="sub-population kernel"):
            session.run(TestMethod.R_HET, ibs)

    def test_observed_groups(self, null_fit, ibs, session):
        groups = (np.arange(null_fit.dataset.n) % 2).astype(float)[:, None]
        H = build_subpop_kernel(KernelSpec("identity"), groups)
        result = test_R_het_corrected(null_fit, ibs, H, session=session)
        assert result.method is TestMethod.RC_HET
        assert 0.0 < result.p_value <= 1.0


class TestCorrected:
    def test_statistic_within_kernel_spectrum(self, null_fit, ibs, session):
        result = test_R_corrected(null_fit, ibs, session=session)
        assert 0.0 <= result.statistic <= ibs.eigenvalues[0] + 1e-12
        assert 0.0 < result.p_value <= 1.0
        assert np.any(result.spectrum > 0) and np.any(result.spectrum < 0)

    def test_scaled_identity_is_degenerate(self, null_fit, session):
        K = KernelMatrix.from_matrix(2.5 * np.eye(null_fit.dataset.n))
        result = test_R_corrected(null_fit, K, session=session)
        assert result.statistic == pytest.approx(2.5)
        assert result.p_value == 1.0
        assert FLAG_DEGENERATE in result.flags

    def test_scale_invariant(self, null_fit, ibs, session):
        scaled = KernelMatrix.from_matrix(3.0 * ibs.matrix)
        a = test_R_corrected(null_fit, ibs, session=session)
        b = test_R_corrected(null_fit, scaled, session=session)
        assert b.statistic == pytest.approx(3 * a.statistic)
        assert b.p_value == pytest.approx(a.p_value, abs=1e-6)


class TestSession:
    def test_slopes_estimated_once(self, null_fit, ibs, mocker):
        spy = mocker.spy(assoc_tests, "estimate_slopes")
        session = AssociationSession(null_fit, FAST)
        session.run(TestMethod.R, ibs)
        session.run(TestMethod.RC, ibs)
        session.run(TestMethod.R, ibs)
        assert spy.call_count == 1

    def test_same_seed_same_p_value(self, null_fit, ibs):
        a = AssociationSession(null_fit, FAST).run(TestMethod.R, ibs)
        b = AssociationSession(null_fit, FAST).run(TestMethod.R, ibs)
        assert a.p_value == b.p_value

    def test_diagnostics_record_settings(self, ibs, session):
        result = session.run(TestMethod.R, ibs)
        assert result.diagnostics["L"] == 200
        assert result.diagnostics["kernel"]["kind"] == "ibs"
        assert "condition_A" in result.diagnostics


@pytest.mark.slow
class TestRuntime:
    def test_single_R_at_production_settings(self):
        data = gen_dataset(ScenarioFactory.create("S1_no_het", n=500, p=30), np.random.default_rng(6))
        start = time.perf_counter()
        fit = fit_null(data)
        K = build_kernel(KernelSpec("ibs"), data.G)
        result = test_R(fit, K, TestOptions(L=10000, L_tilde=10000, seed=1, workers=8))
        elapsed = time.perf_counter() - start
        assert 0.0 < result.p_value <= 1.0
        # 10 s on an 8-core desktop
        assert elapsed <= 30.0
