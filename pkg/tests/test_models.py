#!/usr/bin/env python3
"""
Tests for the domain types and error hierarchy.
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from aftkat.models import (
    AlignmentError,
    Dataset,
    GeneSetMap,
    IngestionError,
    SurvivalRecord,
)
from conftest import make_dataset


class TestSurvivalRecord:
    """Validation of single subjects."""

    def test_valid_record(self):
        record = SurvivalRecord("a", 0.5, 1.5, 2)
        assert record.truncated
        assert record.to_dict() == {"subject_id": "a", "entry_time": 0.5,
                                    "observed_time": 1.5, "status": 2}

    def test_untruncated(self):
        assert not SurvivalRecord("a", 0.0, 1.0, 0).truncated

    def test_event_at_entry_allowed(self):
        record = SurvivalRecord("a", 1.0, 1.0, 1)
        assert record.entry_time == record.observed_time

    @pytest.mark.parametrize("entry,time,status", [
        (2.0, 1.0, 1),
        (-1.0, 1.0, 1),
        (0.0, 0.0, 1),
        (0.0, 1.0, -1),
        (0.0, float("nan"), 1),
    ])
    def test_invalid_records(self, entry, time, status):
        with pytest.raises(IngestionError):
            SurvivalRecord("a", entry, time, status)

    def test_entry_after_exit_message(self):
        with pytest.raises(IngestionError, match="observed_time < entry_time"):
            SurvivalRecord("a", 2.0, 1.0, 1)


class TestIngestionError:
    def test_message_names_path_and_line(self):
        err = IngestionError("bad value", path="data/survival.tsv", line=7)
        assert str(err) == "bad value at line 7 in data/survival.tsv"
        assert err.line == 7
        assert err.path == "data/survival.tsv"

    def test_alignment_is_ingestion(self):
        assert issubclass(AlignmentError, IngestionError)


class TestDataset:
    """Dataset construction, immutability and derived views."""

    def test_shapes_and_names(self):
        data = make_dataset([1, 2, 3], [1, 0, 2], Z=np.ones((3, 2)), G=np.zeros((3, 4)))
        assert (data.n, data.q, data.p, data.D) == (3, 2, 4, 0)
        assert data.z_names == ("Z1", "Z2")
        assert data.g_names == ("G1", "G2", "G3", "G4")
        assert data.ids == ["s1", "s2", "s3"]

    def test_missing_covariates_become_empty(self, three_subjects):
        assert three_subjects.Z.shape == (3, 0)
        assert three_subjects.q == 0

    def test_events_follow_cause(self):
        data = make_dataset([1, 2, 3, 4], [1, 2, 0, 2], cause=2)
        np.testing.assert_array_equal(data.events, [0, 1, 0, 1])

    def test_log_entry_is_minus_infinity_without_truncation(self):
        data = make_dataset([1, 2], [1, 1], entry=[0.0, 1.0])
        assert data.log_entry[0] == -np.inf
        assert data.log_entry[1] == pytest.approx(0.0)

    def test_matrices_are_read_only(self, three_subjects):
        with pytest.raises(ValueError):
            three_subjects.G[0, 0] = 5.0

    def test_input_is_copied(self):
        G = np.zeros((3, 1))
        data = make_dataset([1, 2, 3], [1, 1, 1], G=G)
        G[0, 0] = 9.0
        assert data.G[0, 0] == 0.0

    def test_row_mismatch(self):
        with pytest.raises(AlignmentError):
            make_dataset([1, 2, 3], [1, 1, 1], G=np.zeros((2, 1)))

    def test_no_markers(self):
        with pytest.raises(IngestionError):
            make_dataset([1, 2, 3], [1, 1, 1], G=np.zeros((3, 0)))

    def test_non_finite_marker(self):
        G = np.zeros((3, 1))
        G[1, 0] = np.nan
        with pytest.raises(IngestionError, match="non-finite"):
            make_dataset([1, 2, 3], [1, 1, 1], G=G)

    def test_duplicate_ids(self):
        records = (SurvivalRecord("a", 0, 1, 1), SurvivalRecord("a", 0, 2, 1))
        with pytest.raises(IngestionError, match="duplicate"):
            Dataset(survival=records, Z=None, G=np.zeros((2, 1)))

    def test_with_markers(self):
        G = np.arange(12, dtype=float).reshape(3, 4)
        data = make_dataset([1, 2, 3], [1, 1, 1], G=G)
        sub = data.with_markers([1, 3])
        np.testing.assert_array_equal(sub.G, G[:, [1, 3]])
        assert sub.g_names == ("G2", "G4")
        assert sub.n == 3

    def test_summary(self):
        data = make_dataset([1, 2, 3], [1, 0, 2], entry=[0.0, 0.5, 0.0])
        summary = data.summary()
        assert summary["status_counts"] == {0: 1, 1: 1, 2: 1}
        assert summary["truncated"] == 1


class TestGeneSetMap:
    def test_from_marker_names(self):
        sets = GeneSetMap.from_marker_names([("a", ["m2", "m1"]), ("b", ["m3"])], ["m1", "m2", "m3"])
        assert sets.names == ["a", "b"]
        assert sets.to_dict() == {"a": [1, 0], "b": [2]}
        assert json.loads(sets.to_json()) == {"a": [1, 0], "b": [2]}

    def test_unknown_marker(self):
        with pytest.raises(IngestionError, match="unknown markers"):
            GeneSetMap.from_marker_names([("a", ["x"])], ["m1"])

    def test_validate_rejects_duplicates_and_empty(self):
        with pytest.raises(IngestionError, match="duplicate"):
            GeneSetMap([("a", [0]), ("a", [1])]).validate(2)
        with pytest.raises(IngestionError, match="empty"):
            GeneSetMap([("a", [])]).validate(2)
        with pytest.raises(IngestionError, match="out of range"):
            GeneSetMap([("a", [5])]).validate(2)

    def test_single(self):
        sets = GeneSetMap.single(3)
        assert list(sets) == [("all", [0, 1, 2])]
        assert len(sets) == 1

    def test_blocks(self):
        sets = GeneSetMap.blocks(7, 3)
        assert sets.names == ["all", "block1", "block2", "block3"]
        assert sets.to_dict()["block3"] == [6]
        sets.validate(7)
