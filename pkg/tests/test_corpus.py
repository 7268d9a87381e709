import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acoustic_cohorts.corpus import (
    SegmentWindow,
    load_corpus,
    save_corpus,
    segment_plan,
    synth_corpus,
)
from acoustic_cohorts.errors import DataError, UsageError


def windows(plan):
    return [(w.start_s, w.end_s) for w in plan]


class TestSegmentPlan:
    def test_full_chunks_plus_long_remainder(self):
        assert windows(segment_plan(25, 10)) == [(0, 10), (10, 20), (20, 25)]

    def test_exact_single_chunk(self):
        assert windows(segment_plan(10, 10)) == [(0, 10)]

    def test_short_remainder_merges_into_previous(self):
        assert windows(segment_plan(20.5, 10)) == [(0, 10), (10, 20.5)]

    def test_sub_second_utterance_is_sole_window(self):
        assert windows(segment_plan(0.5, 10)) == [(0, 0.5)]

    def test_remainder_of_exactly_one_second_kept(self):
        assert windows(segment_plan(11, 10)) == [(0, 10), (10, 11)]

    @pytest.mark.parametrize("duration,chunk", [(0, 10), (-1, 10), (5, 0), (5, -2)])
    def test_non_positive_arguments_rejected(self, duration, chunk):
        with pytest.raises(UsageError):
            segment_plan(duration, chunk)

    @given(
        duration=st.floats(0.01, 1000.0, allow_nan=False),
        chunk=st.floats(1.0, 60.0, allow_nan=False),
    )
    @settings(max_examples=200)
    def test_windows_partition_duration_exactly(self, duration, chunk):
        plan = segment_plan(duration, chunk)
        assert plan[0].start_s == 0
        assert plan[-1].end_s == duration
        for a, b in zip(plan, plan[1:]):
            assert a.end_s == b.start_s
        for w in plan:
            assert w.end_s > w.start_s
        total = sum(w.end_s - w.start_s for w in plan)
        assert total == pytest.approx(duration, abs=1e-9)

    @given(
        duration=st.floats(1.0, 1000.0, allow_nan=False),
        chunk=st.floats(1.0, 60.0, allow_nan=False),
    )
    @settings(max_examples=200)
    def test_no_window_shorter_than_one_second(self, duration, chunk):
        for w in segment_plan(duration, chunk):
            assert w.end_s - w.start_s >= 1.0 - 1e-9


def write_lines(path, objs):
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write((obj if isinstance(obj, str) else json.dumps(obj)) + "\n")


class TestLoadCorpus:
    def test_valid_records_kept_in_file_order(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        rng = np.random.default_rng(0)
        rows = [
            {"utt_id": f"u{i}", "embedding": rng.normal(size=192).tolist()} for i in range(3)
        ]
        write_lines(path, rows)
        got = load_corpus(str(path), 192)
        assert got.dim == 192
        assert got.ids() == ("u0", "u1", "u2")
        assert got.matrix().shape == (3, 192)

    def test_dimension_mismatch_names_utt_id(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_lines(path, [
            {"utt_id": "good", "embedding": [0.0] * 192},
            {"utt_id": "short-one", "embedding": [0.0] * 191},
        ])
        with pytest.raises(DataError, match="short-one"):
            load_corpus(str(path), 192)

    def test_duplicate_utt_id_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_lines(path, [
            {"utt_id": "u1", "embedding": [0.0, 1.0]},
            {"utt_id": "u1", "embedding": [2.0, 3.0]},
        ])
        with pytest.raises(DataError, match="duplicate.*u1"):
            load_corpus(str(path), 2)

    def test_malformed_line_reported_with_line_number(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_lines(path, [{"utt_id": "u1", "embedding": [0.0]}, "{not json"])
        with pytest.raises(DataError, match="line 2"):
            load_corpus(str(path), 1)

    def test_non_finite_embedding_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_lines(path, ['{"utt_id": "u1", "embedding": [1.0, Infinity]}'])
        with pytest.raises(DataError, match="non-finite"):
            load_corpus(str(path), 2)

    def test_missing_file_is_data_error(self, tmp_path):
        with pytest.raises(DataError, match="no-such-file"):
            load_corpus(str(tmp_path / "no-such-file"), 2)

    def test_round_trip_is_lossless(self, tmp_path):
        blobs, _ = synth_corpus(2, 3, 5, 10.0, 0.5, seed=3)
        first = tmp_path / "a.jsonl"
        second = tmp_path / "b.jsonl"
        save_corpus(blobs, str(first))
        loaded = load_corpus(str(first), 5)
        assert loaded.ids() == blobs.ids()
        assert np.array_equal(loaded.matrix(), blobs.matrix())
        assert [r.meta for r in loaded.records] == [r.meta for r in blobs.records]
        save_corpus(loaded, str(second))
        assert first.read_bytes() == second.read_bytes()

    def test_matrix_view_is_read_only(self):
        blobs, _ = synth_corpus(2, 2, 3, 5.0, 0.5, seed=1)
        with pytest.raises(ValueError):
            blobs.matrix()[0, 0] = 99.0


class TestSynthCorpus:
    def test_counts_and_truth_labels(self):
        blobs, truth = synth_corpus(3, 10, 2, 20.0, 1.0, seed=7)
        assert len(blobs) == 30
        per_label = {}
        for rec in blobs.records:
            label = truth[rec.utt_id]
            per_label[label] = per_label.get(label, 0) + 1
            assert rec.meta["synthetic_truth"] == str(label)
        assert per_label == {0: 10, 1: 10, 2: 10}

    def test_deterministic_for_fixed_seed(self, tmp_path):
        paths = []
        for name in ("a.jsonl", "b.jsonl"):
            blobs, _ = synth_corpus(3, 10, 4, 20.0, 1.0, seed=7)
            path = tmp_path / name
            save_corpus(blobs, str(path))
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_different_seeds_differ(self):
        a, _ = synth_corpus(2, 5, 3, 10.0, 1.0, seed=1)
        b, _ = synth_corpus(2, 5, 3, 10.0, 1.0, seed=2)
        assert not np.array_equal(a.matrix(), b.matrix())

    def test_centers_respect_separation(self):
        # near-zero noise makes per-cluster means sit on the true centers
        blobs, truth = synth_corpus(4, 20, 3, 15.0, 1e-3, seed=5)
        X = blobs.matrix()
        centers = [X[[truth[r.utt_id] == c for r in blobs.records]].mean(axis=0) for c in range(4)]
        for i in range(4):
            for j in range(i + 1, 4):
                assert np.linalg.norm(centers[i] - centers[j]) >= 15.0 * 0.999

    def test_invalid_arguments_rejected(self):
        with pytest.raises(UsageError):
            synth_corpus(0, 5, 3, 10.0, 1.0, seed=1)
        with pytest.raises(UsageError):
            synth_corpus(2, 5, 3, -1.0, 1.0, seed=1)
