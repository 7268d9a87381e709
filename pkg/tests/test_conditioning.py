import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acoustic_cohorts.conditioning import (
    ConditioningFeature,
    MaskingPolicy,
    apply_masking,
    inference_feature,
    load_features,
    one_hot,
    save_features,
)
from acoustic_cohorts.errors import DataError, UsageError
from acoustic_cohorts.kmeans import ClusterId
from acoustic_cohorts.randstream import derive_seed, uniform_at


class TestOneHot:
    def test_basic_encoding(self):
        feat = one_hot(ClusterId(0, 3), 3)
        assert feat.onehot.tolist() == [1.0, 0.0, 0.0, 0.0]
        assert one_hot(ClusterId(2, 2), 2).onehot.tolist() == [0.0, 0.0, 1.0]

    def test_unknown_uses_last_slot(self):
        feat = one_hot(ClusterId.unknown(50), 50)
        assert feat.onehot.shape == (51,)
        assert feat.onehot[50] == 1.0
        assert feat.onehot.sum() == 1.0

    def test_argmax_recovers_value(self):
        for k in (1, 2, 7):
            for v in range(k + 1):
                feat = one_hot(ClusterId(v, k), k)
                assert int(np.argmax(feat.onehot)) == v
                assert feat.k == k and feat.value == v

    def test_rejects_bad_inputs(self):
        with pytest.raises(UsageError):
            one_hot(ClusterId(1, 2), 0)
        with pytest.raises(UsageError):
            one_hot(ClusterId(3, 3), 2)

    def test_vector_is_read_only(self):
        feat = one_hot(ClusterId(1, 4), 4)
        with pytest.raises(ValueError):
            feat.onehot[0] = 9.0


class TestInferenceFeature:
    def test_always_unknown(self):
        feat = inference_feature(50)
        assert feat.onehot.shape == (51,)
        assert feat.onehot[50] == 1.0 and feat.onehot.sum() == 1.0
        assert inference_feature(1).onehot.tolist() == [0.0, 1.0]

    def test_matches_one_hot_of_unknown(self):
        a = inference_feature(5).onehot
        b = one_hot(ClusterId.unknown(5), 5).onehot
        assert np.array_equal(a, b)


class TestApplyMasking:
    def ids(self, n, k=5, seed=0):
        rng = np.random.default_rng(seed)
        return [ClusterId(int(v), k) for v in rng.integers(0, k, n)]

    def test_p_zero_is_identity(self):
        ids = self.ids(200)
        out = apply_masking(ids, MaskingPolicy(p_unknown=0.0, seed=3))
        assert [c.value for c in out] == [c.value for c in ids]

    def test_p_one_masks_everything(self):
        out = apply_masking(self.ids(200), MaskingPolicy(p_unknown=1.0, seed=3))
        assert all(c.is_unknown for c in out)

    def test_already_unknown_rejected(self):
        bad = [ClusterId(0, 3), ClusterId.unknown(3)]
        with pytest.raises(DataError):
            apply_masking(bad, MaskingPolicy(p_unknown=0.5, seed=0))

    def test_decision_depends_only_on_index_and_seed(self):
        ids = self.ids(50, seed=1)
        policy = MaskingPolicy(p_unknown=0.4, seed=9)
        full = apply_masking(ids, policy)
        prefix = apply_masking(ids[:20], policy)
        assert [c.is_unknown for c in prefix] == [c.is_unknown for c in full[:20]]

        altered = list(ids)
        altered[30] = ClusterId((ids[30].value + 1) % 5, 5)
        again = apply_masking(altered, policy)
        assert [c.is_unknown for c in again] == [c.is_unknown for c in full]

    def test_masking_rate_frozen_count(self):
        ids = self.ids(100_000, k=50, seed=2)
        out = apply_masking(ids, MaskingPolicy(p_unknown=0.1, seed=7))
        unknowns = sum(c.is_unknown for c in out)
        assert unknowns == 10010
        assert 0.097 <= unknowns / 100_000 <= 0.103

    def test_survivors_keep_their_values(self):
        ids = self.ids(500, seed=4)
        out = apply_masking(ids, MaskingPolicy(p_unknown=0.3, seed=4))
        for before, after in zip(ids, out):
            if not after.is_unknown:
                assert after.value == before.value

    def test_policy_validation(self):
        with pytest.raises(UsageError):
            MaskingPolicy(p_unknown=-0.1, seed=0)
        with pytest.raises(UsageError):
            MaskingPolicy(p_unknown=1.5, seed=0)


class TestRandStream:
    @given(seed=st.integers(0, 2**63 - 1), n=st.integers(1, 200), cut=st.integers(0, 200))
    @settings(max_examples=60, deadline=None)
    def test_chunked_reads_reconstruct_stream(self, seed, n, cut):
        cut = min(cut, n)
        whole = uniform_at(seed, 0, n)
        parts = np.concatenate([uniform_at(seed, 0, cut), uniform_at(seed, cut, n - cut)])
        assert np.array_equal(whole, parts)

    @given(seed=st.integers(0, 2**63 - 1), start=st.integers(0, 10**9), n=st.integers(1, 64))
    @settings(max_examples=40, deadline=None)
    def test_values_in_unit_interval(self, seed, start, n):
        values = uniform_at(seed, start, n)
        assert np.all(values >= 0.0) and np.all(values < 1.0)

    def test_derive_seed_deterministic_and_sensitive(self):
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert derive_seed(1, 2, 3) != derive_seed(1, 2, 4)
        assert derive_seed(0) != derive_seed(1)

    def test_negative_parts_accepted(self):
        assert derive_seed(-1, 5) == derive_seed(-1, 5)


class TestFeatureFiles:
    def test_round_trip(self, tmp_path):
        k = 4
        feats = [
            one_hot(ClusterId(2, k), k),
            one_hot(ClusterId.unknown(k), k),
            one_hot(ClusterId(0, k), k),
        ]
        ids = ("a", "b", "c")
        path = tmp_path / "features.csv"
        save_features(ids, feats, k, str(path))
        got_ids, got_k, matrix = load_features(str(path))
        assert got_ids == ids and got_k == k
        expected = np.stack([f.onehot for f in feats])
        assert np.array_equal(matrix, expected)

    def test_rerun_byte_identical(self, tmp_path):
        k = 3
        feats = [one_hot(ClusterId(i % (k + 1), k), k) for i in range(6)]
        ids = tuple(f"u{i}" for i in range(6))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        save_features(ids, feats, k, str(a))
        save_features(ids, feats, k, str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("nope\n")
        with pytest.raises(DataError):
            load_features(str(path))

    def test_feature_equality_by_content(self):
        a = ConditioningFeature(onehot=one_hot(ClusterId(1, 3), 3).onehot)
        assert a.k == 3 and a.value == 1
