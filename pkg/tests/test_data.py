"""Tests for generators, splits, scaling, and dataset serialization."""

import numpy as np
import pytest

from mixadapt.data import (
    DomainDataset,
    DomainShift,
    FeatureScaler,
    dataset_from_csv,
    dataset_to_csv,
    gen_shifted_blobs,
    gen_two_moons_pair,
    load_labeled_array,
    make_few_shot_split,
    save_dataset,
)
from mixadapt.errors import ChecksumError, ContractError, DataError, ParameterError


class TestShiftedBlobs:
    def test_identity_shift_gives_iid_domains(self):
        src, tgt = gen_shifted_blobs(3, 2, 200, DomainShift(), noise_sigma=0.3, seed=0)
        # Same class centers on both sides: per-class means agree within noise.
        for c in range(3):
            mu_s = src.features[src.labels == c].mean(axis=0)
            mu_t = tgt.features[tgt.labels == c].mean(axis=0)
            np.testing.assert_allclose(mu_s, mu_t, atol=0.15)

    def test_rotation_by_90_degrees_permutes_centers(self):
        # Centers sit on the axes, so a quarter turn maps class 0's center
        # onto class 1's original location.
        shift = DomainShift(rotation_deg=90.0)
        src, tgt = gen_shifted_blobs(2, 2, 500, shift, noise_sigma=0.05, seed=1)
        c0_src = src.features[src.labels == 0].mean(axis=0)
        c0_tgt = tgt.features[tgt.labels == 0].mean(axis=0)
        c1_src = src.features[src.labels == 1].mean(axis=0)
        np.testing.assert_allclose(c0_tgt, c1_src, atol=0.05)
        assert np.linalg.norm(c0_tgt - c0_src) > 1.0

    def test_seed_determinism(self):
        a_src, a_tgt = gen_shifted_blobs(3, 2, 50, DomainShift(10.0, (1.0, 2.0)), 0.2, seed=7)
        b_src, b_tgt = gen_shifted_blobs(3, 2, 50, DomainShift(10.0, (1.0, 2.0)), 0.2, seed=7)
        np.testing.assert_array_equal(a_src.features, b_src.features)
        np.testing.assert_array_equal(a_tgt.features, b_tgt.features)
        np.testing.assert_array_equal(a_tgt.labels, b_tgt.labels)

    def test_zero_scale_rejected(self):
        with pytest.raises(ParameterError, match="scale"):
            gen_shifted_blobs(2, 2, 10, DomainShift(scale=0.0), 0.1, seed=0)

    def test_class_semantics_shared(self):
        # Class c's target blob is the image of class c's source blob.
        shift = DomainShift(rotation_deg=30.0, translation=(2.0, -1.0))
        src, tgt = gen_shifted_blobs(3, 2, 400, shift, noise_sigma=0.1, seed=3)
        for c in range(3):
            mapped = shift.apply(src.features[src.labels == c]).mean(axis=0)
            actual = tgt.features[tgt.labels == c].mean(axis=0)
            np.testing.assert_allclose(mapped, actual, atol=0.05)


class TestTwoMoons:
    def test_zero_noise_points_lie_on_half_circles(self):
        src, _ = gen_two_moons_pair(100, DomainShift(), noise_sigma=0.0, seed=0)
        upper = src.features[src.labels == 0]
        lower = src.features[src.labels == 1]
        np.testing.assert_allclose(np.linalg.norm(upper, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(
            np.linalg.norm(lower - np.array([1.0, 0.5]), axis=1), 1.0, atol=1e-12)
        assert np.all(upper[:, 1] >= -1e-12)
        assert np.all(lower[:, 1] <= 0.5 + 1e-12)

    def test_label_balance(self):
        src, _ = gen_two_moons_pair(101, DomainShift(), noise_sigma=0.1, seed=2)
        counts = np.bincount(src.labels)
        assert sorted(counts) == [50, 51]

    def test_translation_moves_bounding_box(self):
        shift = DomainShift(translation=(2.0, 0.0))
        src, tgt = gen_two_moons_pair(80, shift, noise_sigma=0.0, seed=5)
        # Noiseless domains share the same deterministic point grid, so the
        # bounding box translates exactly.
        np.testing.assert_allclose(tgt.features.min(axis=0),
                                   src.features.min(axis=0) + [2.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(tgt.features.max(axis=0),
                                   src.features.max(axis=0) + [2.0, 0.0], atol=1e-12)


class TestFewShotSplit:
    @pytest.mark.parametrize("shots", [0, 1, 5, 10, 25, 50])
    def test_exact_per_class_counts(self, shots):
        src, _ = gen_shifted_blobs(3, 2, 60, DomainShift(), 0.2, seed=4)
        split = make_few_shot_split(src, shots, seed=0)
        assert len(split.labeled_indices) == shots * 3
        # Counting oracle: tally labels of the chosen indices directly.
        if shots:
            counts = np.bincount(src.labels[split.labeled_indices], minlength=3)
            np.testing.assert_array_equal(counts, np.full(3, shots))

    def test_zero_shots(self):
        src, _ = gen_shifted_blobs(2, 2, 10, DomainShift(), 0.2, seed=4)
        split = make_few_shot_split(src, 0, seed=1)
        assert len(split.labeled_indices) == 0
        np.testing.assert_array_equal(split.unlabeled_indices, np.arange(20))

    def test_partition_is_disjoint_and_complete(self):
        src, _ = gen_shifted_blobs(3, 2, 40, DomainShift(), 0.2, seed=6)
        split = make_few_shot_split(src, 7, seed=2)
        merged = np.sort(np.concatenate([split.labeled_indices, split.unlabeled_indices]))
        np.testing.assert_array_equal(merged, np.arange(len(src)))

    def test_too_few_examples(self):
        src, _ = gen_shifted_blobs(2, 2, 3, DomainShift(), 0.2, seed=0)
        with pytest.raises(DataError, match="fewer than"):
            make_few_shot_split(src, 4, seed=0)

    def test_unlabeled_dataset_rejected(self):
        ds = DomainDataset(np.zeros((4, 2)), None, "target", 2)
        with pytest.raises(ContractError):
            make_few_shot_split(ds, 1, seed=0)


class TestScaler:
    def test_source_maps_to_unit_box(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(50, 3)) * 5.0 + 2.0
        scaler = FeatureScaler.fit(x)
        scaled = scaler.transform(x)
        np.testing.assert_allclose(scaled.min(axis=0), -1.0, atol=1e-12)
        np.testing.assert_allclose(scaled.max(axis=0), 1.0, atol=1e-12)

    def test_constant_feature_does_not_divide_by_zero(self):
        x = np.column_stack([np.ones(10), np.arange(10.0)])
        scaled = FeatureScaler.fit(x).transform(x)
        assert np.all(np.isfinite(scaled))


class TestCsvRoundTrip:
    def test_three_row_fixture(self):
        text = "f0,f1,label\n0.5,-1.25,0\n2.0,3.5,1\n-0.125,0.0,2\n"
        ds = dataset_from_csv(text)
        assert len(ds) == 3
        assert ds.class_count == 3
        np.testing.assert_array_equal(ds.labels, [0, 1, 2])

    def test_label_out_of_range_names_row(self):
        text = "f0,f1,label\n0.0,0.0,0\n1.0,1.0,2\n"
        with pytest.raises(DataError, match="row 3"):
            dataset_from_csv(text, class_count=2)

    def test_inconsistent_width_names_row(self):
        with pytest.raises(DataError, match="row 3"):
            dataset_from_csv("f0,f1\n0.0,1.0\n2.0\n")

    def test_malformed_number_names_row(self):
        with pytest.raises(DataError, match="row 2"):
            dataset_from_csv("f0,f1\nforty,two\n")

    def test_round_trip_exact(self):
        src, _ = gen_shifted_blobs(3, 2, 20, DomainShift(15.0, (0.5, 0.5)), 0.3, seed=9)
        again = dataset_from_csv(dataset_to_csv(src), "source", 3)
        np.testing.assert_array_equal(again.features, src.features)
        np.testing.assert_array_equal(again.labels, src.labels)

    def test_unlabeled_round_trip(self):
        ds = DomainDataset(np.array([[1.5, 2.5], [3.5, 4.5]]), None, "target", 3)
        text = dataset_to_csv(ds)
        assert "label" not in text.splitlines()[0]
        again = dataset_from_csv(text, "target", 3)
        assert not again.labeled


class TestBinaryContainer:
    def test_round_trip(self, tmp_path):
        src, _ = gen_shifted_blobs(3, 2, 15, DomainShift(), 0.2, seed=11)
        path = tmp_path / "src.mxd"
        save_dataset(src, path)
        again = load_labeled_array(path)
        np.testing.assert_array_equal(again.features, src.features)
        np.testing.assert_array_equal(again.labels, src.labels)
        assert again.domain == "source"
        assert again.class_count == 3

    def test_corruption_detected(self, tmp_path):
        src, _ = gen_shifted_blobs(2, 2, 5, DomainShift(), 0.2, seed=12)
        path = tmp_path / "src.mxd"
        save_dataset(src, path)
        raw = bytearray(path.read_bytes())
        raw[20] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ChecksumError):
            load_labeled_array(path)

    def test_csv_extension_writes_text(self, tmp_path):
        src, _ = gen_shifted_blobs(2, 2, 5, DomainShift(), 0.2, seed=13)
        path = tmp_path / "src.csv"
        save_dataset(src, path)
        assert path.read_text().startswith("f0,f1,label")
        again = load_labeled_array(path)
        np.testing.assert_array_equal(again.features, src.features)

    def test_missing_file(self):
        with pytest.raises(DataError, match="not found"):
            load_labeled_array("/nonexistent/nowhere.csv")
