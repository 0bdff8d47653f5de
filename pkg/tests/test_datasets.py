from collections import Counter

import numpy as np
import pytest

from incdiag.datasets import (LabeledDataset, Sample, ScenarioConfig, augment_segment_shuffle,
                              augment_views, build_scenario, load_csv_dataset,
                              make_augmented_batch, scenario_preset, segment_shuffle,
                              synth_fault_stream, synth_gaussian_stream)
from incdiag.errors import ConfigError, DataError


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "f1,f2,label\n1.0,2.0,0\n3.0,4.0,1\n5.0,6.0,1\n")
        ds = load_csv_dataset(path)
        assert ds.dim == 2
        assert ds.class_count == 2
        assert len(ds) == 3
        assert np.array_equal(ds.labels, [0, 1, 1])
        assert np.array_equal(ds.features[1], [3.0, 4.0])

    def test_nan_cell_names_the_row(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "f1,f2,label\n1.0,2.0,0\nNaN,4.0,1\n")
        with pytest.raises(DataError, match="line 3"):
            load_csv_dataset(path)

    def test_non_numeric_cell_names_row_and_column(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "f1,f2,label\n1.0,oops,0\n")
        with pytest.raises(DataError, match="line 2.*'f2'"):
            load_csv_dataset(path)

    def test_ragged_row_rejected(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "f1,f2,label\n1.0,2.0,0\n1.0,0\n")
        with pytest.raises(DataError, match="line 3"):
            load_csv_dataset(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            load_csv_dataset(tmp_path / "absent.csv")

    def test_empty_dataset_rejected(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "f1,f2,label\n")
        with pytest.raises(DataError, match="no data rows"):
            load_csv_dataset(path)

    def test_missing_label_column(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "f1,f2,y\n1.0,2.0,0\n")
        with pytest.raises(DataError, match="label"):
            load_csv_dataset(path)

    def test_non_integer_label_rejected(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "f1,label\n1.0,fault\n")
        with pytest.raises(DataError, match="integer label"):
            load_csv_dataset(path)

    def test_label_remap_recorded(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "f1,label\n1.0,7\n2.0,3\n3.0,7\n")
        ds = load_csv_dataset(path)
        assert dict(ds.label_mapping) == {3: 0, 7: 1}
        assert np.array_equal(ds.labels, [1, 0, 1])

    def test_52_feature_columns(self, tmp_path):
        # Shape check for plant-monitoring files with 52 sensor channels.
        header = ",".join(f"v{i}" for i in range(52)) + ",label"
        row = ",".join("0.5" for _ in range(52))
        path = write_csv(tmp_path / "wide.csv", f"{header}\n{row},0\n{row},1\n")
        ds = load_csv_dataset(path)
        assert ds.dim == 52

    def test_label_column_by_index(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "y,f1\n0,1.5\n1,2.5\n")
        ds = load_csv_dataset(path, label_column=0)
        assert ds.dim == 1
        assert np.array_equal(ds.labels, [0, 1])


def dataset_for_scenario(class_count=10, per_class=60, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((class_count * per_class, dim))
    labels = np.repeat(np.arange(class_count), per_class)
    return LabeledDataset(dim, class_count, feats, labels)


class TestBuildScenario:
    def test_tep_imbalanced_preset_layout(self):
        ds = dataset_for_scenario(class_count=10, per_class=1400)
        plan = build_scenario(ds, scenario_preset("tep-imbalanced", seed=1))
        assert [len(c) for c in plan.session_classes] == [2, 2, 2, 2, 2]
        assert plan.session_classes[0] == (0, 1)
        assert plan.seen_classes(5) == tuple(range(10))
        assert len(plan.train_indices[0]) == 500
        assert len(plan.train_indices[3]) == 48
        assert len(plan.test_indices[7]) == 800
        assert not plan.train_shortfall

    def test_mff_longtail2_preset_single_class_sessions(self):
        ds = dataset_for_scenario(class_count=5, per_class=1100)
        plan = build_scenario(ds, scenario_preset("mff-longtail-2", seed=3))
        assert [len(c) for c in plan.session_classes] == [1, 1, 1, 1, 1]
        assert len(plan.train_indices[0]) == 200
        assert len(plan.train_indices[2]) == 5
        assert plan.scenario.memory_k == 5

    def test_too_many_sessions_for_class_count(self):
        ds = dataset_for_scenario(class_count=5)
        cfg = ScenarioConfig(base_classes=(0,), novel_per_session=1, sessions=6,
                             normal_train_count=10, fault_train_count=5,
                             test_per_class=5, memory_k=4)
        with pytest.raises(DataError, match="6 classes"):
            build_scenario(ds, cfg)

    def test_split_is_seed_deterministic(self):
        ds = dataset_for_scenario()
        cfg = ScenarioConfig(base_classes=(0, 1), novel_per_session=2, sessions=3,
                             normal_train_count=20, fault_train_count=5,
                             test_per_class=10, memory_k=6, seed=42)
        a = build_scenario(ds, cfg)
        b = build_scenario(ds, cfg)
        for c in a.train_indices:
            assert np.array_equal(a.train_indices[c], b.train_indices[c])
            assert np.array_equal(a.test_indices[c], b.test_indices[c])

    def test_train_test_disjoint_per_class(self):
        ds = dataset_for_scenario()
        cfg = ScenarioConfig(base_classes=(0, 1), novel_per_session=2, sessions=3,
                             normal_train_count=30, fault_train_count=10,
                             test_per_class=20, memory_k=6, seed=7)
        plan = build_scenario(ds, cfg)
        for c in plan.train_indices:
            assert not set(plan.train_indices[c]) & set(plan.test_indices[c])

    def test_exact_imbalance_ratio(self):
        ds = dataset_for_scenario()
        cfg = ScenarioConfig(base_classes=(0, 1), novel_per_session=2, sessions=3,
                             normal_train_count=40, fault_train_count=8,
                             test_per_class=10, memory_k=6)
        plan = build_scenario(ds, cfg)
        assert len(plan.train_indices[0]) / len(plan.train_indices[1]) == 5.0

    def test_shortfall_takes_all_and_flags(self):
        ds = dataset_for_scenario(class_count=4, per_class=30)
        cfg = ScenarioConfig(base_classes=(0, 1), novel_per_session=1, sessions=3,
                             normal_train_count=100, fault_train_count=3,
                             test_per_class=10, memory_k=4)
        plan = build_scenario(ds, cfg)
        # Class 0 wants 100 training rows but only 30 exist: the builder takes
        # everything, flags the gap, and the test split comes up empty.
        assert len(plan.train_indices[0]) == 30
        assert plan.train_shortfall[0] == 70
        assert len(plan.test_indices[0]) == 0
        assert plan.test_shortfall[0] == 10

    def test_fault_exceeding_normal_rejected(self):
        with pytest.raises(ConfigError, match="fault_train_count"):
            ScenarioConfig(base_classes=(0,), novel_per_session=1, sessions=2,
                           normal_train_count=5, fault_train_count=6,
                           test_per_class=5, memory_k=4)

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="preset"):
            scenario_preset("tep-balanced")

    def test_cumulative_test_covers_seen_classes(self):
        ds = dataset_for_scenario()
        cfg = ScenarioConfig(base_classes=(0, 1), novel_per_session=2, sessions=3,
                             normal_train_count=10, fault_train_count=5,
                             test_per_class=8, memory_k=6)
        plan = build_scenario(ds, cfg)
        _, y2 = plan.cumulative_test(2)
        assert sorted(set(y2.tolist())) == [0, 1, 2, 3]
        assert len(y2) == 4 * 8


class TestSegmentShuffle:
    def test_single_element_is_identity(self, rng):
        sample = Sample(np.array([4.2]), 0)
        out = augment_segment_shuffle(sample, rng)
        assert np.array_equal(out.features, sample.features)
        assert out.label == 0

    def test_length_two_segment_outcomes(self):
        # A segment of length 2 has exactly two permutations; with [1, 3) the
        # only possible outputs are the identity and the adjacent swap.
        base = np.array([1.0, 2.0, 3.0, 4.0])
        seen = set()
        for seed in range(64):
            rng = np.random.default_rng(seed)
            vec = base.copy()
            vec[1:3] = vec[1:3][rng.permutation(2)]
            seen.add(tuple(vec))
        assert seen == {(1.0, 2.0, 3.0, 4.0), (1.0, 3.0, 2.0, 4.0)}

    def test_multiset_preserved(self, rng):
        for _ in range(50):
            vec = rng.standard_normal(9)
            out = segment_shuffle(vec, rng)
            assert Counter(vec.tolist()) == Counter(out.tolist())

    def test_positions_outside_segment_unchanged(self, rng):
        # Segment contents always come from inside [i, j): sorted equality per
        # run plus spot-checking that some run leaves a strict prefix intact.
        vec = np.arange(12, dtype=np.float64)
        prefix_kept = 0
        for _ in range(200):
            out = segment_shuffle(vec, rng)
            changed = np.flatnonzero(out != vec)
            if changed.size:
                lo, hi = changed.min(), changed.max()
                assert Counter(out[lo:hi + 1].tolist()) == Counter(vec[lo:hi + 1].tolist())
            if out[0] == vec[0]:
                prefix_kept += 1
        assert prefix_kept > 0

    def test_label_preserved(self, rng):
        out = augment_segment_shuffle(Sample(np.arange(5.0), 3), rng)
        assert out.label == 3


class TestAugmentedBatch:
    def test_two_views_per_sample_with_pairwise_labels(self, rng):
        samples = [Sample(np.arange(4.0), c) for c in (0, 1, 2)]
        out = make_augmented_batch(samples, rng)
        assert len(out) == 6
        assert [s.label for s in out] == [0, 0, 1, 1, 2, 2]

    def test_dim_one_views_are_identical(self, rng):
        samples = [Sample(np.array([5.0]), 1)] * 3
        out = make_augmented_batch(samples, rng)
        assert len(out) == 6
        for s in out:
            assert np.array_equal(s.features, [5.0])

    def test_views_preserve_value_multiset(self, rng):
        sample = Sample(np.array([3.0, 1.0, 2.0]), 0)
        out = make_augmented_batch([sample], rng)
        assert len(out) == 2
        for view in out:
            assert Counter(view.features.tolist()) == Counter([1.0, 2.0, 3.0])

    def test_empty_input_rejected(self, rng):
        with pytest.raises(DataError):
            make_augmented_batch([], rng)

    def test_matrix_form_matches_contract(self, rng):
        x = rng.standard_normal((4, 6))
        y = np.array([0, 1, 1, 0])
        views, labels = augment_views(x, y, rng)
        assert views.shape == (8, 6)
        assert np.array_equal(labels, [0, 0, 1, 1, 1, 1, 0, 0])


class TestSynthStream:
    def test_seed_determinism(self):
        a = synth_gaussian_stream(3, 5, 2.0, 0.3, 10, seed=9)
        b = synth_gaussian_stream(3, 5, 2.0, 0.3, 10, seed=9)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)

    def test_tiny_noise_collapses_to_means(self):
        ds = synth_gaussian_stream(2, 4, 3.0, 1e-12, 5, seed=1)
        for c in range(2):
            block = ds.features[ds.labels == c]
            assert np.allclose(block, block[0], atol=1e-10)
            assert np.linalg.norm(block[0]) == pytest.approx(3.0, abs=1e-10)

    def test_nearest_mean_separability(self):
        # Large separation relative to noise: a nearest-class-mean rule fit on
        # half the data must classify the held-out half almost perfectly.
        ds = synth_gaussian_stream(2, 8, 10.0, 0.5, 200, seed=5)
        train_means = []
        test_feats, test_labels = [], []
        for c in range(2):
            block = ds.features[ds.labels == c]
            train_means.append(block[:100].mean(axis=0))
            test_feats.append(block[100:])
            test_labels.append(np.full(100, c))
        x = np.vstack(test_feats)
        y = np.concatenate(test_labels)
        dists = np.stack([np.linalg.norm(x - m, axis=1) for m in train_means], axis=1)
        accuracy = np.mean(np.argmin(dists, axis=1) == y)
        assert accuracy >= 0.99

    def test_invalid_parameters(self):
        with pytest.raises(ConfigError):
            synth_gaussian_stream(1, 4, 1.0, 0.1, 10, seed=0)
        with pytest.raises(ConfigError):
            synth_gaussian_stream(3, 4, 1.0, 0.0, 10, seed=0)
        with pytest.raises(ConfigError):
            synth_gaussian_stream(3, 4, 1.0, 0.1, [10, 0, 10], seed=0)


class TestFaultStream:
    def test_seed_determinism(self):
        a = synth_fault_stream(4, 24, 4.0, 3.0, 0.7, 20, seed=11)
        b = synth_fault_stream(4, 24, 4.0, 3.0, 0.7, 20, seed=11)
        assert np.array_equal(a.features, b.features)

    def test_fault_means_offset_from_normal_state(self):
        ds = synth_fault_stream(4, 24, 4.0, 3.0, 1e-9, 50, seed=2)
        normal_mean = ds.features[ds.labels == 0].mean(axis=0)
        assert np.linalg.norm(normal_mean) == pytest.approx(4.0, abs=1e-6)
        for c in (1, 2, 3):
            fault_mean = ds.features[ds.labels == c].mean(axis=0)
            assert np.linalg.norm(fault_mean - normal_mean) == pytest.approx(3.0, abs=1e-6)

    def test_profiles_are_smooth(self):
        # Moving-average means correlate strongly between adjacent channels
        # (lag-1 autocorrelation near 8/9 for window 9); white noise does not.
        ds = synth_fault_stream(2, 48, 5.0, 2.0, 1e-9, 5, seed=3)
        mean = ds.features[ds.labels == 0].mean(axis=0)
        centered = mean - mean.mean()
        lag1 = np.dot(centered[:-1], centered[1:]) / np.dot(centered, centered)
        assert lag1 > 0.7

    def test_per_class_counts(self):
        ds = synth_fault_stream(3, 8, 4.0, 2.0, 0.5, [7, 3, 2], seed=1)
        assert [int(np.sum(ds.labels == c)) for c in range(3)] == [7, 3, 2]

    def test_invalid_parameters(self):
        with pytest.raises(ConfigError):
            synth_fault_stream(1, 8, 4.0, 2.0, 0.5, 5, seed=0)
        with pytest.raises(ConfigError):
            synth_fault_stream(3, 8, 4.0, 2.0, 0.0, 5, seed=0)
        with pytest.raises(ConfigError):
            synth_fault_stream(3, 8, 4.0, 2.0, 0.5, 5, seed=0, smooth_window=0)
