"""Defense metrics against independent oracles and planted synthetic signals."""

import math

import numpy as np
import pytest

from triggerlab import data, defenses, engine
from triggerlab.defenses import compute_auc, silhouette


def auc_oracle(neg, pos):
    """Exhaustive pairwise comparison; ties count one half."""
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def silhouette_oracle(points, assign):
    """Per-point textbook silhouette, averaged."""
    n = len(points)
    vals = []
    for i in range(n):
        same = [j for j in range(n) if assign[j] == assign[i] and j != i]
        other = [j for j in range(n) if assign[j] != assign[i]]
        if not same or not other:
            vals.append(0.0)
            continue
        a = sum(math.dist(points[i], points[j]) for j in same) / len(same)
        b = sum(math.dist(points[i], points[j]) for j in other) / len(other)
        vals.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return sum(vals) / n


class StubModel:
    """Fixed feature matrix regardless of input; lets tests plant activations."""

    def __init__(self, feats):
        self.feats = np.asarray(feats, dtype=np.float64)

    def penultimate_np(self, images, batch_size=512):
        return self.feats


def dataset_with_labels(labels):
    labels = np.asarray(labels)
    images = np.zeros((len(labels), 28, 28, 1), dtype=np.float32)
    return data.LabeledDataset(images, labels)


def constant_model(target=0):
    model = engine.CnnModel.init(seed=0)
    for p in model.parameters():
        p.data[...] = 0.0
    model.fc2_b.data[target] = 4.0
    return model


class TestAuc:
    def test_full_separation(self):
        assert compute_auc([0.1, 0.2], [0.8, 0.9]) == 1.0

    def test_identical_lists(self):
        assert compute_auc([0.3, 0.5, 0.9], [0.3, 0.5, 0.9]) == 0.5

    def test_hand_counted_tie(self):
        # one tie (0.5) + one win (1) over 2 pairs
        assert compute_auc([0.3], [0.3, 0.7]) == 0.75

    def test_matches_exhaustive_oracle_exactly(self):
        rng = np.random.default_rng(100)
        for trial in range(100):
            n_neg = int(rng.integers(1, 40))
            n_pos = int(rng.integers(1, 40))
            if trial % 2:
                neg = rng.integers(0, 5, n_neg) / 4.0  # quantized -> many ties
                pos = rng.integers(0, 5, n_pos) / 4.0
            else:
                neg = rng.normal(size=n_neg)
                pos = rng.normal(size=n_pos) + rng.normal() * 0.5
            assert compute_auc(neg, pos) == auc_oracle(list(neg), list(pos))

    def test_invariant_under_increasing_transform(self):
        rng = np.random.default_rng(5)
        neg, pos = rng.normal(size=30), rng.normal(size=25) + 0.4
        assert compute_auc(neg, pos) == compute_auc(np.exp(neg), np.exp(pos))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compute_auc([], [0.5])


class TestSilhouette:
    def test_matches_brute_force_on_20_point_sets(self):
        rng = np.random.default_rng(200)
        for _ in range(10):
            points = rng.normal(size=(20, 3))
            assign = rng.integers(0, 2, 20)
            got = silhouette(points, assign)
            want = silhouette_oracle(points.tolist(), assign.tolist())
            assert abs(got - want) < 1e-9

    def test_two_identical_points_per_cluster(self):
        points = np.array([[0.0, 0.0], [0.0, 0.0], [9.0, 9.0], [9.0, 9.0]])
        assert silhouette(points, np.array([0, 0, 1, 1])) == pytest.approx(1.0)

    def test_bounded(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            points = rng.normal(size=(12, 4))
            value = silhouette(points, rng.integers(0, 2, 12))
            assert -1.0 <= value <= 1.0


class TestActivationClustering:
    def test_planted_split_found(self):
        rng = np.random.default_rng(8)
        feats = np.zeros((60, 16))
        feats[:40] = rng.normal(0, 0.1, (40, 16))
        feats[40:] = rng.normal(0, 0.1, (20, 16)) + 6.0  # displaced minority
        labels = np.zeros(60, dtype=int)
        report = defenses.activation_clustering(StubModel(feats),
                                                dataset_with_labels(labels))
        assert report.silhouettes[0] > 0.8
        np.testing.assert_array_equal(np.sort(report.flagged[0]), np.arange(40, 60))

    def test_small_class_skipped(self):
        labels = np.zeros(10, dtype=int)
        labels[:3] = 1  # class 1 has 3 < 4 samples
        feats = np.random.default_rng(0).normal(size=(10, 8))
        report = defenses.activation_clustering(StubModel(feats),
                                                dataset_with_labels(labels))
        assert any(cls == 1 for cls, _ in report.skipped)
        assert 1 not in report.silhouettes


class TestSpectralSignature:
    def test_planted_direction_recall_one(self):
        rng = np.random.default_rng(9)
        feats = rng.normal(0, 0.05, (40, 8))
        feats[30:, 0] += 10.0  # poison displaced along a fixed direction
        mask = np.zeros(40, dtype=bool)
        mask[30:] = True
        labels = np.zeros(40, dtype=int)
        report = defenses.spectral_signature(StubModel(feats),
                                             dataset_with_labels(labels), mask)
        assert report.recall == 1.0

    def test_scores_nonnegative_and_shift_invariant(self):
        rng = np.random.default_rng(10)
        feats = rng.normal(size=(30, 8))
        mask = np.zeros(30, dtype=bool)
        mask[:3] = True
        labels = np.zeros(30, dtype=int)
        r1 = defenses.spectral_signature(StubModel(feats),
                                         dataset_with_labels(labels), mask)
        r2 = defenses.spectral_signature(StubModel(feats + 100.0),
                                         dataset_with_labels(labels), mask)
        assert r1.scores.scores.min() >= 0.0
        np.testing.assert_allclose(r1.scores.scores, r2.scores.scores,
                                   rtol=1e-6, atol=1e-6)

    def test_degenerate_class_skipped(self):
        feats = np.ones((8, 4))
        labels = np.zeros(8, dtype=int)
        report = defenses.spectral_signature(StubModel(feats),
                                             dataset_with_labels(labels),
                                             np.zeros(8, dtype=bool))
        assert any("rank-0" in reason for _, reason in report.skipped)


class TestStripAndScaleUp:
    def test_constant_model_gives_half_auc(self):
        model = constant_model()
        ds = data.synth_dataset(seed=30, n_per_class=3)
        pool = np.ascontiguousarray(ds.images[:10].transpose(0, 3, 1, 2))
        auc = defenses.strip_auc(model, ds.take(range(10)), ds.take(range(10, 20)), pool)
        assert auc == 0.5

    def test_strip_scores_shape_and_determinism(self):
        model = constant_model()
        ds = data.synth_dataset(seed=31, n_per_class=2)
        images = np.ascontiguousarray(ds.images.transpose(0, 3, 1, 2))
        s1 = defenses.strip_score(model, images[:5], images[5:], n=8, seed=3)
        s2 = defenses.strip_score(model, images[:5], images[5:], n=8, seed=3)
        np.testing.assert_array_equal(s1, s2)
        assert s1.shape == (5,)

    def test_all_zero_input_has_spc_one(self):
        model = engine.CnnModel.init(seed=3)
        zeros = np.zeros((4, 1, 28, 28), dtype=np.float32)
        np.testing.assert_array_equal(defenses.scale_up_spc(model, zeros), 1.0)


class TestNeuralCleanse:
    def test_zero_steps_l1_is_half_the_image(self):
        model = constant_model()
        clean = data.synth_dataset(seed=32, n_per_class=3)
        report = defenses.neural_cleanse(model, clean, steps=0, restarts=1)
        assert report.triggers[0].l1_norm == pytest.approx(0.5 * 28 * 28)

    def test_masks_and_patterns_stay_bounded(self):
        model = engine.CnnModel.init(seed=5)
        clean = data.synth_dataset(seed=33, n_per_class=2)
        report = defenses.neural_cleanse(model, clean, steps=3, restarts=1,
                                         batch_size=8)
        for trigger in report.triggers.values():
            assert 0.0 <= trigger.mask.min() and trigger.mask.max() <= 1.0
            assert 0.0 <= trigger.pattern.min() and trigger.pattern.max() <= 1.0
            assert trigger.l1_norm >= 0.0

    def test_export_writes_pgm_and_raw(self, tmp_path):
        model = constant_model()
        clean = data.synth_dataset(seed=34, n_per_class=2)
        report = defenses.neural_cleanse(model, clean, steps=0, restarts=1)
        mask_path, pattern_path = tmp_path / "mask.pgm", tmp_path / "pattern.raw"
        defenses.export_reversed_trigger(report.triggers[0], mask_path, pattern_path)
        assert mask_path.read_bytes().startswith(b"P5\n28 28\n255\n")
        assert pattern_path.stat().st_size == 28 * 28 * 4


class TestReportCsv:
    def test_schema(self, tmp_path):
        path = tmp_path / "report.csv"
        defenses.write_defense_report(
            [("strip", 1.0, 0.7, "auc", 0.81), ("scale_up", 1.0, 0.7, "auc", 0.55)],
            path)
        lines = path.read_text().splitlines()
        assert lines[0] == "defense,train_intensity,infer_intensity,metric_name,value"
        assert lines[1].startswith("strip,1.000000,0.700000,auc,0.81")
