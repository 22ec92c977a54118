"""IDX round-trips, synthetic dataset properties, stratified subsets."""

import struct

import numpy as np
import pytest

from triggerlab import data, engine


@pytest.fixture
def small_ds():
    return data.synth_dataset(seed=3, n_per_class=5)


class TestIdx:
    def test_round_trip_is_byte_exact(self, tmp_path, small_ds):
        img_path, lbl_path = tmp_path / "imgs.idx", tmp_path / "lbls.idx"
        data.save_idx(small_ds, img_path, lbl_path)
        loaded = data.load_idx(img_path, lbl_path)
        data.save_idx(loaded, tmp_path / "imgs2.idx", tmp_path / "lbls2.idx")
        assert (tmp_path / "imgs2.idx").read_bytes() == img_path.read_bytes()
        assert (tmp_path / "lbls2.idx").read_bytes() == lbl_path.read_bytes()
        np.testing.assert_array_equal(loaded.labels, small_ds.labels)

    def test_byte_255_becomes_exactly_one(self, tmp_path):
        ds = data.LabeledDataset(np.ones((3, 4, 4, 1), dtype=np.float32),
                                 np.zeros(3, dtype=int))
        data.save_idx(ds, tmp_path / "i.idx", tmp_path / "l.idx")
        loaded = data.load_idx(tmp_path / "i.idx", tmp_path / "l.idx")
        assert np.all(loaded.images == 1.0)

    def test_wrong_magic_rejected(self, tmp_path, small_ds):
        img_path, lbl_path = tmp_path / "imgs.idx", tmp_path / "lbls.idx"
        data.save_idx(small_ds, img_path, lbl_path)
        blob = bytearray(img_path.read_bytes())
        blob[:4] = struct.pack(">I", 0x00000999)
        img_path.write_bytes(bytes(blob))
        with pytest.raises(data.IdxFormatError, match="magic"):
            data.load_idx(img_path, lbl_path)

    def test_truncated_file_rejected(self, tmp_path, small_ds):
        img_path, lbl_path = tmp_path / "imgs.idx", tmp_path / "lbls.idx"
        data.save_idx(small_ds, img_path, lbl_path)
        img_path.write_bytes(img_path.read_bytes()[:-100])
        with pytest.raises(data.IdxFormatError):
            data.load_idx(img_path, lbl_path)

    def test_count_mismatch_rejected(self, tmp_path, small_ds):
        img_path, lbl_path = tmp_path / "imgs.idx", tmp_path / "lbls.idx"
        data.save_idx(small_ds, img_path, lbl_path)
        short = data.LabeledDataset(small_ds.images[:-1], small_ds.labels[:-1])
        data.save_idx(short, tmp_path / "short.idx", tmp_path / "short_l.idx")
        with pytest.raises(data.IdxFormatError, match="mismatch"):
            data.load_idx(img_path, tmp_path / "short_l.idx")

    def test_export_raw_layout(self, tmp_path, small_ds):
        data.export_raw(small_ds.take(range(3)), tmp_path / "dump")
        assert (tmp_path / "dump" / "000002.raw").stat().st_size == 28 * 28
        lines = (tmp_path / "dump" / "labels.txt").read_text().splitlines()
        assert len(lines) == 3


class TestSynth:
    def test_deterministic(self):
        a = data.synth_dataset(seed=11, n_per_class=4)
        b = data.synth_dataset(seed=11, n_per_class=4)
        np.testing.assert_array_equal(a.images, b.images)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_pixels_in_unit_interval(self, small_ds):
        assert small_ds.images.min() >= 0.0
        assert small_ds.images.max() <= 1.0

    def test_one_epoch_reaches_95_percent(self):
        train, test = data.split(data.synth_dataset(seed=1, n_per_class=60), 500, seed=0)
        model = engine.CnnModel.init(seed=2)
        cfg = engine.TrainConfig(epochs=1, batch_size=8, lr=0.02, momentum=0.9, seed=3)
        engine.train(model, train, cfg)
        assert engine.evaluate(model, test) >= 0.95

    def test_rejects_tiny_classes(self):
        with pytest.raises(ValueError):
            data.synth_dataset(seed=0, n_per_class=1)


class TestSubset:
    def test_full_size_is_permutation(self, small_ds):
        sub = data.subset(small_ds, len(small_ds), seed=0)
        np.testing.assert_array_equal(np.sort(sub.labels), np.sort(small_ds.labels))

    def test_ten_from_ten_classes_is_one_each(self, small_ds):
        sub = data.subset(small_ds, 10, seed=1)
        np.testing.assert_array_equal(np.sort(sub.labels), np.arange(10))

    def test_deterministic(self, small_ds):
        a = data.subset(small_ds, 20, seed=5)
        b = data.subset(small_ds, 20, seed=5)
        np.testing.assert_array_equal(a.images, b.images)

    def test_stratification_within_one(self):
        ds = data.synth_dataset(seed=9, n_per_class=30)
        for n in (37, 100, 123):
            sub = data.subset(ds, n, seed=2)
            counts = np.bincount(sub.labels, minlength=10)
            assert counts.max() - counts.min() <= 1

    def test_split_partitions(self, small_ds):
        left, right = data.split(small_ds, 30, seed=4)
        assert len(left) == 30 and len(right) == len(small_ds) - 30

    def test_oversized_request_rejected(self, small_ds):
        with pytest.raises(ValueError):
            data.subset(small_ds, len(small_ds) + 1, seed=0)
