"""Tests for dataset loading, splitting, and attack-pool construction."""

import numpy as np
import pytest
from PIL import Image

from ganprivacy.data import (
    AttackPool,
    DataError,
    LabeledDataset,
    SplitIndices,
    build_attack_pool,
    load_dataset,
    make_split,
    read_cache,
    subsample,
    write_cache,
)


@pytest.fixture(scope="module")
def digits():
    return load_dataset("digits")


class TestLoadDataset:
    def test_digits_builtin(self, digits):
        assert digits.images.shape == (1797, 28, 28, 1)
        assert digits.images.min() >= 0.0 and digits.images.max() <= 1.0
        assert digits.labels is not None
        assert set(np.unique(digits.labels)) == set(range(10))

    def test_loading_is_idempotent(self, digits):
        again = load_dataset("digits")
        np.testing.assert_array_equal(digits.images, again.images)
        np.testing.assert_array_equal(digits.labels, again.labels)

    def test_unknown_source(self, tmp_path):
        with pytest.raises(DataError, match="unknown dataset source"):
            load_dataset(str(tmp_path / "nope"))

    def test_empty_directory(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(DataError, match="empty dataset"):
            load_dataset(str(tmp_path / "empty"))

    def test_folder_of_identical_images(self, tmp_path):
        rng = np.random.default_rng(5)
        pixels = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        folder = tmp_path / "imgs"
        folder.mkdir()
        for i in range(10):
            Image.fromarray(pixels).save(folder / f"img_{i:02d}.png")
        ds = load_dataset(str(folder))
        assert ds.images.shape == (10, 64, 64, 3)
        np.testing.assert_allclose(ds.images[0], pixels.astype(np.float32) / 255.0)
        np.testing.assert_array_equal(ds.images[0], ds.images[9])
        assert ds.labels is None

    def test_folder_with_class_subdirs(self, tmp_path):
        folder = tmp_path / "classes"
        for ci, cname in enumerate(["cats", "dogs"]):
            sub = folder / cname
            sub.mkdir(parents=True)
            for i in range(3):
                arr = np.full((8, 8, 3), 40 * ci + i, dtype=np.uint8)
                Image.fromarray(arr).save(sub / f"{i}.png")
        ds = load_dataset(str(folder))
        assert len(ds) == 6
        np.testing.assert_array_equal(ds.labels, [0, 0, 0, 1, 1, 1])

    def test_corrupt_image(self, tmp_path):
        folder = tmp_path / "bad"
        folder.mkdir()
        (folder / "broken.png").write_bytes(b"not a png at all")
        with pytest.raises(DataError, match="unreadable image file"):
            load_dataset(str(folder))

    def test_resize_and_grayscale(self, tmp_path):
        folder = tmp_path / "rgb"
        folder.mkdir()
        Image.fromarray(np.zeros((32, 48, 3), dtype=np.uint8)).save(folder / "a.png")
        ds = load_dataset(str(folder), resize=(16, 24), grayscale=True)
        assert ds.images.shape == (1, 16, 24, 1)

    def test_builtin_missing_raw_files(self, tmp_path):
        with pytest.raises(DataError, match="mnist"):
            load_dataset("mnist", cache=tmp_path)

    def test_builtin_from_npz_then_cached(self, tmp_path):
        rng = np.random.default_rng(9)
        x_train = rng.integers(0, 256, size=(20, 28, 28), dtype=np.uint8)
        x_test = rng.integers(0, 256, size=(5, 28, 28), dtype=np.uint8)
        y_train = rng.integers(0, 10, size=20, dtype=np.uint8)
        y_test = rng.integers(0, 10, size=5, dtype=np.uint8)
        np.savez(tmp_path / "mnist.npz", x_train=x_train, y_train=y_train, x_test=x_test, y_test=y_test)
        ds = load_dataset("mnist", cache=tmp_path)
        assert ds.images.shape == (25, 28, 28, 1)
        assert (tmp_path / "mnist.gpds").exists()
        again = load_dataset("mnist", cache=tmp_path)
        np.testing.assert_array_equal(ds.images, again.images)


class TestCacheFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        images = rng.integers(0, 256, size=(7, 5, 4, 3), dtype=np.uint8)
        labels = rng.integers(0, 10, size=7)
        path = tmp_path / "toy.gpds"
        write_cache(path, images, labels)
        back_images, back_labels = read_cache(path)
        np.testing.assert_array_equal(images, back_images)
        np.testing.assert_array_equal(labels, back_labels)

    def test_header_layout(self, tmp_path):
        images = np.zeros((2, 3, 4, 1), dtype=np.uint8)
        path = tmp_path / "hdr.gpds"
        write_cache(path, images, None)
        raw = path.read_bytes()
        assert raw[:4] == b"GPDS"
        # little-endian uint32 words: version, count, H, W, C
        words = np.frombuffer(raw[4:24], dtype="<u4")
        np.testing.assert_array_equal(words, [1, 2, 3, 4, 1])
        assert raw[24] == 0  # no labels
        assert len(raw) == 25 + 2 * 3 * 4 * 1

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "junk.gpds"
        path.write_bytes(b"JUNKxxxxxxxxxxxxxxxxxxxxxxxxx")
        with pytest.raises(DataError, match="not a ganprivacy dataset cache"):
            read_cache(path)


class TestMakeSplit:
    def test_fraction_rounding(self, digits):
        split = make_split(digits, 0.10, seed=7)
        assert split.n_train == round(0.10 * len(digits))
        assert split.n_train + len(split.holdout_idx) == len(digits)

    def test_determinism(self, digits):
        a = make_split(digits, 0.5, seed=1)
        b = make_split(digits, 0.5, seed=1)
        np.testing.assert_array_equal(a.train_idx, b.train_idx)
        np.testing.assert_array_equal(a.holdout_idx, b.holdout_idx)

    def test_different_seeds_differ(self, digits):
        a = make_split(digits, 0.5, seed=1)
        b = make_split(digits, 0.5, seed=2)
        assert not np.array_equal(a.train_idx, b.train_idx)

    def test_partition(self, digits):
        split = make_split(digits, 0.25, seed=3)
        split.validate_for(len(digits))
        assert np.intersect1d(split.train_idx, split.holdout_idx).size == 0

    def test_fraction_out_of_range(self, digits):
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(DataError):
                make_split(digits, bad, seed=0)


class TestAttackPool:
    def test_direct_construction(self):
        images = np.zeros((4, 2, 2, 1), dtype=np.float32)
        ds = LabeledDataset(images=images, labels=None, name="toy")
        split = SplitIndices(train_idx=np.array([0, 1]), holdout_idx=np.array([2, 3]), seed=0)
        pool = build_attack_pool(ds, split)
        np.testing.assert_array_equal(pool.membership, [True, True, False, False])
        assert pool.n_train == 2
        assert pool.prior == pytest.approx(0.5)

    def test_ten_percent_prior(self, digits):
        split = make_split(digits, 0.10, seed=7)
        pool = build_attack_pool(digits, split)
        assert pool.prior == pytest.approx(split.n_train / len(digits))
        assert pool.prior == pytest.approx(0.10, abs=0.001)

    def test_degenerate_split(self):
        ds = LabeledDataset(images=np.zeros((3, 2, 2, 1), dtype=np.float32), labels=None, name="t")
        split = SplitIndices(train_idx=np.array([], dtype=np.int64), holdout_idx=np.arange(3), seed=0)
        with pytest.raises(DataError, match="degenerate split"):
            build_attack_pool(ds, split)

    def test_out_of_range_indices(self):
        ds = LabeledDataset(images=np.zeros((3, 2, 2, 1), dtype=np.float32), labels=None, name="t")
        split = SplitIndices(train_idx=np.array([0, 7]), holdout_idx=np.array([1, 2]), seed=0)
        with pytest.raises(DataError):
            build_attack_pool(ds, split)

    def test_membership_sum_invariant(self):
        with pytest.raises(DataError):
            AttackPool(
                samples=np.zeros((3, 1, 1, 1), dtype=np.float32),
                membership=np.array([True, False, False]),
                n_train=2,
            )


class TestSubsample:
    def test_takes_prefix(self, digits):
        small = subsample(digits, 100)
        assert len(small) == 100
        np.testing.assert_array_equal(small.images, digits.images[:100])
        np.testing.assert_array_equal(small.labels, digits.labels[:100])

    def test_larger_than_dataset_is_identity(self, digits):
        assert subsample(digits, 10**6) is digits

    def test_rejects_nonpositive(self, digits):
        with pytest.raises(DataError):
            subsample(digits, 0)


class TestLabeledDataset:
    def test_rejects_out_of_range_pixels(self):
        with pytest.raises(DataError):
            LabeledDataset(images=np.full((1, 2, 2, 1), 2.0, dtype=np.float32), labels=None, name="x")

    def test_rejects_wrong_label_count(self):
        with pytest.raises(DataError):
            LabeledDataset(
                images=np.zeros((2, 2, 2, 1), dtype=np.float32),
                labels=np.array([1]),
                name="x",
            )
