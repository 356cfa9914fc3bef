import math
import struct

import numpy as np
import pytest

from damc.data import (
    Dataset,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    Standardizer,
    SyntheticShiftSpec,
    batches,
    gen_shifted_gaussians,
    gen_two_moons_shift,
    load_idx,
    read_idx,
    write_idx,
)


def idx_bytes(magic, dims, payload):
    return struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + bytes(payload)


class TestSynthetic:
    def test_counts_and_balance(self):
        pair = gen_shifted_gaussians(SyntheticShiftSpec(c=3, n_per_class=200))
        assert pair.source.n == 600 and pair.target.n == 600
        assert np.bincount(pair.source.y).tolist() == [200, 200, 200]

    def test_seeded(self):
        a = gen_shifted_gaussians(SyntheticShiftSpec(seed=3))
        b = gen_shifted_gaussians(SyntheticShiftSpec(seed=3))
        np.testing.assert_array_equal(a.target.X, b.target.X)

    def test_zero_shift_same_distribution(self):
        pair = gen_shifted_gaussians(SyntheticShiftSpec(
            n_per_class=2000, rotation=0.0, translation=(0, 0), std_inflation=1.0))
        for cls in range(3):
            ms = pair.source.X[pair.source.y == cls].mean(0)
            mt = pair.target.X[pair.target.y == cls].mean(0)
            assert np.linalg.norm(ms - mt) < 0.1

    def test_half_turn_swaps_binary_means(self):
        pair = gen_shifted_gaussians(SyntheticShiftSpec(
            c=2, n_per_class=500, rotation=math.pi, translation=(0, 0), std_inflation=1.0))
        s0 = pair.source.X[pair.source.y == 0].mean(0)
        t1 = pair.target.X[pair.target.y == 1].mean(0)
        assert np.linalg.norm(s0 - t1) < 0.2
        # nearest source-class mean misclassifies almost every target point
        means = np.stack([pair.source.X[pair.source.y == c].mean(0) for c in range(2)])
        pred = np.argmin(((pair.target.X[:, None] - means) ** 2).sum(-1), axis=1)
        assert (pred == pair.target.y).mean() < 0.1

    def test_validation(self):
        with pytest.raises(ValueError):
            SyntheticShiftSpec(c=1)
        with pytest.raises(ValueError):
            SyntheticShiftSpec(std=0)

    def test_two_moons(self):
        pair = gen_two_moons_shift(101, rotation=0.0, seed=1)
        assert pair.source.n == 101 and pair.target.n == 101
        assert set(np.unique(pair.source.y)) == {0, 1}
        rotated = gen_two_moons_shift(101, rotation=math.pi / 6, seed=1)
        assert not np.allclose(rotated.target.X, pair.target.X)
        np.testing.assert_array_equal(rotated.source.X, pair.source.X)


class TestDataset:
    def test_read_only_copy(self):
        X = np.zeros((2, 2))
        ds = Dataset(X, [0, 1], 2)
        assert X.flags.writeable
        with pytest.raises(ValueError):
            ds.X[0, 0] = 1

    def test_label_range(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 2)), [0, 2], 2)

    def test_unlabeled_view_has_no_labels(self):
        view = Dataset(np.ones((3, 2)), [0, 1, 0], 2).unlabeled()
        assert not hasattr(view, "y")
        assert view.n == 3


class TestIdx:
    def test_images_header(self, tmp_path):
        img = tmp_path / "img"
        lab = tmp_path / "lab"
        img.write_bytes(idx_bytes(2051, (2, 3, 4), range(24)))
        lab.write_bytes(idx_bytes(2049, (2,), [3, 7]))
        ds = load_idx(img, lab)
        assert (ds.n, ds.dim) == (2, 12)
        assert ds.X[1, 11] == pytest.approx(23 / 255)
        assert ds.y.tolist() == [3, 7]

    def test_wrong_magic(self, tmp_path):
        img = tmp_path / "img"
        img.write_bytes(idx_bytes(0x802, (2, 3), range(6)))
        with pytest.raises(IdxMagicError):
            read_idx(img, 0x803)
        img.write_bytes(idx_bytes(0x0D03, (1, 1, 1), [0]))
        with pytest.raises(IdxMagicError):
            read_idx(img)

    def test_truncated_payload(self, tmp_path):
        img = tmp_path / "img"
        img.write_bytes(idx_bytes(2051, (2, 3, 4), range(23)))
        with pytest.raises(IdxTruncatedError):
            read_idx(img)
        img.write_bytes(b"\x00\x00\x08\x03\x00")
        with pytest.raises(IdxTruncatedError):
            read_idx(img)

    def test_errors_are_distinct(self):
        assert len({IdxMagicError, IdxTruncatedError, IdxCountMismatchError}) == 3
        assert not issubclass(IdxMagicError, IdxTruncatedError)

    def test_count_mismatch(self, tmp_path):
        img, lab = tmp_path / "img", tmp_path / "lab"
        img.write_bytes(idx_bytes(2051, (2, 1, 1), [0, 1]))
        lab.write_bytes(idx_bytes(2049, (3,), [0, 1, 2]))
        with pytest.raises(IdxCountMismatchError):
            load_idx(img, lab)

    def test_round_trip(self, tmp_path):
        a = np.random.default_rng(0).integers(0, 256, (4, 5, 6), dtype=np.uint8)
        write_idx(tmp_path / "a", a)
        np.testing.assert_array_equal(read_idx(tmp_path / "a", 0x803), a)


class TestBatches:
    def test_sizes(self):
        assert [len(b) for b in batches(5, 2, 0, 0)] == [2, 2, 1]

    def test_deterministic(self):
        a, b = batches(50, 8, 3, 2), batches(50, 8, 3, 2)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_epochs_differ(self):
        assert not np.array_equal(np.concatenate(batches(10, 4, 0, 0)), np.concatenate(batches(10, 4, 0, 1)))

    def test_covers_every_index_once(self):
        assert sorted(np.concatenate(batches(37, 5, 9, 4)).tolist()) == list(range(37))


class TestStandardizer:
    def test_fit_on_source_only(self):
        pair = gen_shifted_gaussians(SyntheticShiftSpec())
        st = Standardizer.fit(pair.source.X)
        Zs, Zt = st(pair.source.X), st(pair.target.X)
        np.testing.assert_allclose(Zs.mean(0), 0, atol=1e-12)
        np.testing.assert_allclose(Zs.std(0), 1, atol=1e-12)
        # the target keeps its shift relative to source statistics
        assert np.abs(Zt.mean(0)).max() > 0.05

    def test_constant_column(self):
        st = Standardizer.fit(np.array([[1.0, 2.0], [1.0, 4.0]]))
        np.testing.assert_allclose(st(np.array([[1.0, 3.0]])), [[0.0, 0.0]])
