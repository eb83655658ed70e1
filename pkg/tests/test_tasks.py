import numpy as np
import pytest

from gemkit import tasks as ts
from gemkit.errors import BadMagic, InsufficientClasses, TruncatedFile


@pytest.fixture
def base():
    return ts.make_synthetic_base(classes=10, dim=16, per_class=20, seed=3, test_per_class=8)


def perm_cfg(total=4, cv=0, seed=5):
    return ts.StreamConfig(kind="permuted", total_tasks=total, cv_tasks=cv, seed=seed)


class TestPermutedStream:
    def test_first_task_is_identity(self, base):
        stream = ts.make_permuted_stream(base, perm_cfg())
        np.testing.assert_array_equal(stream[0].train_x, base.train_x)
        np.testing.assert_array_equal(stream[0].test_x, base.test_x)

    def test_later_tasks_actually_permute(self, base):
        stream = ts.make_permuted_stream(base, perm_cfg())
        for task in stream[1:]:
            assert not np.array_equal(task.train_x, base.train_x)

    def test_train_and_test_share_the_permutation(self, base):
        stream = ts.make_permuted_stream(base, perm_cfg())
        # recover the permutation from train row 0 and check it on test rows
        src = base.train_x[0]
        dst = stream[2].train_x[0]
        perm = np.array([int(np.flatnonzero(src == v)[0]) for v in dst])
        np.testing.assert_array_equal(stream[2].test_x, base.test_x[:, perm])

    def test_pixel_multisets_preserved(self, base):
        stream = ts.make_permuted_stream(base, perm_cfg())
        for task in stream:
            np.testing.assert_array_equal(
                np.sort(task.train_x, axis=1), np.sort(base.train_x, axis=1)
            )

    def test_labels_unchanged(self, base):
        stream = ts.make_permuted_stream(base, perm_cfg())
        for task in stream:
            np.testing.assert_array_equal(task.train_y, base.train_y)

    def test_reproducible_per_seed(self, base):
        a = ts.make_permuted_stream(base, perm_cfg(seed=9))
        b = ts.make_permuted_stream(base, perm_cfg(seed=9))
        for ta, tb in zip(a, b):
            np.testing.assert_array_equal(ta.train_x, tb.train_x)


class TestSplitStream:
    def split_cfg(self, total, per_task, seed=5, kind="split_disjoint"):
        return ts.StreamConfig(
            kind=kind, total_tasks=total, cv_tasks=0, seed=seed, classes_per_task=per_task
        )

    def test_disjoint_partitions_label_space(self, base):
        stream = ts.make_split_stream(base, self.split_cfg(5, 2), with_replacement=False)
        sets = [set(t.class_names) for t in stream]
        assert set().union(*sets) == set(range(10))
        for i in range(len(sets)):
            for j in range(i + 1, len(sets)):
                assert not sets[i] & sets[j]

    def test_disjoint_needs_enough_classes(self, base):
        with pytest.raises(InsufficientClasses):
            ts.make_split_stream(base, self.split_cfg(6, 2), with_replacement=False)

    def test_replacement_mode_allows_overlap(self, base):
        cfg = self.split_cfg(8, 5, seed=12, kind="split_with_replacement")
        stream = ts.make_split_stream(base, cfg, with_replacement=True)
        sets = [set(t.class_names) for t in stream]
        assert any(sets[i] & sets[j] for i in range(8) for j in range(i + 1, 8))

    def test_labels_reindexed(self, base):
        stream = ts.make_split_stream(base, self.split_cfg(5, 2), with_replacement=False)
        for task in stream:
            assert set(np.unique(task.train_y)) <= {0, 1}
            assert set(np.unique(task.test_y)) <= {0, 1}

    def test_samples_match_their_classes(self, base):
        stream = ts.make_split_stream(base, self.split_cfg(5, 2), with_replacement=False)
        for task in stream:
            # undo the re-indexing and compare against the base labels
            original = np.array(task.class_names)[task.train_y]
            mask = np.isin(base.train_y, task.class_names)
            np.testing.assert_array_equal(np.sort(original), np.sort(base.train_y[mask]))


class TestCvEvalSplit:
    def test_paper_scale_counts(self, base):
        stream = [object()] * 20
        cv, ev = ts.split_cv_eval(stream, 3)
        assert len(cv) == 3 and len(ev) == 17

    def test_zero_cv(self):
        stream = [1, 2, 3]
        cv, ev = ts.split_cv_eval(stream, 0)
        assert cv == [] and ev == stream

    def test_concatenation_restores_stream(self):
        stream = list(range(7))
        cv, ev = ts.split_cv_eval(stream, 2)
        assert cv + ev == stream


class TestIdxFormat:
    def test_image_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(4, 5, 3), dtype=np.uint8)
        path = tmp_path / "imgs.idx"
        ts.write_idx_images(path, images)
        np.testing.assert_array_equal(ts.read_idx(path), images)

    def test_label_round_trip(self, tmp_path):
        labels = np.array([0, 3, 9, 1], dtype=np.uint8)
        path = tmp_path / "labels.idx"
        ts.write_idx_labels(path, labels)
        np.testing.assert_array_equal(ts.read_idx(path), labels)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.idx"
        path.write_bytes(b"\x00\x00\x09\x99" + b"\x00" * 16)
        with pytest.raises(BadMagic):
            ts.read_idx(path)

    def test_truncated_payload_rejected(self, tmp_path):
        images = np.zeros((4, 5, 3), dtype=np.uint8)
        path = tmp_path / "imgs.idx"
        ts.write_idx_images(path, images)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(TruncatedFile):
            ts.read_idx(path)

    def test_dataset_loading_scales_and_limits(self, tmp_path):
        rng = np.random.default_rng(1)
        tr_i = rng.integers(0, 256, size=(10, 4, 4), dtype=np.uint8)
        tr_l = rng.integers(0, 3, size=10).astype(np.uint8)
        te_i = rng.integers(0, 256, size=(6, 4, 4), dtype=np.uint8)
        te_l = rng.integers(0, 3, size=6).astype(np.uint8)
        paths = {}
        for name, arr, writer in [
            ("tri", tr_i, ts.write_idx_images), ("trl", tr_l, ts.write_idx_labels),
            ("tei", te_i, ts.write_idx_images), ("tel", te_l, ts.write_idx_labels),
        ]:
            paths[name] = tmp_path / f"{name}.idx"
            writer(paths[name], arr)
        data = ts.load_idx_dataset(
            paths["tri"], paths["trl"], paths["tei"], paths["tel"],
            train_limit=8, test_limit=None,
        )
        assert data.train_x.shape == (8, 16)
        assert data.test_x.shape == (6, 16)
        assert data.train_x.min() >= 0.0 and data.train_x.max() <= 1.0
        np.testing.assert_allclose(data.train_x[0], tr_i[0].reshape(-1) / 255.0)

    def test_count_mismatch_rejected(self, tmp_path):
        ts.write_idx_images(tmp_path / "i.idx", np.zeros((3, 2, 2), dtype=np.uint8))
        ts.write_idx_labels(tmp_path / "l.idx", np.zeros(4, dtype=np.uint8))
        with pytest.raises(TruncatedFile):
            ts.load_idx_dataset(
                tmp_path / "i.idx", tmp_path / "l.idx", tmp_path / "i.idx", tmp_path / "l.idx"
            )


class TestSyntheticBase:
    def test_empty_when_per_class_zero(self):
        data = ts.make_synthetic_base(classes=3, dim=4, per_class=0, seed=0)
        assert data.train_x.shape == (0, 4)

    def test_reproducible(self):
        a = ts.make_synthetic_base(4, 6, 10, seed=2)
        b = ts.make_synthetic_base(4, 6, 10, seed=2)
        np.testing.assert_array_equal(a.train_x, b.train_x)
        np.testing.assert_array_equal(a.test_y, b.test_y)

    def test_needs_two_classes(self):
        with pytest.raises(ValueError):
            ts.make_synthetic_base(1, 4, 10, seed=0)

    def test_linear_probe_separates_clusters(self, base):
        # least-squares probe to one-hot targets should clear 90% train accuracy
        X = np.hstack([base.train_x, np.ones((len(base.train_x), 1))])
        Y = np.eye(base.num_classes)[base.train_y]
        W, *_ = np.linalg.lstsq(X, Y, rcond=None)
        acc = np.mean(np.argmax(X @ W, axis=1) == base.train_y)
        assert acc > 0.9


def test_stream_config_validation():
    with pytest.raises(ValueError):
        ts.StreamConfig(kind="bogus", total_tasks=3, cv_tasks=0, seed=0)
    with pytest.raises(ValueError):
        ts.StreamConfig(kind="permuted", total_tasks=3, cv_tasks=3, seed=0)
    with pytest.raises(ValueError):
        ts.StreamConfig(kind="split_disjoint", total_tasks=3, cv_tasks=0, seed=0)
