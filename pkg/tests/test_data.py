"""Dataset handling: masks, conflict injection, synthesis, splits, and IO."""

import numpy as np
import pytest

from apln.data import (
    CorruptionSpec,
    DataError,
    DomainError,
    MultiViewDataset,
    augmentation_mask,
    generate_missing_mask,
    inject_conflict,
    load_dataset,
    save_dataset,
    split,
    synthesize_dataset,
)


def toy_dataset(n=20, v=3, k=2, d=4, seed=0):
    return synthesize_dataset(n, v, k, d, separation=3.0, seed=seed)


class TestMissingMask:
    @pytest.mark.parametrize("n,v,eta", [(100, 6, 0.3), (100, 6, 0.5), (57, 4, 0.25),
                                         (2000, 6, 0.4), (10, 2, 0.5)])
    def test_exact_zero_count(self, n, v, eta):
        mask = generate_missing_mask(n, v, eta, seed=1)
        assert (mask == 0).sum() == int(round(eta * v * n))
        assert np.all(mask.sum(axis=1) >= 1)

    def test_ten_by_two_half_missing(self):
        # eta=0.5 with V=2 forces exactly one missing view per row
        mask = generate_missing_mask(10, 2, 0.5, seed=3)
        assert np.all(mask.sum(axis=1) == 1)

    def test_zero_eta_all_observed(self):
        assert np.all(generate_missing_mask(50, 4, 0.0, seed=0) == 1)

    def test_infeasible_eta_rejected(self):
        with pytest.raises(DomainError):
            generate_missing_mask(10, 4, 0.9, seed=0)

    def test_seed_determinism(self):
        a = generate_missing_mask(200, 5, 0.4, seed=9)
        b = generate_missing_mask(200, 5, 0.4, seed=9)
        assert np.array_equal(a, b)


class TestConflictInjection:
    def test_exact_row_count_and_provenance(self):
        ds = toy_dataset(n=50, k=5)
        out, log = inject_conflict(ds, 0.4, seed=2)
        assert len(log) == round(0.4 * 50)
        rows = [rec["row"] for rec in log]
        assert len(set(rows)) == len(rows)  # one view per victim row
        for rec in log:
            assert ds.labels[rec["donor"]] != ds.labels[rec["row"]]
            v = rec["view"]
            assert np.array_equal(out.views[v][rec["row"]], ds.views[v][rec["donor"]])

    def test_untouched_rows_bitwise_equal(self):
        ds = toy_dataset(n=30, k=3)
        out, log = inject_conflict(ds, 0.3, seed=5)
        touched = {(rec["row"], rec["view"]) for rec in log}
        for v in range(ds.n_views):
            for row in range(ds.n_samples):
                if (row, v) not in touched:
                    assert np.array_equal(out.views[v][row], ds.views[v][row])

    def test_labels_and_mask_unchanged(self):
        ds = toy_dataset(n=30)
        out, _ = inject_conflict(ds, 0.5, seed=1)
        assert np.array_equal(out.labels, ds.labels)
        assert np.array_equal(out.mask, ds.mask)

    def test_single_class_rejected(self):
        ds = MultiViewDataset([np.zeros((6, 2))], np.zeros(6, dtype=int),
                              np.ones((6, 1)), n_classes=1)
        with pytest.raises(DomainError):
            inject_conflict(ds, 0.5, seed=0)


class TestSynthesis:
    def test_shapes_and_balance(self):
        ds = synthesize_dataset(100, 4, 5, 8, separation=2.0, seed=0)
        assert ds.n_samples == 100 and ds.n_views == 4 and ds.n_classes == 5
        assert ds.view_dims == [8, 8, 8, 8]
        assert np.all(np.bincount(ds.labels) == 20)
        assert np.all(ds.mask == 1)

    def test_separable_by_nearest_class_mean(self):
        # with separation 6 a nearest-centroid rule on one view is near-perfect
        ds = synthesize_dataset(1000, 2, 4, 16, separation=6.0, seed=0)
        x, y = ds.views[0], ds.labels
        centroids = np.stack([x[y == c].mean(axis=0) for c in range(4)])
        d2 = ((x[:, None, :] - centroids[None]) ** 2).sum(axis=2)
        assert (d2.argmin(axis=1) == y).mean() > 0.99

    def test_views_share_class_signal(self):
        ds = synthesize_dataset(400, 3, 2, 8, separation=4.0, seed=1)
        for v in range(1, 3):
            m0 = ds.views[v][ds.labels == 0].mean(axis=0)
            m1 = ds.views[v][ds.labels == 1].mean(axis=0)
            assert np.linalg.norm(m0 - m1) > 1.0

    def test_too_few_samples_rejected(self):
        with pytest.raises(DomainError):
            synthesize_dataset(5, 3, 4, 2, separation=1.0, seed=0)


class TestSplit:
    def test_stratified_counts_and_disjoint(self):
        ds = toy_dataset(n=100, k=4)
        train, test = split(ds, 0.25, seed=0)
        assert train.n_samples + test.n_samples == 100
        expected = sum(round(0.25 * (ds.labels == c).sum()) for c in range(4))
        assert test.n_samples == expected
        for c in range(4):
            assert (test.labels == c).sum() == round(0.25 * (ds.labels == c).sum())

    def test_determinism(self):
        ds = toy_dataset(n=60)
        a = split(ds, 0.2, seed=4)[1]
        b = split(ds, 0.2, seed=4)[1]
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.views[0], b.views[0])

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2])
    def test_bad_fraction_rejected(self, bad):
        with pytest.raises(DomainError):
            split(toy_dataset(), bad, seed=0)


class TestDatasetValidation:
    def test_row_without_observed_view_rejected(self):
        mask = np.ones((4, 2), dtype=int)
        mask[1] = 0
        with pytest.raises(DataError):
            MultiViewDataset([np.zeros((4, 3)), np.zeros((4, 3))],
                             np.zeros(4, dtype=int), mask, n_classes=2)

    def test_label_range_checked(self):
        with pytest.raises(DataError):
            MultiViewDataset([np.zeros((2, 3))], np.array([0, 5]),
                             np.ones((2, 1)), n_classes=2)

    def test_mask_shape_checked(self):
        with pytest.raises(DataError):
            MultiViewDataset([np.zeros((3, 2))], np.zeros(3, dtype=int),
                             np.ones((3, 2)), n_classes=1)

    def test_one_hot(self):
        ds = MultiViewDataset([np.zeros((3, 1))], np.array([0, 2, 1]),
                              np.ones((3, 1)), n_classes=3)
        assert np.array_equal(ds.one_hot(),
                              np.array([[1, 0, 0], [0, 0, 1], [0, 1, 0]], dtype=float))

    def test_missing_rate(self):
        mask = np.array([[1, 0], [1, 1]])
        ds = MultiViewDataset([np.zeros((2, 1)), np.zeros((2, 1))],
                              np.zeros(2, dtype=int), mask, n_classes=1)
        assert ds.missing_rate() == pytest.approx(0.25)

    def test_corruption_spec_validation(self):
        with pytest.raises(DomainError):
            CorruptionSpec(eta=1.0)
        with pytest.raises(DomainError):
            CorruptionSpec(conflict_fraction=1.5)


class TestIO:
    def test_save_load_round_trip(self, tmp_path):
        ds = toy_dataset(n=15)
        mask = generate_missing_mask(15, 3, 0.3, seed=0)
        ds = MultiViewDataset(ds.views, ds.labels, mask, ds.n_classes, "roundtrip")
        save_dataset(ds, tmp_path / "ds")
        back = load_dataset(tmp_path / "ds")
        assert back.name == "roundtrip"
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.mask, ds.mask)
        for a, b in zip(back.views, ds.views):
            assert np.array_equal(a, b)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError, match="manifest"):
            load_dataset(tmp_path)

    def test_missing_view_file(self, tmp_path):
        save_dataset(toy_dataset(n=10), tmp_path / "ds")
        (tmp_path / "ds" / "view_2.csv").unlink()
        with pytest.raises(DataError, match="view_2"):
            load_dataset(tmp_path / "ds")

    def test_mask_optional_defaults_to_observed(self, tmp_path):
        save_dataset(toy_dataset(n=10), tmp_path / "ds")
        (tmp_path / "ds" / "mask.csv").unlink()
        assert np.all(load_dataset(tmp_path / "ds").mask == 1)


class TestAugmentationMask:
    def test_never_reveals_missing(self, rng):
        source = generate_missing_mask(100, 4, 0.4, seed=0)
        out = augmentation_mask(source, 0.3, rng)
        assert np.all(out <= source)
        assert np.all(out.sum(axis=1) >= 1)

    def test_zero_rate_is_copy(self, rng):
        source = generate_missing_mask(50, 3, 0.2, seed=1)
        assert np.array_equal(augmentation_mask(source, 0.0, rng), source)

    def test_drops_about_the_requested_rate(self):
        rng = np.random.default_rng(0)
        source = np.ones((2000, 5), dtype=int)
        out = augmentation_mask(source, 0.3, rng)
        rate = (out == 0).mean()
        assert 0.25 < rate < 0.35
