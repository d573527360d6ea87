import numpy as np
import pytest

from ccgm import data


class TestCheckmark:
    def test_rules_hold_on_every_row(self):
        ds = data.gen_checkmark(5000, seed=3)
        a, b, c, d = ds.labels.T
        assert np.array_equal(c, 1.0 - b)
        assert np.array_equal(d, a * b)
        assert np.array_equal(ds.features[:, 2], -ds.features[:, 1])

    def test_sample_sign_semantics(self):
        ds = data.gen_checkmark(2000, seed=0)
        row = np.argmax((ds.features[:, 0] > 0) & (ds.features[:, 1] > 0))
        assert ds.labels[row, 0] == 1 and ds.labels[row, 1] == 1
        assert ds.labels[row, 2] == 0 and ds.labels[row, 3] == 1

    def test_label_mean_near_half(self):
        ds = data.gen_checkmark(10000, seed=1)
        assert abs(ds.labels[:, 0].mean() - 0.5) <= 0.02

    def test_ground_truth_graph(self):
        ds = data.gen_checkmark(10, seed=2)
        assert set(ds.ground_truth_graph) == {("b", "c"), ("a", "d"), ("b", "d")}

    def test_zero_rows_rejected(self):
        with pytest.raises(ValueError):
            data.gen_checkmark(0, seed=1)

    def test_deterministic_in_seed(self):
        d1, d2 = data.gen_checkmark(100, seed=9), data.gen_checkmark(100, seed=9)
        assert np.array_equal(d1.features, d2.features)
        assert np.array_equal(d1.labels, d2.labels)


class TestScmGenerator:
    def test_noiseless_rows_satisfy_equations(self):
        ds = data.gen_scm_dataset(data.dsprites_lite(), 3000, seed=4)
        v = {name: ds.labels[:, i] for i, name in enumerate(ds.concept_names)}
        assert np.array_equal(v["size"], v["shape"] * v["pos_x"])
        assert np.array_equal(v["color"], v["shape"] * v["pos_y"])
        assert np.array_equal(v["label"], v["size"] * v["color"])

    def test_label_noise_flip_rate(self):
        ds = data.gen_scm_dataset(data.dsprites_lite(), 10000, seed=5, label_noise=0.1)
        clean = data.gen_scm_dataset(data.dsprites_lite(), 10000, seed=5, label_noise=0.0)
        rate = np.mean(ds.labels != clean.labels)
        assert abs(rate - 0.1) <= 0.02

    def test_single_root_frequency(self):
        scm = data.GroundTruthScm(["r"], {"r": data.ScmEquation([], None, 0.3)},
                                  nuisance_dims=0)
        ds = data.gen_scm_dataset(scm, 10000, seed=6)
        assert abs(ds.labels[:, 0].mean() - 0.3) <= 0.02

    def test_cyclic_spec_rejected(self):
        with pytest.raises(ValueError, match="cyclic"):
            data.GroundTruthScm(
                ["x", "y"],
                {"x": data.ScmEquation(["y"], lambda v: v["y"]),
                 "y": data.ScmEquation(["x"], lambda v: v["x"])})

    def test_edges_reported(self):
        assert ("shape", "size") in data.dsprites_lite().edges()


class TestIncompleteness:
    def test_ratio_zero_exposes_all_factors(self):
        ds = data.gen_incompleteness(100, seed=7, ratio=0.0)
        assert ds.k == 11  # 10 factors + task

    def test_ratio_09_exposes_one(self):
        ds = data.gen_incompleteness(100, seed=7, ratio=0.9)
        assert ds.k == 2
        assert ds.concept_names == ["f0", "task"]

    def test_exposed_columns_are_prefix_of_full(self):
        full = data.gen_incompleteness(500, seed=8, ratio=0.0)
        partial = data.gen_incompleteness(500, seed=8, ratio=0.5)
        assert np.array_equal(partial.labels[:, :-1], full.labels[:, :partial.k - 1])
        assert np.array_equal(partial.labels[:, -1], full.labels[:, -1])


class TestSplit:
    def test_sizes(self):
        ds = data.gen_checkmark(100, seed=1)
        tr, va, te = data.split_dataset(ds, (0.8, 0.1, 0.1), seed=1)
        assert (tr.n, va.n, te.n) == (80, 10, 10)

    def test_partition_is_exact(self):
        ds = data.gen_checkmark(200, seed=2)
        tr, va, te = data.split_dataset(ds, (0.6, 0.2, 0.2), seed=3)
        stacked = np.concatenate([tr.features, va.features, te.features])
        assert sorted(map(tuple, stacked)) == sorted(map(tuple, ds.features))

    def test_deterministic_and_seed_sensitive(self):
        ds = data.gen_checkmark(100, seed=4)
        a1 = data.split_dataset(ds, (0.8, 0.1, 0.1), seed=5)[0]
        a2 = data.split_dataset(ds, (0.8, 0.1, 0.1), seed=5)[0]
        b = data.split_dataset(ds, (0.8, 0.1, 0.1), seed=6)[0]
        assert np.array_equal(a1.features, a2.features)
        assert not np.array_equal(a1.features, b.features)

    def test_bad_fractions_rejected(self):
        ds = data.gen_checkmark(10, seed=1)
        with pytest.raises(ValueError):
            data.split_dataset(ds, (0.5, 0.2, 0.2), seed=1)


class TestPerturb:
    def test_zero_strength_unchanged(self):
        ds = data.gen_checkmark(50, seed=1)
        out = data.perturb_features(ds, 0.0, seed=2)
        assert np.array_equal(out.features, ds.features)

    def test_labels_untouched(self):
        ds = data.gen_checkmark(50, seed=1)
        out = data.perturb_features(ds, 2.0, seed=2)
        assert np.array_equal(out.labels, ds.labels)
        assert not np.array_equal(out.features, ds.features)

    def test_negative_strength_rejected(self):
        with pytest.raises(ValueError):
            data.perturb_features(data.gen_checkmark(5, seed=1), -1.0, seed=0)


def test_csv_round_trip(tmp_path):
    ds = data.gen_checkmark(25, seed=11)
    path = tmp_path / "check.csv"
    data.save_csv(ds, path)
    back = data.load_csv(path)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert back.concept_names == ds.concept_names
    assert set(back.ground_truth_graph) == set(ds.ground_truth_graph)
    first = path.read_text().splitlines()[0]
    assert first == "x_0,x_1,x_2,v_0,v_1,v_2,v_3"
