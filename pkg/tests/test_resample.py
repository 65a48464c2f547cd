from __future__ import annotations

import numpy as np
import pytest

from flowgate.data import ClassSchema, cicids2017_schema
from flowgate.errors import (
    InvalidPlan,
    KTooLarge,
    TargetAboveCurrent,
    TargetBelowCurrent,
    TooFewSamples,
    UnmappedClass,
)
from flowgate.resample import (
    DoubleBalanceSpec,
    ResamplingPlan,
    balance_to_level,
    categorize,
    double_balance,
    enn_clean,
    knn_indices,
    random_undersample,
    smote_oversample,
)
from flowgate.synth import blobs

from conftest import brute_force_knn, make_dataset, synthetic_is_interpolation


class TestKnnIndices:
    def test_three_points_on_a_line(self):
        pts = np.array([[0.0], [1.0], [10.0]])
        assert knn_indices(pts, 1).tolist() == [[1], [0], [1]]

    def test_k2_collinear_matches_oracle(self):
        pts = np.array([[0.0], [1.0], [10.0]])
        assert knn_indices(pts, 2).tolist() == brute_force_knn(pts, 2)

    def test_k_too_large(self):
        pts = np.zeros((3, 2))
        with pytest.raises(KTooLarge):
            knn_indices(pts, 3)

    def test_random_cloud_matches_oracle(self):
        rng = np.random.default_rng(0)
        pts = rng.standard_normal((40, 3))
        assert knn_indices(pts, 5).tolist() == brute_force_knn(pts, 5)

    def test_ties_break_by_ascending_index(self):
        # indices 1 and 2 are equidistant from index 0
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [5.0, 0.0]])
        assert knn_indices(pts, 2)[0].tolist() == [1, 2]

    def test_chunking_does_not_change_results(self):
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((30, 2))
        assert np.array_equal(knn_indices(pts, 4, chunk=7), knn_indices(pts, 4))


class TestSmoteOversample:
    def test_target_equals_current_is_noop(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]])
        out = smote_oversample(pts, 3, k=2, seed=0)
        assert np.array_equal(out, pts)

    def test_two_point_interpolation_is_on_the_diagonal(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0]])
        out = smote_oversample(pts, 3, k=1, seed=7)
        synth = out[2]
        assert synth[0] == pytest.approx(synth[1], abs=1e-12)
        assert 0.0 <= synth[0] <= 1.0

    def test_target_below_current(self):
        pts = np.zeros((5, 2))
        with pytest.raises(TargetBelowCurrent):
            smote_oversample(pts, 4, k=2, seed=0)

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            smote_oversample(np.zeros((1, 2)), 5, k=1, seed=0)

    def test_k_too_large(self):
        with pytest.raises(KTooLarge):
            smote_oversample(np.zeros((3, 2)), 5, k=3, seed=0)

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(2)
        pts = rng.standard_normal((20, 4))
        a = smote_oversample(pts, 50, k=5, seed=11)
        b = smote_oversample(pts, 50, k=5, seed=11)
        assert np.array_equal(a, b)

    def test_paper_scale_count_from_small_class(self):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((2000, 2))
        out = smote_oversample(pts, 600_000, k=5, seed=0)
        assert out.shape == (600_000, 2)

    def test_synthetics_are_neighbor_interpolations(self):
        rng = np.random.default_rng(4)
        pts = rng.standard_normal((30, 2))
        k = 4
        out = smote_oversample(pts, 60, k=k, seed=5)
        neighbors = brute_force_knn(pts, k)
        for s in out[30:]:
            assert synthetic_is_interpolation(s, pts, neighbors)

    def test_synthetics_stay_in_class_bounding_box(self):
        rng = np.random.default_rng(5)
        pts = rng.standard_normal((25, 3)) * 4
        out = smote_oversample(pts, 100, k=5, seed=6)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        assert (out >= lo - 1e-12).all() and (out <= hi + 1e-12).all()


class TestRandomUndersample:
    def test_identity_at_target(self):
        pts = np.arange(10.0).reshape(5, 2)
        assert np.array_equal(random_undersample(pts, 5, seed=0), pts)

    def test_output_is_subset(self):
        rng = np.random.default_rng(6)
        pts = rng.standard_normal((50, 2))
        out = random_undersample(pts, 20, seed=1)
        rows = {tuple(r) for r in pts}
        assert all(tuple(r) in rows for r in out)
        assert out.shape == (20, 2)

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(7)
        pts = rng.standard_normal((40, 3))
        assert np.array_equal(
            random_undersample(pts, 15, seed=3), random_undersample(pts, 15, seed=3)
        )

    def test_target_above_current(self):
        with pytest.raises(TargetAboveCurrent):
            random_undersample(np.zeros((3, 1)), 4, seed=0)


class TestBalanceToLevel:
    def test_mixed_over_and_undersampling(self):
        d = blobs({"A": 4, "B": 25}, {"A": [0, 0], "B": [5, 5]}, seed=8)
        out = balance_to_level(d, ResamplingPlan({"A": 10, "B": 10}, k_neighbors=3, seed=1))
        assert out.class_counts() == {"A": 10, "B": 10}

    def test_uniform_targets_total(self):
        counts = {f"atk{i}": 20 + i for i in range(14)}
        centers = {name: [3.0 * i, 0.0] for i, name in enumerate(counts)}
        d = blobs(counts, centers, seed=9)
        plan = ResamplingPlan({name: 250 for name in counts}, k_neighbors=5, seed=2)
        out = balance_to_level(d, plan)
        assert len(out) == 250 * 14
        assert set(out.class_counts().values()) == {250}

    def test_plan_equal_to_current_counts_is_identity_up_to_order(self):
        d = blobs({"A": 6, "B": 9}, {"A": [0, 0], "B": [4, 4]}, seed=10)
        out = balance_to_level(d, ResamplingPlan({"A": 6, "B": 9}, k_neighbors=2, seed=0))
        assert sorted(map(tuple, out.features)) == sorted(map(tuple, d.features))

    def test_untargeted_class_passes_through(self):
        d = blobs({"A": 5, "B": 8}, {"A": [0, 0], "B": [4, 4]}, seed=11)
        out = balance_to_level(d, ResamplingPlan({"A": 12}, k_neighbors=3, seed=0))
        assert out.class_counts() == {"A": 12, "B": 8}

    def test_k_at_least_class_size_needs_clamp(self):
        d = blobs({"A": 3, "B": 10}, {"A": [0, 0], "B": [4, 4]}, seed=12)
        plan = ResamplingPlan({"A": 8, "B": 10}, k_neighbors=5, seed=0)
        with pytest.raises(InvalidPlan):
            balance_to_level(d, plan)
        clamped = ResamplingPlan({"A": 8, "B": 10}, k_neighbors=5, seed=0, clamp_k=True)
        with pytest.warns(UserWarning):
            out = balance_to_level(d, clamped)
        assert out.class_counts()["A"] == 8

    def test_unknown_plan_class_rejected(self):
        d = blobs({"A": 5, "B": 5}, {"A": [0, 0], "B": [4, 4]}, seed=13)
        with pytest.raises(InvalidPlan):
            balance_to_level(d, ResamplingPlan({"C": 10}, seed=0))

    def test_deterministic_under_seed(self):
        d = blobs({"A": 6, "B": 30}, {"A": [0, 0], "B": [4, 4]}, seed=14)
        plan = ResamplingPlan({"A": 20, "B": 12}, k_neighbors=3, seed=9)
        a = balance_to_level(d, plan)
        b = balance_to_level(d, plan)
        assert np.array_equal(a.features, b.features)
        assert list(a.labels) == list(b.labels)


class TestEnnClean:
    def test_single_class_unchanged(self):
        d = blobs({"A": 20}, {"A": [0, 0]}, seed=15)
        out = enn_clean(d, k=3)
        assert len(out) == 20

    def test_lone_point_inside_foreign_cluster_removed(self):
        feats = [[0.0, 0.0]] + [[0.1, 0.0], [0.0, 0.1], [-0.1, 0.0], [0.0, -0.1], [0.1, 0.1]]
        d = make_dataset(feats, ["A"] + ["B"] * 5)
        out = enn_clean(d, k=3)
        assert "A" not in out.class_counts()

    def test_separated_pure_clusters_unchanged(self):
        d = blobs({"A": 15, "B": 15}, {"A": [0, 0], "B": [50, 50]}, scale=0.5, seed=16)
        out = enn_clean(d, k=3)
        assert len(out) == 30

    def test_removals_match_neighborhood_majority_oracle(self):
        d = blobs({"A": 30, "B": 30}, {"A": [0, 0], "B": [1.5, 1.5]}, seed=17)
        k = 5
        out = enn_clean(d, k=k)
        neighbors = brute_force_knn(d.features, k)
        survivors = {tuple(r) for r in out.features}
        for i in range(len(d)):
            votes: dict[str, int] = {}
            for j in neighbors[i]:
                votes[d.labels[j]] = votes.get(d.labels[j], 0) + 1
            top_label, top_count = max(votes.items(), key=lambda kv: kv[1])
            removed_expected = top_count * 2 > k and top_label != d.labels[i]
            assert (tuple(d.features[i]) not in survivors) == removed_expected

    def test_k_bounds(self):
        d = blobs({"A": 4}, {"A": [0, 0]}, seed=18)
        with pytest.raises(KTooLarge):
            enn_clean(d, k=4)


class TestCategorize:
    def test_stock_mapping(self):
        schema = cicids2017_schema()
        d = make_dataset([[0.0], [1.0]], ["DoS Hulk", "BENIGN"])
        out = categorize(d, schema)
        assert list(out.labels) == ["DoS", "Benign"]

    def test_unmapped_error_policy(self):
        schema = cicids2017_schema(unmapped_policy="error")
        d = make_dataset([[0.0]], ["Heartbleed"])
        with pytest.raises(UnmappedClass):
            categorize(d, schema)

    def test_unmapped_drop_policy(self):
        schema = cicids2017_schema()
        d = make_dataset([[0.0], [1.0]], ["Heartbleed", "PortScan"])
        out = categorize(d, schema)
        assert list(out.labels) == ["PortScan"]

    def test_unmapped_own_category_policy(self):
        schema = cicids2017_schema(unmapped_policy="own-category")
        d = make_dataset([[0.0], [1.0]], ["Heartbleed", "Bot"])
        out = categorize(d, schema)
        assert list(out.labels) == ["Heartbleed", "Bot"]
        assert "Heartbleed" in out.schema.classes

    def test_derived_schema_lists_categories(self):
        schema = cicids2017_schema()
        d = make_dataset([[0.0]], ["BENIGN"])
        out = categorize(d, schema)
        assert out.schema.classes == (
            "Benign", "Bot", "DDoS", "DoS", "Patator", "PortScan", "Web Attack"
        )
        assert out.schema.benign_class == "Benign"


class TestDoubleBalance:
    @staticmethod
    def _web_attack_like():
        schema = ClassSchema(
            classes=("Safe", "BruteForce", "XSS", "SQLi"),
            categories={
                "Safe": "Clean",
                "BruteForce": "Web",
                "XSS": "Web",
                "SQLi": "Web",
            },
            benign_class="Safe",
        )
        counts = {"Safe": 40, "BruteForce": 150, "XSS": 65, "SQLi": 21}
        centers = {
            "Safe": [0.0, 0.0],
            "BruteForce": [6.0, 0.0],
            "XSS": [0.0, 6.0],
            "SQLi": [6.0, 6.0],
        }
        return schema, blobs(counts, centers, seed=19)

    def test_level1_then_categorize_totals(self):
        schema, d = self._web_attack_like()
        spec = DoubleBalanceSpec(
            level1_targets={"BruteForce": 150, "XSS": 150, "SQLi": 150},
            level2_targets={},
            schema=schema,
            k_neighbors=5,
            seed=4,
        )
        out = double_balance(d, spec)
        assert out.class_counts() == {"Clean": 40, "Web": 450}

    def test_level2_exact_counts(self):
        schema, d = self._web_attack_like()
        spec = DoubleBalanceSpec(
            level1_targets={"BruteForce": 150, "XSS": 150, "SQLi": 150},
            level2_targets={"Clean": 120, "Web": 120},
            schema=schema,
            k_neighbors=5,
            seed=4,
        )
        out = double_balance(d, spec)
        assert out.class_counts() == {"Clean": 120, "Web": 120}

    def test_level1_noop_equals_categorize_plus_balance(self):
        schema, d = self._web_attack_like()
        level2 = {"Clean": 100, "Web": 100}
        via_double = double_balance(
            d,
            DoubleBalanceSpec({}, level2, schema, k_neighbors=5, seed=6),
        )
        via_compose = balance_to_level(
            categorize(d.with_schema(schema), schema),
            ResamplingPlan(level2, k_neighbors=5, seed=6),
        )
        assert via_double.class_counts() == via_compose.class_counts()
        assert np.array_equal(via_double.features, via_compose.features)

    def test_seven_uniform_level2_targets_total(self):
        schema = cicids2017_schema()
        counts = {name: 30 for name in schema.categories}
        centers = {
            name: [5.0 * i, 0.0] for i, name in enumerate(schema.categories)
        }
        d = blobs(counts, centers, seed=20).with_schema(schema)
        target = 80
        spec = DoubleBalanceSpec(
            level1_targets={},
            level2_targets={c: target for c in schema.category_names},
            schema=schema,
            k_neighbors=5,
            seed=7,
        )
        out = double_balance(d, spec)
        assert len(out) == 7 * target
        assert set(out.class_counts().values()) == {target}
