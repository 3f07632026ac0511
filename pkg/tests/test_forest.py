import hashlib
import json

import numpy as np
import pytest

from cpsmine.errors import ConfigError, ShapeError
from cpsmine.forest import (
    DecisionRule,
    Forest,
    ForestConfig,
    Leaf,
    Split,
    extract_rules,
    forest_from_json,
    forest_to_json,
    oob_error,
    train_forest,
)


def separable_data(seed=0, per_class=60, n_features=6, classes=(3, 7, 12)):
    """Classes sit on distinct plateaus of two informative features."""
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for k, label in enumerate(classes):
        block = rng.standard_normal((per_class, n_features)) * 0.1
        block[:, 0] += 10.0 * k
        block[:, 1] += -5.0 * k
        rows.append(block)
        labels.extend([label] * per_class)
    return np.vstack(rows), np.array(labels)


class TestTraining:
    def test_separable_training_accuracy(self):
        x, y = separable_data()
        forest = train_forest(x, y, ForestConfig(tree_count=10, seed=1))
        predictions = [forest.classify(row)[0] for row in x]
        assert (np.array(predictions) == y).mean() == 1.0

    def test_single_class_gives_single_leaves(self):
        x = np.random.default_rng(0).standard_normal((20, 3))
        y = np.full(20, 9)
        forest = train_forest(x, y, ForestConfig(tree_count=5, seed=0))
        assert all(isinstance(tree, Leaf) for tree in forest.trees)
        assert all(tree.prediction == 9 for tree in forest.trees)

    def test_same_seed_identical_serialization(self):
        x, y = separable_data(seed=2)
        a = train_forest(x, y, ForestConfig(tree_count=8, seed=5))
        b = train_forest(x, y, ForestConfig(tree_count=8, seed=5))
        assert forest_to_json(a) == forest_to_json(b)

    def test_different_seed_differs(self):
        x, y = separable_data(seed=2)
        a = train_forest(x, y, ForestConfig(tree_count=8, seed=5))
        b = train_forest(x, y, ForestConfig(tree_count=8, seed=6))
        assert forest_to_json(a) != forest_to_json(b)

    def test_heldout_accuracy(self):
        x, y = separable_data(seed=3, per_class=80)
        rng = np.random.default_rng(9)
        order = rng.permutation(len(y))
        train, test = order[:180], order[180:]
        forest = train_forest(x[train], y[train], ForestConfig(tree_count=20, seed=4))
        accuracy = np.mean([forest.classify(row)[0] == label for row, label in zip(x[test], y[test])])
        assert accuracy >= 0.95

    def test_bootstrap_size_validation(self):
        x, y = separable_data(per_class=5)
        with pytest.raises(ConfigError):
            train_forest(x, y, ForestConfig(tree_count=2, sample_size=15))
        with pytest.raises(ConfigError):
            train_forest(x, y, ForestConfig(tree_count=2, sample_size=200))

    def test_feature_budget_validation(self):
        x, y = separable_data(per_class=5)
        with pytest.raises(ConfigError):
            train_forest(x, y, ForestConfig(tree_count=2, feature_budget=6))

    def test_gini_decreases_at_every_split(self):
        x, y = separable_data(seed=6)
        forest = train_forest(x, y, ForestConfig(tree_count=6, seed=6))

        def gini(labels):
            _, counts = np.unique(labels, return_counts=True)
            p = counts / counts.sum()
            return 1.0 - (p * p).sum()

        def walk(node, rows, labels):
            if isinstance(node, Leaf) or len(labels) == 0:
                return
            mask = rows[:, node.feature] <= node.threshold
            parent = gini(labels)
            left, right = labels[mask], labels[~mask]
            weighted = (len(left) * gini(left) + len(right) * gini(right)) / len(labels)
            assert weighted < parent + 1e-12
            walk(node.left, rows[mask], left)
            walk(node.right, rows[~mask], right)

        for tree in forest.trees:
            walk(tree, x, y)

    def test_oob_error_bounded_and_improving(self):
        x, y = separable_data(seed=10, per_class=50)
        small = train_forest(x, y, ForestConfig(tree_count=10, seed=11))
        large = train_forest(x, y, ForestConfig(tree_count=30, seed=11))
        e_small, e_large = oob_error(small, x, y), oob_error(large, x, y)
        assert 0.0 <= e_small <= 1.0 and 0.0 <= e_large <= 1.0
        assert e_large <= e_small + 0.02


class TestClassify:
    def _constant_forest(self, predictions):
        trees = [Leaf({p: 1}, p) for p in predictions]
        return Forest(
            trees=trees, columns=["f0"], classes=sorted(set(predictions)),
            config=ForestConfig(tree_count=len(trees)), feature_pool=[0],
        )

    def test_unanimous_vote(self):
        forest = self._constant_forest([4, 4, 4])
        label, share = forest.classify([0.0])
        assert label == 4 and share == 1.0

    def test_tie_breaks_to_lower_label(self):
        forest = self._constant_forest([13, 7, 13, 7])
        label, share = forest.classify([0.0])
        assert label == 7 and share == 0.5

    def test_shape_checked(self):
        forest = self._constant_forest([1])
        with pytest.raises(ShapeError):
            forest.classify([0.0, 1.0])


class TestRules:
    def _stump_forest(self):
        tree = Split(0, 5.0, Leaf({1: 3}, 1), Leaf({2: 4}, 2))
        return Forest(
            trees=[tree], columns=["R3-PM7:V"], classes=[1, 2],
            config=ForestConfig(tree_count=1), feature_pool=[0],
        )

    def test_stump_gives_two_complementary_rules(self):
        forest = self._stump_forest()
        x = np.array([[1.0], [2.0], [8.0], [9.0]])
        y = np.array([1, 1, 2, 2])
        rules = extract_rules(forest, x, y)
        assert len(rules) == 2
        rendered = {r.render() for r in rules}
        assert rendered == {"(R3-PM7:V <= 5.0)", "(R3-PM7:V > 5.0)"}
        assert all(r.accuracy == 1.0 for r in rules)

    def test_rule_render_matches_published_shape(self):
        rule = DecisionRule(
            predicates=(
                ("R3-PM7:V", "<=", 130130.2713),
                ("R2-PM6:I", "<=", 383.337036),
                ("R2-PA3:VH", ">", 48.856111),
                ("R2-PM5:I", "<=", 486.88949),
            ),
            category=24,
            accuracy=0.978,
            coverage=45,
        )
        assert rule.render() == (
            "(R3-PM7:V <= 130130.2713) and (R2-PM6:I <= 383.337036) and "
            "(R2-PA3:VH > 48.856111) and (R2-PM5:I <= 486.88949)"
        )
        assert rule.category == 24 and rule.accuracy == 0.978

    def test_every_validation_row_hits_exactly_one_rule_per_tree(self):
        x, y = separable_data(seed=12)
        forest = train_forest(x, y, ForestConfig(tree_count=4, seed=12))
        rules = extract_rules(forest, x, y)
        per_tree = len(rules) // 4 if rules else 0
        # count rule coverage tree by tree via the predicates
        for tree in forest.trees:
            tree_rules = _tree_rules(tree, forest.columns, x, y)
            hits = np.zeros(len(x), dtype=int)
            for predicates, _ in tree_rules:
                mask = np.ones(len(x), dtype=bool)
                for name, op, thr in predicates:
                    col = x[:, forest.columns.index(name)]
                    mask &= (col <= thr) if op == "<=" else (col > thr)
                hits += mask.astype(int)
            assert (hits == 1).all()

    def test_accuracies_match_filter_and_count_oracle(self):
        x, y = separable_data(seed=13)
        forest = train_forest(x, y, ForestConfig(tree_count=5, seed=13))
        for rule in extract_rules(forest, x, y):
            mask = np.ones(len(x), dtype=bool)
            for name, op, thr in rule.predicates:
                col = x[:, forest.columns.index(name)]
                mask &= (col <= thr) if op == "<=" else (col > thr)
            covered = int(mask.sum())
            assert covered == rule.coverage
            assert (y[mask] == rule.category).mean() == rule.accuracy

    def test_sorted_by_accuracy_descending(self):
        x, y = separable_data(seed=14)
        noisy_y = y.copy()
        noisy_y[::7] = 3  # corrupt some labels so accuracies spread
        forest = train_forest(x, y, ForestConfig(tree_count=5, seed=14))
        rules = extract_rules(forest, x, noisy_y)
        accuracies = [r.accuracy for r in rules]
        assert accuracies == sorted(accuracies, reverse=True)


def _tree_rules(node, columns, x, y, prefix=()):
    if isinstance(node, Leaf):
        return [(prefix, node.prediction)]
    out = []
    out += _tree_rules(node.left, columns, x, y, prefix + ((columns[node.feature], "<=", node.threshold),))
    out += _tree_rules(node.right, columns, x, y, prefix + ((columns[node.feature], ">", node.threshold),))
    return out


class TestSerialization:
    def test_round_trip_preserves_classification(self):
        x, y = separable_data(seed=20)
        forest = train_forest(x, y, ForestConfig(tree_count=6, seed=20))
        clone = forest_from_json(forest_to_json(forest))
        for row in x[::10]:
            assert forest.classify(row) == clone.classify(row)

    def test_serialization_carries_feature_names(self):
        x, y = separable_data(seed=21)
        columns = [f"R1-PM{i}:V" for i in range(1, 7)]
        forest = train_forest(x, y, ForestConfig(tree_count=2, seed=21), columns=columns)
        doc = json.loads(forest_to_json(forest))
        assert doc["columns"] == columns

        def check_names(node):
            if node["leaf"]:
                return
            assert node["feature"] in columns
            check_names(node["left"])
            check_names(node["right"])

        for tree in doc["trees"]:
            check_names(tree)

    def test_hash_stability(self):
        x, y = separable_data(seed=22)
        digests = set()
        for _ in range(3):
            forest = train_forest(x, y, ForestConfig(tree_count=4, seed=22))
            digests.add(hashlib.sha256(forest_to_json(forest).encode()).hexdigest())
        assert len(digests) == 1
