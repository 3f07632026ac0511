"""Random forest of CART trees with rule extraction, built from scratch.

Trees are grown on bootstrap samples with per-split random feature subsets
and Gini impurity splits. A small pilot forest ranks features by mean
impurity decrease; the raw-feature pool is pruned to its top half before the
main forest is trained, while indicator columns always stay in the pool.
Training is deterministic for a fixed seed: per-tree generators are derived
from the master seed, and concurrent training would have to reproduce the
same per-tree streams.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from cpsmine.errors import ConfigError, ShapeError

FOREST_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    tree_count: int = 88
    sample_size: int | None = None      # bootstrap size n; default ceil(0.7 m)
    feature_budget: int | None = None   # per-split subset size; default ceil(sqrt(pool))
    max_depth: int = 12
    min_leaf: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.tree_count < 1:
            raise ConfigError("tree_count must be >= 1")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ConfigError("min_leaf must be >= 1")


@dataclass
class Leaf:
    counts: dict[int, int]
    prediction: int


@dataclass
class Split:
    feature: int
    threshold: float
    left: "Split | Leaf"
    right: "Split | Leaf"


@dataclass
class Forest:
    trees: list[Split | Leaf]
    columns: list[str]
    classes: list[int]
    config: ForestConfig
    feature_pool: list[int]
    bootstrap_indices: list[np.ndarray] = field(default_factory=list, repr=False)

    def classify(self, row) -> tuple[int, float]:
        """Plurality vote over the trees; ties go to the lower label code."""
        row = np.asarray(row, dtype=float)
        if row.shape != (len(self.columns),):
            raise ShapeError(
                f"row has shape {row.shape}, expected ({len(self.columns)},)"
            )
        votes = Counter(_predict_tree(tree, row) for tree in self.trees)
        top = max(votes.values())
        label = min(lbl for lbl, n in votes.items() if n == top)
        return label, top / len(self.trees)


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - (p * p).sum())


def _majority(counts: np.ndarray, classes: np.ndarray) -> int:
    top = counts.max()
    return int(classes[np.nonzero(counts == top)[0][0]])


def _best_split(x, y_idx, n_classes, feature_ids, min_leaf):
    """Lowest weighted child Gini over candidate (feature, midpoint) splits."""
    n = y_idx.shape[0]
    best = None  # (weighted, feature, threshold)
    onehot = np.eye(n_classes)[y_idx]
    for feat in feature_ids:
        col = x[:, feat]
        order = np.argsort(col, kind="stable")
        sv = col[order]
        cum = np.cumsum(onehot[order], axis=0)
        boundaries = np.nonzero(sv[:-1] != sv[1:])[0]
        if boundaries.size == 0:
            continue
        nl = boundaries + 1
        nr = n - nl
        ok = (nl >= min_leaf) & (nr >= min_leaf)
        if not ok.any():
            continue
        boundaries = boundaries[ok]
        nl, nr = nl[ok], nr[ok]
        left = cum[boundaries]
        right = cum[-1] - left
        gl = 1.0 - ((left / nl[:, None]) ** 2).sum(axis=1)
        gr = 1.0 - ((right / nr[:, None]) ** 2).sum(axis=1)
        weighted = (nl * gl + nr * gr) / n
        k = int(np.argmin(weighted))
        if best is None or weighted[k] < best[0]:
            thr = (sv[boundaries[k]] + sv[boundaries[k] + 1]) / 2.0
            best = (float(weighted[k]), feat, thr)
    return best


def _grow_tree(x, y_idx, classes, cfg: ForestConfig, pool, budget, rng, depth=0):
    counts = np.bincount(y_idx, minlength=len(classes))
    node_gini = _gini(counts)
    if (
        depth >= cfg.max_depth
        or node_gini == 0.0
        or y_idx.shape[0] < 2 * cfg.min_leaf
    ):
        return Leaf(dict(zip((int(c) for c in classes), (int(v) for v in counts))),
                    _majority(counts, classes))
    chosen = rng.choice(len(pool), size=min(budget, len(pool)), replace=False)
    feature_ids = sorted(pool[i] for i in chosen)
    best = _best_split(x, y_idx, len(classes), feature_ids, cfg.min_leaf)
    if best is None or best[0] >= node_gini:
        return Leaf(dict(zip((int(c) for c in classes), (int(v) for v in counts))),
                    _majority(counts, classes))
    _, feat, thr = best
    mask = x[:, feat] <= thr
    left = _grow_tree(x[mask], y_idx[mask], classes, cfg, pool, budget, rng, depth + 1)
    right = _grow_tree(x[~mask], y_idx[~mask], classes, cfg, pool, budget, rng, depth + 1)
    return Split(int(feat), float(thr), left, right)


def _predict_tree(node, row) -> int:
    while isinstance(node, Split):
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node.prediction


def _tree_importance(node, x, y_idx, n_classes, out) -> None:
    counts = np.bincount(y_idx, minlength=n_classes)
    if isinstance(node, Leaf) or y_idx.shape[0] == 0:
        return
    mask = x[:, node.feature] <= node.threshold
    yl, yr = y_idx[mask], y_idx[~mask]
    gl = _gini(np.bincount(yl, minlength=n_classes))
    gr = _gini(np.bincount(yr, minlength=n_classes))
    n = y_idx.shape[0]
    decrease = _gini(counts) - (yl.shape[0] * gl + yr.shape[0] * gr) / n
    out[node.feature] += decrease * n
    _tree_importance(node.left, x[mask], yl, n_classes, out)
    _tree_importance(node.right, x[~mask], yr, n_classes, out)


def _grow_many(x, y_idx, classes, cfg, pool, budget, n, seeds):
    trees, boots = [], []
    for seq in seeds:
        rng = np.random.default_rng(seq)
        idx = rng.integers(0, x.shape[0], size=n)
        trees.append(_grow_tree(x[idx], y_idx[idx], classes, cfg, pool, budget, rng))
        boots.append(idx)
    return trees, boots


def train_forest(features, labels, cfg: ForestConfig, columns=None) -> Forest:
    """Train the forest; see the module docstring for the feature-pool stages."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError("features and labels disagree")
    m, n_features = x.shape
    if m < 2:
        raise ConfigError("need at least 2 training samples")
    if columns is None:
        columns = [f"f{i}" for i in range(n_features)]
    if len(columns) != n_features:
        raise ShapeError("column names disagree with the feature count")
    n = cfg.sample_size if cfg.sample_size is not None else math.ceil(0.7 * m)
    if not 0 < n < m:
        raise ConfigError(f"bootstrap size n={n} must satisfy 0 < n < m={m}")
    if cfg.feature_budget is not None and not 0 < cfg.feature_budget < n_features:
        raise ConfigError(
            f"feature budget {cfg.feature_budget} must satisfy 0 < x' < {n_features}"
        )
    classes = np.unique(y)
    class_index = {int(c): i for i, c in enumerate(classes)}
    y_idx = np.array([class_index[int(v)] for v in y], dtype=int)

    from cpsmine.criteria import INDICATOR_COLUMNS

    indicator_ids = [i for i, c in enumerate(columns) if c in INDICATOR_COLUMNS]
    raw_ids = [i for i in range(n_features) if i not in set(indicator_ids)]

    root = np.random.SeedSequence(cfg.seed)
    pilot_seeds = root.spawn(10)
    main_seeds = root.spawn(cfg.tree_count)

    pool = list(range(n_features))
    if len(raw_ids) > 1:
        pilot_budget = max(1, math.ceil(math.sqrt(n_features)))
        pilot_trees, _ = _grow_many(
            x, y_idx, classes, cfg, list(range(n_features)), pilot_budget, n, pilot_seeds
        )
        importance = np.zeros(n_features)
        for tree in pilot_trees:
            _tree_importance(tree, x, y_idx, len(classes), importance)
        keep = math.ceil(len(raw_ids) / 2)
        ranked = sorted(raw_ids, key=lambda i: (-importance[i], i))
        pool = sorted(ranked[:keep] + indicator_ids)

    budget = (
        cfg.feature_budget
        if cfg.feature_budget is not None
        else max(1, math.ceil(math.sqrt(len(pool))))
    )
    budget = min(budget, len(pool))
    trees, boots = _grow_many(x, y_idx, classes, cfg, pool, budget, n, main_seeds)
    return Forest(
        trees=trees,
        columns=list(columns),
        classes=[int(c) for c in classes],
        config=cfg,
        feature_pool=pool,
        bootstrap_indices=boots,
    )


def oob_error(forest: Forest, features, labels) -> float:
    """Out-of-bag misclassification rate over samples left out by >= 1 tree."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    wrong = total = 0
    for i in range(x.shape[0]):
        votes = Counter(
            _predict_tree(tree, x[i])
            for tree, idx in zip(forest.trees, forest.bootstrap_indices)
            if i not in idx
        )
        if not votes:
            continue
        top = max(votes.values())
        label = min(lbl for lbl, v in votes.items() if v == top)
        total += 1
        wrong += int(label != int(y[i]))
    return wrong / total if total else 0.0


@dataclass(frozen=True)
class DecisionRule:
    predicates: tuple[tuple[str, str, float], ...]  # (feature name, "<=" or ">", threshold)
    category: int
    accuracy: float
    coverage: int

    def render(self) -> str:
        return " and ".join(f"({name} {op} {thr})" for name, op, thr in self.predicates)


def _paths(node, prefix):
    if isinstance(node, Leaf):
        yield prefix, node
        return
    yield from _paths(node.left, prefix + [(node.feature, "<=", node.threshold)])
    yield from _paths(node.right, prefix + [(node.feature, ">", node.threshold)])


def extract_rules(forest: Forest, features, labels) -> list[DecisionRule]:
    """Each root-to-leaf path becomes a rule, scored on the validation set.

    Accuracy is the fraction of covered validation rows whose label equals
    the leaf's category; zero-coverage rules are dropped. Sorted by accuracy,
    then coverage, descending.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    rules = []
    for tree in forest.trees:
        for path, leaf in _paths(tree, []):
            if not path:
                mask = np.ones(x.shape[0], dtype=bool)
            else:
                mask = np.ones(x.shape[0], dtype=bool)
                for feat, op, thr in path:
                    col = x[:, feat]
                    mask &= (col <= thr) if op == "<=" else (col > thr)
            coverage = int(mask.sum())
            if coverage == 0 or not path:
                continue
            accuracy = float((y[mask] == leaf.prediction).mean())
            rules.append(
                DecisionRule(
                    predicates=tuple(
                        (forest.columns[feat], op, float(thr)) for feat, op, thr in path
                    ),
                    category=leaf.prediction,
                    accuracy=accuracy,
                    coverage=coverage,
                )
            )
    rules.sort(key=lambda r: (-r.accuracy, -r.coverage, r.render()))
    return rules


def _node_to_dict(node) -> dict:
    if isinstance(node, Leaf):
        return {
            "leaf": True,
            "counts": {str(k): v for k, v in sorted(node.counts.items())},
            "prediction": node.prediction,
        }
    return {
        "leaf": False,
        "feature": None,  # filled by caller with the column name
        "feature_index": node.feature,
        "threshold": node.threshold,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _fill_names(node_dict: dict, columns: list[str]) -> dict:
    if not node_dict["leaf"]:
        node_dict["feature"] = columns[node_dict["feature_index"]]
        _fill_names(node_dict["left"], columns)
        _fill_names(node_dict["right"], columns)
    return node_dict


def forest_to_json(forest: Forest) -> str:
    doc = {
        "schema_version": FOREST_SCHEMA_VERSION,
        "columns": forest.columns,
        "classes": forest.classes,
        "feature_pool": forest.feature_pool,
        "config": {
            "tree_count": forest.config.tree_count,
            "sample_size": forest.config.sample_size,
            "feature_budget": forest.config.feature_budget,
            "max_depth": forest.config.max_depth,
            "min_leaf": forest.config.min_leaf,
            "seed": forest.config.seed,
        },
        "trees": [
            _fill_names(_node_to_dict(tree), forest.columns) for tree in forest.trees
        ],
    }
    return json.dumps(doc, sort_keys=True)


def _node_from_dict(node_dict: dict) -> Split | Leaf:
    if node_dict["leaf"]:
        return Leaf(
            {int(k): v for k, v in node_dict["counts"].items()},
            int(node_dict["prediction"]),
        )
    return Split(
        int(node_dict["feature_index"]),
        float(node_dict["threshold"]),
        _node_from_dict(node_dict["left"]),
        _node_from_dict(node_dict["right"]),
    )


def forest_from_json(text: str) -> Forest:
    doc = json.loads(text)
    if doc.get("schema_version") != FOREST_SCHEMA_VERSION:
        raise ValueError(f"unsupported forest schema: {doc.get('schema_version')}")
    cfg = ForestConfig(**doc["config"])
    return Forest(
        trees=[_node_from_dict(t) for t in doc["trees"]],
        columns=list(doc["columns"]),
        classes=[int(c) for c in doc["classes"]],
        config=cfg,
        feature_pool=[int(i) for i in doc["feature_pool"]],
    )
