"""Random forests on CART trees, grown by the selected kernel backend.

Everything stochastic is keyed off ForestConfig.seed: per-tree seeds are
pre-derived, so training is deterministic (and would stay so under
parallel tree construction). Classification predicts by majority vote
with probabilities as vote fractions; regression averages leaf means.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._backend import KERNELS
from .core import SeededRng, ValidationError

__all__ = ["ForestConfig", "DecisionTree", "RandomForest", "fit_tree", "fit_forest"]

FORMAT_VERSION = 1

_SPLIT_RULES = ("sqrt", "one_third", "all")


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: str | int = "sqrt"  # "sqrt", "one_third", "all" or a count
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1 or None")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")
        if isinstance(self.features_per_split, str):
            if self.features_per_split not in _SPLIT_RULES:
                raise ValidationError(
                    f"features_per_split rule {self.features_per_split!r} "
                    f"not one of {_SPLIT_RULES}"
                )
        elif self.features_per_split < 1:
            raise ValidationError("features_per_split count must be >= 1")

    def resolve_max_features(self, n_features: int) -> int:
        rule = self.features_per_split
        if rule == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        if rule == "one_third":
            return max(1, n_features // 3)
        if rule == "all":
            return n_features
        return min(int(rule), n_features)


@dataclass(frozen=True)
class DecisionTree:
    """Flat-array CART tree. Leaves have feature == -1 and child ids -1;
    value rows hold per-class training counts (classification) or the mean
    target (regression)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n_node_samples: np.ndarray
    impurity: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node id reached by each row of X."""
        nodes = np.zeros(len(X), dtype=np.int64)
        while True:
            f = self.feature[nodes]
            live = np.flatnonzero(f >= 0)
            if len(live) == 0:
                return nodes
            cur = nodes[live]
            go_left = X[live, f[live]] <= self.threshold[cur]
            nodes[live] = np.where(go_left, self.left[cur], self.right[cur])

    def leaf_means(self) -> np.ndarray:
        """Scalar output per node: the mean target, or for classifiers the
        majority class index (ties to the lowest class)."""
        if self.value.shape[1] == 1:
            return self.value[:, 0]
        return np.argmax(self.value, axis=1).astype(np.float64)


def _as_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError(f"X must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("X contains NaN or infinite values")
    return X


def fit_tree(X, y, config: ForestConfig, rng: SeededRng,
             task: str = "classification", n_classes: int | None = None) -> DecisionTree:
    """Grow a single CART tree; bootstrap/feature-subset seeds come from rng."""
    tree, _ = _fit_tree_sampled(X, y, config, rng, task, n_classes)
    return tree


def _fit_tree_sampled(X, y, config: ForestConfig, rng: SeededRng,
                      task: str, n_classes: int | None):
    X = _as_matrix(X)
    n = len(X)
    if n < 1:
        raise ValidationError("need at least one sample")
    if len(y) != n:
        raise ValidationError(f"X has {n} rows but y has {len(y)}")
    max_depth = -1 if config.max_depth is None else config.max_depth
    max_features = config.resolve_max_features(X.shape[1])

    if config.bootstrap:
        sample_idx = rng.randint_array(n, count=n)
    else:
        sample_idx = np.arange(n, dtype=np.int64)
    feature_seed = rng.next_u64()

    if task == "classification":
        y = np.asarray(y, dtype=np.int64)
        if y.min() < 0:
            raise ValidationError("class labels must be non-negative integers")
        k = n_classes if n_classes is not None else int(y.max()) + 1
        arrays = KERNELS.build_tree_classifier(
            X, y, k, sample_idx, max_depth, config.min_samples_leaf,
            max_features, feature_seed,
        )
    elif task == "regression":
        y = np.asarray(y, dtype=np.float64)
        if not np.all(np.isfinite(y)):
            raise ValidationError("y contains NaN or infinite values")
        arrays = KERNELS.build_tree_regressor(
            X, y, sample_idx, max_depth, config.min_samples_leaf,
            max_features, feature_seed,
        )
    else:
        raise ValidationError(f"unknown task {task!r}")
    return DecisionTree(**arrays), sample_idx


@dataclass(frozen=True)
class RandomForest:
    trees: tuple[DecisionTree, ...]
    config: ForestConfig
    task: str  # "classification" | "regression"
    n_features: int
    n_classes: int  # 0 for regression
    feature_names: tuple[str, ...] | None = None
    oob_indices: tuple[np.ndarray, ...] = field(default=(), repr=False)

    def _check_input(self, X) -> np.ndarray:
        X = _as_matrix(np.atleast_2d(X))
        if X.shape[1] != self.n_features:
            raise ValidationError(
                f"expected {self.n_features} features, got {X.shape[1]}"
            )
        return X

    def predict_proba(self, X) -> np.ndarray:
        if self.task != "classification":
            raise ValidationError("predict_proba is classification-only")
        X = self._check_input(X)
        votes = np.zeros((len(X), self.n_classes))
        for tree in self.trees:
            leaf = tree.apply(X)
            cls = np.argmax(tree.value[leaf], axis=1)
            votes[np.arange(len(X)), cls] += 1.0
        return votes / len(self.trees)

    def predict(self, X) -> np.ndarray:
        X = self._check_input(X)
        if self.task == "classification":
            return np.argmax(self.predict_proba(X), axis=1)
        acc = np.zeros(len(X))
        for tree in self.trees:
            acc += tree.value[tree.apply(X), 0]
        return acc / len(self.trees)

    def feature_importances(self) -> np.ndarray:
        """Mean decrease in impurity per feature, normalized to sum 1."""
        total = np.zeros(self.n_features)
        for tree in self.trees:
            internal = np.flatnonzero(tree.feature >= 0)
            if len(internal) == 0:
                continue
            root_n = float(tree.n_node_samples[0])
            contrib = np.zeros(self.n_features)
            for nid in internal:
                l, r = tree.left[nid], tree.right[nid]
                decrease = (
                    tree.n_node_samples[nid] * tree.impurity[nid]
                    - tree.n_node_samples[l] * tree.impurity[l]
                    - tree.n_node_samples[r] * tree.impurity[r]
                )
                contrib[tree.feature[nid]] += decrease / root_n
            total += contrib
        total /= len(self.trees)
        s = total.sum()
        if s <= 0.0:
            warnings.warn("all trees are single leaves; importances are zero", stacklevel=2)
            return np.zeros(self.n_features)
        return total / s

    def oob_score(self) -> float:
        """Out-of-bag accuracy (classification) or R^2 (regression)."""
        if not self.oob_indices:
            raise ValidationError("no out-of-bag samples recorded (bootstrap off?)")
        n = max(int(idx.max()) if len(idx) else -1 for idx in self.oob_indices) + 1
        if self.task == "classification":
            votes = np.zeros((n, self.n_classes))
        else:
            votes = np.zeros((n, 2))  # sum, count
        cache_X = self._oob_X
        for tree, oob in zip(self.trees, self.oob_indices):
            if len(oob) == 0:
                continue
            leaf = tree.apply(cache_X[oob])
            if self.task == "classification":
                cls = np.argmax(tree.value[leaf], axis=1)
                votes[oob, cls] += 1.0
            else:
                votes[oob, 0] += tree.value[leaf, 0]
                votes[oob, 1] += 1.0
        covered = np.flatnonzero(votes.sum(axis=1) > 0)
        y = self._oob_y[covered]
        if self.task == "classification":
            pred = np.argmax(votes[covered], axis=1)
            return float((pred == y).mean())
        pred = votes[covered, 0] / votes[covered, 1]
        ss_res = float(((y - pred) ** 2).sum())
        ss_tot = float(((y - y.mean()) ** 2).sum())
        return 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "task": self.task,
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "config": {
                "n_trees": self.config.n_trees,
                "max_depth": self.config.max_depth,
                "min_samples_leaf": self.config.min_samples_leaf,
                "features_per_split": self.config.features_per_split,
                "bootstrap": self.config.bootstrap,
                "seed": self.config.seed,
            },
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "n_node_samples": t.n_node_samples.tolist(),
                    "impurity": t.impurity.tolist(),
                    "value": t.value.tolist(),
                }
                for t in self.trees
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def from_json(cls, text: str) -> "RandomForest":
        doc = json.loads(text)
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ValidationError(
                f"unsupported model format_version {version!r} "
                f"(this build reads version {FORMAT_VERSION})"
            )
        cfg = ForestConfig(**doc["config"])
        trees = tuple(
            DecisionTree(
                feature=np.array(t["feature"], dtype=np.int32),
                threshold=np.array(t["threshold"], dtype=np.float64),
                left=np.array(t["left"], dtype=np.int32),
                right=np.array(t["right"], dtype=np.int32),
                n_node_samples=np.array(t["n_node_samples"], dtype=np.int64),
                impurity=np.array(t["impurity"], dtype=np.float64),
                value=np.array(t["value"], dtype=np.float64),
            )
            for t in doc["trees"]
        )
        names = doc.get("feature_names")
        return cls(
            trees=trees,
            config=cfg,
            task=doc["task"],
            n_features=doc["n_features"],
            n_classes=doc["n_classes"],
            feature_names=tuple(names) if names else None,
        )

    @classmethod
    def load(cls, path: str) -> "RandomForest":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def fit_forest(X, y, config: ForestConfig | None = None, task: str = "classification",
               feature_names=None) -> RandomForest:
    """Train a forest of config.n_trees trees.

    Each tree gets a bootstrap resample (with replacement, size n) and its
    own pre-derived seed, so the result depends only on (X, y, config).
    """
    config = config or ForestConfig()
    X = _as_matrix(X)
    n = len(X)
    if n < 1:
        raise ValidationError("need at least one sample")
    if feature_names is not None:
        feature_names = tuple(feature_names)
        if len(feature_names) != X.shape[1]:
            raise ValidationError(
                f"{len(feature_names)} feature names for {X.shape[1]} columns"
            )

    if task == "classification":
        y_arr = np.asarray(y, dtype=np.int64)
        n_classes = int(y_arr.max()) + 1
    else:
        y_arr = np.asarray(y, dtype=np.float64)
        n_classes = 0

    seed_rng = SeededRng(config.seed)
    tree_seeds = [seed_rng.next_u64() for _ in range(config.n_trees)]

    trees = []
    oob = []
    for ts in tree_seeds:
        tree, sample_idx = _fit_tree_sampled(
            X, y_arr, config, SeededRng(ts), task, n_classes
        )
        trees.append(tree)
        if config.bootstrap:
            mask = np.ones(n, dtype=bool)
            mask[sample_idx] = False
            oob.append(np.flatnonzero(mask))

    forest = RandomForest(
        trees=tuple(trees),
        config=config,
        task=task,
        n_features=X.shape[1],
        n_classes=n_classes,
        feature_names=feature_names,
        oob_indices=tuple(oob),
    )
    # stashed for oob_score; not part of the serialized model
    object.__setattr__(forest, "_oob_X", X)
    object.__setattr__(forest, "_oob_y", y_arr)
    return forest
