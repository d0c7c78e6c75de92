"""Centralized random forest over the pooled columns, and equivalence checks.

The oracle draws rows and features from the same per-tree streams as the
federated master, searches splits with the same CART code and breaks ties
in the same order (improvement, then party rank, then feature id, then
threshold). With shared randomness the federated model must therefore
match it node for node, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .prediction import aggregate_forest, tree_labels
from .training import TrainConfig, n_classes_of, sample_tree_inputs, should_stop, tree_rng
from .tree import (
    CLASSIFICATION, LEAF, OWNED, Forest, TreeBuilder, best_split_for_feature, leaf_label,
    route_complete,
)

VIRTUAL_RANK = 0


class FingerprintMismatch(ValueError):
    pass


def centralized_train(X, feature_ids, labels, config: TrainConfig,
                      master_view: dict | None = None) -> Forest:
    """Train on the pooled table ``X`` whose columns are ``feature_ids``.

    ``master_view`` (rank -> feature ids) is only used to break exact
    improvement ties the way the federated master does; without it every
    feature counts as rank 0.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if config.task == CLASSIFICATION:
        labels = labels.astype(np.int64)
    feature_ids = [int(f) for f in feature_ids]
    if X.shape != (len(labels), len(feature_ids)):
        raise ValueError(f"table shape {X.shape} does not match "
                         f"{len(labels)} labels x {len(feature_ids)} features")
    if master_view is None:
        master_view = {VIRTUAL_RANK: tuple(sorted(feature_ids))}
    rank_of = {f: r for r, ids in master_view.items() for f in ids}
    if set(rank_of) != set(feature_ids):
        raise ValueError("master view does not cover the table's features")
    columns = {f: X[:, j] for j, f in enumerate(feature_ids)}
    n_classes = n_classes_of(labels, config.task)
    forest = Forest(config.task, config.m, fingerprint=config.fingerprint())
    for t in range(config.n_trees):
        rows, feats = sample_tree_inputs(tree_rng(config.seed, t), len(labels), master_view, config)
        chosen = sorted((rank_of[f], f) for ids in feats.values() for f in ids)
        builder = TreeBuilder()
        _grow(builder, rows, 1, columns, labels, [f for _, f in chosen], config, n_classes)
        forest.trees.append(builder.tree.check())
    return forest


def _grow(builder, rows, depth, columns, labels, order, config, n_classes):
    nid = builder.reserve()
    y = labels[rows]
    if should_stop(depth, y, config):
        builder.leaf(nid, leaf_label(y, config.task))
        return nid
    best = None
    for f in order:
        cand = best_split_for_feature(columns[f][rows], y, config.task, config.min_samples_leaf,
                                      n_classes, feature=f)
        if cand is not None and (best is None or cand.improvement > best.improvement):
            best = cand
    if best is None or best.improvement < config.min_impurity_decrease:
        builder.leaf(nid, leaf_label(y, config.task))
        return nid
    go_left = columns[best.feature][rows] <= best.threshold
    lid = _grow(builder, rows[go_left], depth + 1, columns, labels, order, config, n_classes)
    rid = _grow(builder, rows[~go_left], depth + 1, columns, labels, order, config, n_classes)
    builder.internal(nid, OWNED, lid, rid, owner=VIRTUAL_RANK, feature=best.feature,
                     threshold=best.threshold)
    return nid


def predict_complete(forest: Forest, X, feature_ids) -> np.ndarray:
    """Forest prediction by direct routing through complete trees."""
    X = np.asarray(X, dtype=np.float64)
    index = {int(f): j for j, f in enumerate(feature_ids)}
    if X.shape[0] == 0:
        return np.empty(0, dtype=np.int64 if forest.task == CLASSIFICATION else np.float64)
    per_tree = [tree_labels(t, route_complete(t, X, index)) for t in forest.trees]
    return aggregate_forest(np.vstack(per_tree), forest.task)


def score(task: str, y_true, y_pred) -> float:
    """Accuracy for classification, RMSE for regression."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.size == 0:
        return float("nan")
    if task == CLASSIFICATION:
        return float(np.mean(y_true.astype(np.int64) == y_pred.astype(np.int64)))
    return float(np.sqrt(np.mean((y_true.astype(np.float64) - y_pred) ** 2)))


@dataclass
class EquivalenceReport:
    structural_equal: bool
    first_divergence: tuple | None
    prediction_equal: bool
    accuracy_federated: float | None = None
    accuracy_centralized: float | None = None
    metric: str = "accuracy"

    def to_dict(self) -> dict:
        return {
            "structural_equal": self.structural_equal,
            "first_divergence": None if self.first_divergence is None else dict(
                zip(("tree", "node", "field", "federated", "centralized"), self.first_divergence)),
            "prediction_equal": self.prediction_equal,
            "metric": self.metric,
            "accuracy_federated": self.accuracy_federated,
            "accuracy_centralized": self.accuracy_centralized,
        }


def first_divergence(a: Forest, b: Forest):
    """First differing (tree, node, field, a value, b value), or ``None``.

    Owner ranks are not compared: the oracle owns everything itself.
    """
    if a.n_trees != b.n_trees:
        return (None, None, "n_trees", a.n_trees, b.n_trees)
    for t, (ta, tb) in enumerate(zip(a.trees, b.trees)):
        for i in range(max(len(ta.nodes), len(tb.nodes))):
            if i >= len(ta.nodes) or i >= len(tb.nodes):
                return (t, i, "node_count", len(ta.nodes), len(tb.nodes))
            na, nb = ta.nodes[i], tb.nodes[i]
            if (na.kind == LEAF) != (nb.kind == LEAF):
                return (t, i, "kind", na.kind, nb.kind)
            for name in ("left", "right", "feature", "threshold", "label"):
                va, vb = getattr(na, name), getattr(nb, name)
                if va != vb or type(va) is not type(vb):
                    return (t, i, name, va, vb)
    return None


def assert_equivalent(federated: Forest, centralized: Forest, X_test=None, feature_ids=None,
                      y_test=None) -> EquivalenceReport:
    if federated.fingerprint != centralized.fingerprint:
        raise FingerprintMismatch(
            f"config fingerprints differ: {federated.fingerprint} vs {centralized.fingerprint}")
    div = first_divergence(federated, centralized)
    report = EquivalenceReport(div is None, div, True,
                               metric="accuracy" if federated.task == CLASSIFICATION else "rmse")
    if X_test is not None:
        pf = predict_complete(federated, X_test, feature_ids)
        pc = predict_complete(centralized, X_test, feature_ids)
        report.prediction_equal = bool(np.array_equal(pf, pc))
        if y_test is not None:
            report.accuracy_federated = score(federated.task, y_test, pf)
            report.accuracy_centralized = score(centralized.task, y_test, pc)
    return report
