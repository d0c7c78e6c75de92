from dataclasses import replace

import numpy as np
import pytest

from fedforest import (
    TrainConfig, assert_equivalent, centralized_train, stack_columns, train_federated,
)
from fedforest.oracle import FingerprintMismatch, first_divergence, score
from fedforest.tree import forest_to_json
from conftest import federated_data, make_table


def fed_and_oracle(table, m, cfg, seed=0):
    train, test, view = federated_data(table, m, seed, test_fraction=0.25)
    res = train_federated(train, cfg, view)
    X, fids = stack_columns(train)
    cen = centralized_train(X, fids, train[0].labels, cfg, view)
    return res, cen, test


def test_single_party_matches_oracle():
    cfg = TrainConfig(n_trees=3, max_depth=6, m=1, seed=4)
    res, cen, test = fed_and_oracle(make_table(4, n=100, d=4), 1, cfg)
    X, fids = stack_columns(test)
    rep = assert_equivalent(res.forest, cen, X, fids, test[0].labels)
    assert rep.structural_equal and rep.first_divergence is None and rep.prediction_equal
    assert rep.accuracy_federated == rep.accuracy_centralized


def test_pure_labels_give_leaves():
    table = make_table(0, n=30, d=3)
    table.labels[:] = 1
    X = table.rows
    cen = centralized_train(X, [0, 1, 2], table.labels, TrainConfig(n_trees=3))
    assert all(len(t.nodes) == 1 and t.nodes[0].label == 1 for t in cen.trees)


def test_oracle_deterministic():
    table = make_table(1, n=60, d=4, task="regression")
    cfg = TrainConfig(task="regression", n_trees=3, seed=9)
    a = centralized_train(table.rows, [0, 1, 2, 3], table.labels, cfg)
    b = centralized_train(table.rows, [0, 1, 2, 3], table.labels, cfg)
    assert forest_to_json(a) == forest_to_json(b)


def test_injected_threshold_mutation_is_located():
    cfg = TrainConfig(n_trees=2, max_depth=5, m=2, seed=1)
    res, cen, _ = fed_and_oracle(make_table(2, n=80, d=5), 2, cfg)
    tree = cen.trees[1]
    nid = tree.internal()[0]
    tree.nodes[nid] = replace(tree.nodes[nid], threshold=tree.nodes[nid].threshold + 1e-9)
    rep = assert_equivalent(res.forest, cen)
    assert not rep.structural_equal
    assert rep.first_divergence[:3] == (1, nid, "threshold")


def test_fingerprint_mismatch():
    table = make_table(3, n=40, d=3)
    cfg = TrainConfig(n_trees=1, m=2)
    a = centralized_train(table.rows, [0, 1, 2], table.labels, cfg)
    b = centralized_train(table.rows, [0, 1, 2], table.labels, replace(cfg, seed=99))
    with pytest.raises(FingerprintMismatch):
        assert_equivalent(a, b)


def test_first_divergence_counts_trees():
    cfg = TrainConfig(n_trees=2, m=2)
    res, cen, _ = fed_and_oracle(make_table(5, n=40, d=3), 2, cfg)
    assert first_divergence(res.forest, replace(cen, trees=cen.trees[:1]))[2] == "n_trees"


def test_score():
    assert score("classification", [0, 1, 1], np.array([0, 1, 0])) == pytest.approx(2 / 3)
    assert score("regression", [0.0, 2.0], np.array([0.0, 0.0])) == pytest.approx(np.sqrt(2))


def test_shape_check():
    with pytest.raises(ValueError):
        centralized_train(np.zeros((3, 2)), [0], [0, 1, 0], TrainConfig())
