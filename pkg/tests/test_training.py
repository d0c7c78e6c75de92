from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedforest import (
    ClientShard, ConfigError, TrainConfig, overlay, sample_tree_inputs, should_stop,
    train_federated,
)
from fedforest.protocol import LocalBest, SplitIndices
from fedforest.training import tree_rng
from fedforest.tree import LEAF, OPAQUE, OWNED, forest_to_json
from conftest import federated_data, make_table


def shards_from_columns(columns_by_rank, labels):
    """Hand-built aligned shards; feature ids are sequential in rank order."""
    n = len(labels)
    ids = [f"{i:04d}" for i in range(n)]
    shards, view, fid = [], {}, 0
    for rank in sorted(columns_by_rank):
        feats = {}
        for col in columns_by_rank[rank]:
            feats[fid] = np.asarray(col, dtype=float)
            fid += 1
        shards.append(ClientShard(rank, ids, feats, np.asarray(labels)))
        view[rank] = tuple(sorted(feats))
    return shards, view


def test_config_validation_and_text(tmp_path):
    c = TrainConfig(n_trees=3, seed=5)
    assert TrainConfig.from_text(c.to_text()) == c
    p = tmp_path / "c.cfg"
    p.write_text("n_trees = 7\n# comment\ntask = regression\n")
    assert TrainConfig.from_file(p, seed=2, m=None) == TrainConfig(n_trees=7, task="regression", seed=2)
    for bad in (dict(n_trees=0), dict(min_samples_split=1), dict(feature_fraction=0.0),
                dict(sample_fraction=1.5), dict(task="ranking"), dict(min_impurity_decrease=-1)):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)
    with pytest.raises(ConfigError):
        TrainConfig.from_text("bogus = 1\n")
    assert c.fingerprint() != TrainConfig(n_trees=3, seed=6).fingerprint()


def test_sample_tree_inputs_counts():
    view = {1: (0, 1), 2: (2, 3), 3: (4, 5)}
    full = TrainConfig(feature_fraction=1.0, sample_fraction=1.0, m=3)
    rows, feats = sample_tree_inputs(tree_rng(0, 0), 10, view, full)
    assert rows.tolist() == list(range(10)) and feats == view
    half = TrainConfig(feature_fraction=0.5, sample_fraction=0.5, m=3)
    rows, feats = sample_tree_inputs(tree_rng(0, 0), 10, view, half)
    assert len(rows) == 5 and len(set(rows.tolist())) == 5 and rows.tolist() == sorted(rows.tolist())
    assert sum(len(v) for v in feats.values()) == 3
    for r, ids in feats.items():
        assert set(ids) <= set(view[r])
    with pytest.raises(ConfigError):
        sample_tree_inputs(tree_rng(0, 0), 0, view, half)


def test_feature_draw_can_leave_a_party_empty():
    view = {1: (0, 1), 2: (2, 3), 3: (4, 5)}
    cfg = TrainConfig(feature_fraction=0.5, m=3)
    empties = sum(any(len(v) == 0 for v in sample_tree_inputs(tree_rng(0, t), 10, view, cfg)[1].values())
                  for t in range(50))
    assert empties > 0


def test_should_stop():
    cfg = TrainConfig(max_depth=3)
    assert should_stop(3, [0, 1], cfg)
    assert not should_stop(2, [0, 1], cfg)
    assert should_stop(1, [1], cfg)
    assert should_stop(1, [1, 1, 1], cfg)


def test_informative_feature_owner():
    rng = np.random.default_rng(0)
    n = 80
    signal = rng.normal(size=n)
    labels = (signal > 0.2).astype(int)
    shards, view = shards_from_columns(
        {1: [rng.normal(size=n)], 2: [signal], 3: [rng.normal(size=n)]}, labels)
    cfg = TrainConfig(n_trees=3, max_depth=4, feature_fraction=1.0, sample_fraction=1.0, m=3)
    res = train_federated(shards, cfg, view)
    for tree in res.forest.trees:
        assert set(tree.owners().values()) == {2}


def test_max_depth_one_gives_stumps_without_gathers(small_fed):
    train, _, view, cfg = small_fed
    res = train_federated(train, replace(cfg, max_depth=1), view)
    assert all(len(t.nodes) == 1 for t in res.forest.trees)
    assert res.stats["train"].gathers == 0


def test_duplicated_column_tie_goes_to_rank_one():
    rng = np.random.default_rng(1)
    col = rng.normal(size=40)
    labels = (col > 0).astype(int)
    shards, view = shards_from_columns({1: [col], 2: [col.copy()]}, labels)
    cfg = TrainConfig(n_trees=2, max_depth=3, feature_fraction=1.0, m=2)
    res = train_federated(shards, cfg, view)
    for tree in res.forest.trees:
        assert set(tree.owners().values()) == {1}


def test_client_without_features_is_all_opaque():
    rng = np.random.default_rng(2)
    a, b, c = rng.normal(size=(3, 60))
    labels = (a + b + c > 0).astype(int)
    shards, view = shards_from_columns({1: [a, b], 2: [c]}, labels)
    cfg = TrainConfig(n_trees=1, max_depth=4, feature_fraction=0.5, m=2)
    # pick a seed whose single tree draws no feature from party 2
    seed = next(s for s in range(100)
                if not sample_tree_inputs(tree_rng(s, 0), 60, view, cfg)[1][2])
    res = train_federated(shards, replace(cfg, seed=seed), view, record=True)
    assert any(n.kind == OPAQUE for n in res.partials[2].trees[0].nodes)
    assert all(n.kind in (LEAF, OPAQUE) for n in res.partials[2].trees[0].nodes)
    sent = [msg for d, _, msg in res.traces[2] if d == "send"]
    assert sent and all(isinstance(m, LocalBest) and m.improvement is None for m in sent)


def test_winner_at_root_of_three_node_tree():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    shards, view = shards_from_columns({1: [x], 2: [np.zeros(4)]}, [0, 0, 1, 1])
    cfg = TrainConfig(n_trees=1, max_depth=4, feature_fraction=1.0, sample_fraction=1.0, m=2)
    res = train_federated(shards, cfg, view)
    p1 = res.partials[1].trees[0]
    assert [n.kind for n in p1.nodes] == [OWNED, LEAF, LEAF]
    assert p1.nodes[0].threshold == 2.5
    assert [n.kind for n in res.partials[2].trees[0].nodes] == [OPAQUE, LEAF, LEAF]


def test_split_indices_partition_parent(small_fed):
    train, _, view, cfg = small_fed
    res = train_federated(train, cfg, view, record=True)
    for d, _, msg in res.traces[0]:
        if isinstance(msg, SplitIndices):
            assert not set(msg.left_ids) & set(msg.right_ids)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 4), st.integers(0, 1000), st.sampled_from(["classification", "regression"]))
def test_overlay_reconstructs_complete_forest(m, seed, task):
    table = make_table(seed, n=60, d=5, task=task, n_classes=3)
    train, _, view = federated_data(table, m, seed)
    cfg = TrainConfig(task=task, n_trees=2, max_depth=4, m=m, seed=seed)
    res = train_federated(train, cfg, view)
    for t, tree in enumerate(res.forest.trees):
        assert overlay([res.partials[r].trees[t] for r in sorted(res.partials)]).nodes == tree.nodes


def test_deterministic_across_runs_and_schedules(small_fed):
    train, _, view, cfg = small_fed
    a = train_federated(train, cfg, view)
    b = train_federated(train, cfg, view, deterministic=True)
    assert forest_to_json(a.forest) == forest_to_json(b.forest)
    for r in a.partials:
        assert forest_to_json(a.partials[r]) == forest_to_json(b.partials[r])
    assert a.stats["train"] == b.stats["train"]


def test_party_count_mismatch(small_fed):
    train, _, view, cfg = small_fed
    with pytest.raises(ConfigError):
        train_federated(train, replace(cfg, m=2), view)
