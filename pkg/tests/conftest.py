import numpy as np
import pytest

from fedforest import (
    RawTable, TrainConfig, encode_features, split_rows, subset_shards, vertical_partition,
)

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE = {}


def make_table(seed, n=120, d=6, task="classification", n_classes=2, discrete=False):
    """Small random table with some signal in the first two columns."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    if discrete:
        X = np.round(X * 2) / 2  # plenty of ties
    if task == "classification":
        score = X[:, 0] + 0.5 * X[:, min(1, d - 1)] + 0.3 * rng.normal(size=n)
        edges = np.quantile(score, np.linspace(0, 1, n_classes + 1)[1:-1])
        y = np.searchsorted(edges, score).astype(np.int64)
    else:
        y = 2.0 * X[:, 0] - X[:, min(1, d - 1)] ** 2 + 0.1 * rng.normal(size=n)
    return RawTable([f"c{j}" for j in range(d)], X, y)


def federated_data(table, m, seed=0, test_fraction=0.0):
    shards, view = encode_features(vertical_partition(table, m, seed))
    if test_fraction <= 0:
        return shards, None, view
    tr, te = split_rows(shards[0].n_samples, test_fraction, seed)
    return subset_shards(shards, tr), subset_shards(shards, te), view


@pytest.fixture
def small_fed():
    table = make_table(3, n=90, d=5)
    train, test, view = federated_data(table, 3, seed=3, test_fraction=0.3)
    config = TrainConfig(n_trees=4, max_depth=5, m=3, seed=11)
    return train, test, view, config


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")


def random_complete_tree(rng, max_depth, n_features, m, n_classes=3):
    """Random complete tree with owners drawn from ranks 1..m.

    Thresholds come from a coarse grid so test rows often sit exactly on them.
    """
    from fedforest.tree import OWNED, TreeBuilder

    b = TreeBuilder()

    def grow(depth):
        nid = b.reserve()
        if depth >= max_depth or rng.random() < 0.25:
            b.leaf(nid, int(rng.integers(n_classes)))
            return nid
        f = int(rng.integers(n_features))
        thr = float(rng.integers(-4, 5)) / 2
        left, right = grow(depth + 1), grow(depth + 1)
        b.internal(nid, OWNED, left, right, owner=int(rng.integers(1, m + 1)), feature=f, threshold=thr)
        return nid

    grow(1)
    return b.tree.check()
