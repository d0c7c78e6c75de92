"""Train a federated random forest over three parties and look inside it.

Run from the repository root:  python demos/walkthrough.py
"""

import numpy as np

from fedforest import (
    RawTable, TrainConfig, centralized_train, assert_equivalent, encode_features,
    predict_federated, split_rows, stack_columns, subset_shards, train_federated,
    vertical_partition,
)

rng = np.random.default_rng(0)

# a toy table: 300 rows, 6 columns, label depends on two of them
X = rng.normal(size=(300, 6))
y = (X[:, 0] + 0.5 * X[:, 3] > 0).astype(int)
table = RawTable([f"col{j}" for j in range(6)], X, y)

# deal the columns out to three parties, hash+align the row ids, encode feature names
shards, view = encode_features(vertical_partition(table, m=3, seed=0))
print("features per party:", view)

train_rows, test_rows = split_rows(shards[0].n_samples, 0.3, seed=0)
train, test = subset_shards(shards, train_rows), subset_shards(shards, test_rows)

# features are drawn once per tree, so keep most of them with only 6 columns
config = TrainConfig(n_trees=10, max_depth=6, m=3, seed=1, feature_fraction=0.8)
res = train_federated(train, config, view, record=True)
print("training messages:", res.stats["train"])

# the master holds the complete first tree; party 2 only sees its own splits
tree = res.forest.trees[0]
print("tree 0 owners by node:", tree.owners())
print("party 2 node kinds:", [n.kind for n in res.partials[2].trees[0].nodes])

# one gather per tree versus a round trip per visited node
inter = predict_federated(res.forest, res.partials, test, "intersect")
classical = predict_federated(res.forest, res.partials, test, "classical")
print("intersect:", inter.stats)
print("classical:", classical.stats)
assert np.array_equal(inter.predictions, classical.predictions)
print("test accuracy:", np.mean(inter.predictions == test[0].labels))

# the same forest comes out of pooled training with the same seed
Xtr, fids = stack_columns(train)
cen = centralized_train(Xtr, fids, train[0].labels, config, view)
Xte, _ = stack_columns(test)
print(assert_equivalent(res.forest, cen, Xte, fids, test[0].labels).to_dict())
