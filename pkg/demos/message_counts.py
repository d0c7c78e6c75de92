"""How prediction traffic scales with tree depth and test size.

Prints one line per configuration: intersect prediction stays at M
messages per tree, classical routing grows with the number of visited
nodes. Run from the repository root:  python demos/message_counts.py
"""

import numpy as np

from fedforest import RawTable, TrainConfig, predict_federated, train_federated
from fedforest.experiments import federated_split

rng = np.random.default_rng(3)
X = rng.normal(size=(600, 10))
y = (np.sin(X[:, 0]) + X[:, 1] * X[:, 2] > 0).astype(int)
table = RawTable([f"x{j}" for j in range(10)], X, y)

m = 3
print(f"{'depth':>5} {'test':>5} {'intersect p2p':>14} {'classical p2p':>14}")
for depth in (2, 4, 8, 16):
    for tf in (0.1, 0.4):
        sp = federated_split(table, m, tf, partition_seed=0, split_seed=1)
        config = TrainConfig(n_trees=8, max_depth=depth, m=m, seed=0)
        res = train_federated(sp.train, config, sp.view)
        a = predict_federated(res.forest, res.partials, sp.test, "intersect").stats
        b = predict_federated(res.forest, res.partials, sp.test, "classical").stats
        print(f"{depth:>5} {tf:>5} {a.p2p:>14} {b.p2p:>14}")
# at depth 2 (stumps) classical is cheaper: one round trip per tree against a full gather
