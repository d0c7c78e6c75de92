"""Vertically federated random forests with a master coordinator."""

from .dataset import (
    ClientShard, DataError, RawTable, align_shards, encode_features, hash_ids, load_csv,
    read_shard_dir, split_rows, stack_columns, subset_shards, vertical_partition,
    write_shard_dir,
)
from .federation import TrainResult, predict_federated, run_parties, train_federated
from .oracle import EquivalenceReport, assert_equivalent, centralized_train, predict_complete
from .prediction import (
    LeafAssignment, PredictionReport, aggregate_forest, client_leaf_assignments,
    intersect_leaf_sets,
)
from .training import ConfigError, TrainConfig, sample_tree_inputs, should_stop
from .tree import (
    Forest, SplitCandidate, Tree, TreeNode, best_split_for_feature, gini, leaf_label,
    local_best_split, overlay, to_partial, variance_impurity,
)

__version__ = "0.1.0"
