"""Federated prediction.

Each client pushes its test rows through its partial trees. At a node it
owns, the threshold picks one branch; at an opaque node the rows go down
both. The master intersects, leaf by leaf, the row sets reported by all
clients. Because every internal node is owned by exactly one party, the
intersections land each row in exactly the leaf that the complete tree
would route it to, after a single gather per tree.

The classical baseline instead routes rows node by node, with one round
trip to the owning client per visited internal node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .protocol import (
    ClassicalRoute, ClassicalRouteReply, ForestLeafAssignments, LeafAssignments, MessageStats,
    PredictInit, ProtocolError, Shutdown, expect,
)
from .tree import CLASSIFICATION, LEAF, OWNED, Forest, Tree, TreeError

INTERSECT = "intersect"
CLASSICAL = "classical"
METHODS = (INTERSECT, CLASSICAL)


@dataclass
class LeafAssignment:
    tree_id: int
    sets: dict  # leaf id -> sorted int64 array of row indices

    def to_message(self) -> LeafAssignments:
        return LeafAssignments(self.tree_id, {leaf: tuple(rows.tolist())
                                              for leaf, rows in self.sets.items() if rows.size})

    @classmethod
    def from_message(cls, msg: LeafAssignments, leaf_ids) -> "LeafAssignment":
        unknown = set(msg.leaves) - set(leaf_ids)
        if unknown:
            raise ProtocolError(f"tree {msg.tree_id}: unknown leaf ids {sorted(unknown)}")
        empty = np.empty(0, dtype=np.int64)
        return cls(msg.tree_id, {leaf: np.asarray(msg.leaves.get(leaf, empty), dtype=np.int64)
                                 for leaf in leaf_ids})


@dataclass
class PredictionReport:
    predictions: np.ndarray
    leaf_hits: np.ndarray  # (n_trees, n_samples) leaf id per tree
    method: str
    stats: MessageStats = field(default_factory=MessageStats)
    traces: dict = field(default_factory=dict)


def client_leaf_assignments(tree: Tree, columns: dict, n_samples: int, tree_id: int = 0) -> LeafAssignment:
    """Multi-path traversal of one partial tree over the local test columns."""
    sets = {leaf: None for leaf in tree.leaves()}

    def walk(nid, rows):
        node = tree.nodes[nid]
        if node.kind == LEAF:
            sets[nid] = rows
            return
        if node.kind == OWNED:
            if node.feature not in columns:
                raise TreeError(f"no test column for owned feature {node.feature}")
            go_left = np.asarray(columns[node.feature])[rows] <= node.threshold
            walk(node.left, rows[go_left])
            walk(node.right, rows[~go_left])
        else:
            walk(node.left, rows)
            walk(node.right, rows)

    walk(0, np.arange(n_samples, dtype=np.int64))
    return LeafAssignment(tree_id, sets)


def intersect_leaf_sets(assignments: list[LeafAssignment]) -> dict:
    """Per-leaf intersection of the row sets reported by every party."""
    if not assignments:
        raise ProtocolError("no assignments to intersect")
    ref = assignments[0]
    for a in assignments[1:]:
        if a.tree_id != ref.tree_id:
            raise ProtocolError(f"tree id mismatch: {a.tree_id} vs {ref.tree_id}")
        if set(a.sets) != set(ref.sets):
            raise ProtocolError(f"tree {ref.tree_id}: leaf-id sets differ between parties")
    out = {}
    for leaf in sorted(ref.sets):
        acc = np.asarray(ref.sets[leaf], dtype=np.int64)
        for a in assignments[1:]:
            if not acc.size:
                break
            acc = np.intersect1d(acc, a.sets[leaf], assume_unique=True)
        out[leaf] = acc
    return out


def leaves_per_sample(leaf_sets: dict, n_samples: int) -> np.ndarray:
    """Invert ``leaf -> rows`` into one leaf per row; rows must be covered exactly once."""
    hit = np.full(n_samples, -1, dtype=np.int64)
    seen = np.zeros(n_samples, dtype=np.int64)
    for leaf, rows in leaf_sets.items():
        hit[rows] = leaf
        seen[rows] += 1
    if n_samples and (seen.min() != 1 or seen.max() != 1):
        raise ProtocolError("intersected leaf sets do not partition the test rows")
    return hit


def aggregate_forest(per_tree_predictions, task: str) -> np.ndarray:
    """Majority vote (ties to the smaller class) or mean over the tree axis."""
    p = np.asarray(per_tree_predictions)
    if p.ndim != 2:
        raise ValueError("expected an (n_trees, n_samples) array")
    if p.shape[0] == 0:
        raise ValueError("no tree predictions")
    if task == CLASSIFICATION:
        p = p.astype(np.int64)
        if p.size == 0:
            return np.empty(p.shape[1], dtype=np.int64)
        k = int(p.max()) + 1
        votes = np.zeros((k, p.shape[1]), dtype=np.int64)
        for row in p:
            votes[row, np.arange(p.shape[1])] += 1
        return np.argmax(votes, axis=0)
    return p.astype(np.float64).mean(axis=0)


def tree_labels(tree: Tree, leaf_hits: np.ndarray) -> np.ndarray:
    labels = {n.id: n.label for n in tree.nodes if n.kind == LEAF}
    return np.array([labels[int(l)] for l in leaf_hits])


def _finish(forest: Forest, hits: np.ndarray, method: str, n: int) -> PredictionReport:
    per_tree = [tree_labels(t, hits[i]) for i, t in enumerate(forest.trees)]
    if n == 0:
        dtype = np.int64 if forest.task == CLASSIFICATION else np.float64
        return PredictionReport(np.empty(0, dtype=dtype), hits, method)
    return PredictionReport(aggregate_forest(np.vstack(per_tree), forest.task), hits, method)


# -- master side ----------------------------------------------------------

def master_predict_intersect(comm, forest: Forest, n_samples: int, batched: bool = False) -> PredictionReport:
    """One gather per tree, or a single gather for the whole forest when ``batched``."""
    comm.broadcast(PredictInit(n_samples, batched))
    leaf_ids = [t.leaves() for t in forest.trees]
    hits = np.empty((forest.n_trees, n_samples), dtype=np.int64)

    def settle(t, msgs):
        parts = [LeafAssignment.from_message(expect(msg, LeafAssignments, tree_id=t), leaf_ids[t])
                 for msg in msgs]
        hits[t] = leaves_per_sample(intersect_leaf_sets(parts), n_samples)

    if batched:
        gathered = [expect(msg, ForestLeafAssignments) for _, msg in comm.gather()]
        for g in gathered:
            if len(g.trees) != forest.n_trees:
                raise ProtocolError("batched assignments do not cover every tree")
        for t in range(forest.n_trees):
            settle(t, [g.trees[t] for g in gathered])
    else:
        for t in range(forest.n_trees):
            settle(t, [msg for _, msg in comm.gather()])
    return _finish(forest, hits, INTERSECT, n_samples)


def master_predict_classical(comm, forest: Forest, n_samples: int) -> PredictionReport:
    """Route all rows batch-wise, asking each node's owner for the split."""
    hits = np.empty((forest.n_trees, n_samples), dtype=np.int64)
    for t, tree in enumerate(forest.trees):
        def walk(nid, rows):
            node = tree.nodes[nid]
            if node.kind == LEAF:
                hits[t, rows] = nid
                return
            if not rows.size:
                return
            comm.send(node.owner, ClassicalRoute(t, nid, tuple(rows.tolist())))
            reply = expect(comm.recv(node.owner), ClassicalRouteReply, tree_id=t, node_id=nid)
            left = np.asarray(reply.left_ids, dtype=np.int64)
            right = np.asarray(reply.right_ids, dtype=np.int64)
            if left.size + right.size != rows.size or not np.array_equal(
                    np.sort(np.concatenate([left, right])), rows):
                raise ProtocolError(f"tree {t} node {nid}: reply does not partition the batch")
            walk(node.left, left)
            walk(node.right, right)

        walk(0, np.arange(n_samples, dtype=np.int64))
    return _finish(forest, hits, CLASSICAL, n_samples)


# -- client side ----------------------------------------------------------

def client_predict_loop(comm, forest: Forest, columns: dict, n_samples: int):
    """Serve prediction requests until the master sends ``Shutdown``."""
    while True:
        msg = comm.recv()
        if isinstance(msg, Shutdown):
            return
        if isinstance(msg, PredictInit):
            if msg.n_samples != n_samples:
                raise ProtocolError(f"party {comm.rank} holds {n_samples} test rows, "
                                    f"master expects {msg.n_samples}")
            parts = [client_leaf_assignments(t, columns, n_samples, i).to_message()
                     for i, t in enumerate(forest.trees)]
            if msg.batched:
                comm.send(ForestLeafAssignments(tuple(parts)))
            else:
                for p in parts:
                    comm.send(p)
        elif isinstance(msg, ClassicalRoute):
            node = forest.trees[msg.tree_id].nodes[msg.node_id]
            if node.kind != OWNED:
                raise ProtocolError(f"party {comm.rank} asked to route node it does not own")
            rows = np.asarray(msg.sample_ids, dtype=np.int64)
            go_left = np.asarray(columns[node.feature])[rows] <= node.threshold
            comm.send(ClassicalRouteReply(msg.tree_id, msg.node_id, tuple(rows[go_left].tolist()),
                                          tuple(rows[~go_left].tolist())))
        else:
            raise ProtocolError(f"unexpected {type(msg).__name__} during prediction")

