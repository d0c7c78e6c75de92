"""Federated random forest training: the master coordinator and the client participant.

Both sides walk the same recursion. Leaves that follow from the pre-pruning
rules are decided locally by every party from shared state (sample rows,
labels, depth), so they cost no messages. At every other node the master
gathers each client's best local improvement, picks the winner, asks it
for the row partition and broadcasts that partition back to everyone.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .protocol import (
    LocalBest, MakeLeaf, ProtocolError, Shutdown, SplitBroadcast, SplitIndices, TrainInit,
    TreeDone, WinnerNotify, expect,
)
from .tree import (
    CLASSIFICATION, OPAQUE, OWNED, TASKS, Forest, TreeBuilder, is_pure, leaf_label,
    local_best_split,
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    task: str = CLASSIFICATION
    n_trees: int = 10
    max_depth: int = 8
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    min_impurity_decrease: float = 0.0
    feature_fraction: float = 0.5
    sample_fraction: float = 0.8
    seed: int = 0
    m: int = 2

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if self.n_trees < 1:
            raise ConfigError("n_trees must be positive")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be positive")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if self.min_impurity_decrease < 0:
            raise ConfigError("min_impurity_decrease must be >= 0")
        for name in ("feature_fraction", "sample_fraction"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.m < 1:
            raise ConfigError("m must be >= 1")

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str, **overrides) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if not sep or key not in types:
                raise ConfigError(f"line {lineno}: unknown or malformed entry {line!r}")
            try:
                if types[key] == "int":
                    values[key] = int(raw)
                elif types[key] == "float":
                    values[key] = float(raw)
                else:
                    values[key] = raw
            except ValueError:
                raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from None
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), **overrides)


def _count(fraction: float, total: int) -> int:
    # guard against 0.7 * 10 = 7.000000000000001
    return min(total, math.ceil(fraction * total - 1e-9))


def tree_rng(seed: int, tree_id: int) -> np.random.Generator:
    """Independent PCG64 stream per tree, mixed from (seed, tree_id)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, tree_id])))


def sample_tree_inputs(rng: np.random.Generator, n_samples: int, master_view: dict,
                       config: TrainConfig):
    """Draw one tree's rows and features.

    Rows and features are drawn without replacement; features are drawn
    over the global id set and then routed to their owners, so a party may
    receive none. Returns ``(rows, {rank: feature ids})``, all sorted.
    """
    if n_samples < 1:
        raise ConfigError("empty dataset")
    rows = np.sort(rng.choice(n_samples, _count(config.sample_fraction, n_samples), replace=False))
    owner = {f: r for r, ids in master_view.items() for f in ids}
    all_ids = np.array(sorted(owner), dtype=np.int64)
    if all_ids.size == 0:
        raise ConfigError("no features")
    k = max(1, _count(config.feature_fraction, all_ids.size))
    chosen = sorted(int(f) for f in rng.choice(all_ids, k, replace=False))
    per_party = {r: [] for r in master_view}
    for f in chosen:
        per_party[owner[f]].append(f)
    return rows, {r: tuple(v) for r, v in per_party.items()}


def should_stop(depth: int, labels, config: TrainConfig) -> bool:
    """Pre-pruning rule; the root sits at depth 1."""
    n = len(labels)
    if n == 0:
        raise ProtocolError("node without samples")
    return depth >= config.max_depth or n < config.min_samples_split or is_pure(labels)


def n_classes_of(labels, task: str) -> int | None:
    if task != CLASSIFICATION:
        return None
    return int(np.max(labels)) + 1


def check_partition(parent, left, right):
    left, right = np.asarray(left, np.int64), np.asarray(right, np.int64)
    if left.size == 0 or right.size == 0:
        raise ProtocolError("split produced an empty child")
    merged = np.concatenate([left, right])
    if merged.size != len(parent) or not np.array_equal(np.sort(merged), np.asarray(parent)):
        raise ProtocolError("split does not partition the parent's samples")
    return left, right


# -- master ---------------------------------------------------------------

def master_train(comm, config: TrainConfig, labels, master_view: dict):
    """Run the master side of training over ``comm`` (a :class:`MasterComm`).

    Returns ``(forest, per_tree_stats)``.
    """
    labels = np.asarray(labels)
    if config.task == CLASSIFICATION:
        labels = labels.astype(np.int64)
    if sorted(master_view) != list(comm.ranks):
        raise ProtocolError("master view ranks do not match the connected clients")
    n_classes = n_classes_of(labels, config.task)
    forest = Forest(config.task, config.m, fingerprint=config.fingerprint())
    per_tree = []
    for t in range(config.n_trees):
        before = comm.current.copy()
        rows, feats = sample_tree_inputs(tree_rng(config.seed, t), len(labels), master_view, config)
        row_ids = tuple(rows.tolist())
        for r in comm.ranks:
            comm.send(r, TrainInit(t, row_ids, feats[r]))
        builder = TreeBuilder()
        _master_node(comm, builder, t, rows, 1, labels, config, n_classes)
        comm.broadcast(TreeDone(t))
        forest.trees.append(builder.tree.check())
        per_tree.append(comm.current - before)
    return forest, per_tree


def _master_node(comm, builder, t, rows, depth, labels, config, n_classes):
    nid = builder.reserve()
    y = labels[rows]
    if should_stop(depth, y, config):
        builder.leaf(nid, leaf_label(y, config.task))
        return nid
    best_rank, best_imp = None, None
    for rank, msg in comm.gather():
        expect(msg, LocalBest, tree_id=t, node_id=nid)
        # strict '>' keeps the smaller rank on ties
        if msg.improvement is not None and (best_imp is None or msg.improvement > best_imp):
            best_rank, best_imp = rank, msg.improvement
    if best_rank is None or best_imp < config.min_impurity_decrease:
        comm.broadcast(MakeLeaf(t, nid))
        builder.leaf(nid, leaf_label(y, config.task))
        return nid
    comm.send(best_rank, WinnerNotify(t, nid))
    split = expect(comm.recv(best_rank), SplitIndices, tree_id=t, node_id=nid)
    left, right = check_partition(rows, split.left_ids, split.right_ids)
    comm.broadcast(SplitBroadcast(t, nid, split.left_ids, split.right_ids))
    lid = _master_node(comm, builder, t, left, depth + 1, labels, config, n_classes)
    rid = _master_node(comm, builder, t, right, depth + 1, labels, config, n_classes)
    builder.internal(nid, OWNED, lid, rid, owner=best_rank, feature=split.feature,
                     threshold=split.threshold)
    return nid


# -- client ---------------------------------------------------------------

def client_train_loop(comm, shard, config: TrainConfig) -> Forest:
    """Run the client side of training until the master sends ``Shutdown``.

    ``comm`` is a :class:`ClientComm`; ``shard`` an encoded, aligned
    :class:`ClientShard`. Returns this party's partial forest.
    """
    labels = np.asarray(shard.labels)
    if config.task == CLASSIFICATION:
        labels = labels.astype(np.int64)
    n_classes = n_classes_of(labels, config.task)
    forest = Forest(config.task, config.m, party_rank=comm.rank, fingerprint=config.fingerprint())
    while True:
        msg = comm.recv()
        if isinstance(msg, Shutdown):
            return forest
        init = expect(msg, TrainInit, tree_id=forest.n_trees)
        unknown = set(init.feature_ids) - set(shard.features)
        if unknown:
            raise ProtocolError(f"party {comm.rank} was assigned foreign features")
        rows = np.asarray(init.sample_ids, dtype=np.int64)
        builder = TreeBuilder(party_rank=comm.rank)
        _client_node(comm, builder, init.tree_id, rows, 1, shard, labels, init.feature_ids,
                     config, n_classes)
        expect(comm.recv(), TreeDone, tree_id=init.tree_id)
        forest.trees.append(builder.tree.check())


def _client_node(comm, builder, t, rows, depth, shard, labels, allowed, config, n_classes):
    nid = builder.reserve()
    y = labels[rows]
    if should_stop(depth, y, config):
        builder.leaf(nid, leaf_label(y, config.task))
        return nid
    cand = local_best_split(shard.features, rows, allowed, labels, config.task,
                            config.min_samples_leaf, n_classes)
    comm.send(LocalBest(t, nid, None if cand is None else cand.improvement))
    msg = comm.recv()
    if isinstance(msg, MakeLeaf):
        expect(msg, MakeLeaf, tree_id=t, node_id=nid)
        builder.leaf(nid, leaf_label(y, config.task))
        return nid
    selected = isinstance(msg, WinnerNotify)
    if selected:
        expect(msg, WinnerNotify, tree_id=t, node_id=nid)
        if cand is None:
            raise ProtocolError(f"party {comm.rank} selected without a candidate")
        go_left = np.asarray(shard.features[cand.feature])[rows] <= cand.threshold
        comm.send(SplitIndices(t, nid, cand.feature, cand.threshold,
                               tuple(rows[go_left].tolist()), tuple(rows[~go_left].tolist())))
        msg = comm.recv()
    split = expect(msg, SplitBroadcast, tree_id=t, node_id=nid)
    left, right = check_partition(rows, split.left_ids, split.right_ids)
    lid = _client_node(comm, builder, t, left, depth + 1, shard, labels, allowed, config, n_classes)
    rid = _client_node(comm, builder, t, right, depth + 1, shard, labels, allowed, config, n_classes)
    if selected:
        builder.internal(nid, OWNED, lid, rid, owner=comm.rank, feature=cand.feature,
                         threshold=cand.threshold)
    else:
        builder.internal(nid, OPAQUE, lid, rid)
    return nid

