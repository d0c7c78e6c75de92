"""CART primitives and the partial/complete tree model.

Trees are stored as flat node lists indexed by pre-order node id. A
*complete* tree (master side) carries the feature and threshold of every
internal node together with its owner rank. A *partial* tree (client side)
has the same shape but only keeps split details for the nodes its party
owns; every other internal node is opaque.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

CLASSIFICATION = "classification"
REGRESSION = "regression"
TASKS = (CLASSIFICATION, REGRESSION)

OWNED = "internal_owned"
OPAQUE = "internal_opaque"
LEAF = "leaf"

MODEL_VERSION = 1
TIE_TOL = 1e-12


class TreeError(ValueError):
    pass


# -- impurity -------------------------------------------------------------

def gini(class_counts) -> float:
    counts = np.asarray(class_counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise TreeError("gini of an empty node")
    p = counts / total
    return float(1.0 - np.dot(p, p))


def variance_impurity(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise TreeError("variance of an empty node")
    if np.all(v == v[0]):
        return 0.0
    d = v - v.mean()
    return float(np.dot(d, d) / v.size)


def is_pure(labels) -> bool:
    labels = np.asarray(labels)
    return labels.size == 0 or bool(np.all(labels == labels[0]))


def node_impurity(labels, task: str, n_classes: int | None = None) -> float:
    if task == CLASSIFICATION:
        return gini(np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes or 0))
    return variance_impurity(labels)


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    improvement: float
    left_count: int
    right_count: int


def best_split_for_feature(values, labels, task: str = CLASSIFICATION,
                           min_samples_leaf: int = 1, n_classes: int | None = None,
                           feature: int = -1) -> SplitCandidate | None:
    """Best midpoint threshold on one column.

    Samples with ``value <= threshold`` go left. The improvement is the
    parent impurity minus the size-weighted child impurities; ties go to
    the smallest threshold. Returns ``None`` when nothing improves.
    """
    x = np.asarray(values, dtype=np.float64)
    y = np.asarray(labels)
    n = x.size
    if y.size != n:
        raise TreeError(f"length mismatch: {n} values, {y.size} labels")
    if n < 2 or is_pure(y):
        return None
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]

    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    if task == CLASSIFICATION:
        yi = ys.astype(np.int64)
        k = max(int(yi.max()) + 1, n_classes or 0)
        onehot = np.zeros((n, k))
        onehot[np.arange(n), yi] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        total = left[-1] + onehot[-1]
        right = total - left
        parent = 1.0 - np.dot(total / n, total / n)
        gl = 1.0 - np.einsum("ij,ij->i", left, left) / (nl * nl)
        gr = 1.0 - np.einsum("ij,ij->i", right, right) / (nr * nr)
        child = (nl * gl + nr * gr) / n
    else:
        z = ys.astype(np.float64) - ys.mean()
        s1 = np.cumsum(z)[:-1]
        s2 = np.cumsum(z * z)[:-1]
        t1, t2 = s1[-1] + z[-1], s2[-1] + z[-1] * z[-1]
        parent = (t2 - t1 * t1 / n) / n
        sse_l = s2 - s1 * s1 / nl
        sse_r = (t2 - s2) - (t1 - s1) ** 2 / nr
        child = (sse_l + sse_r) / n
    gain = parent - child

    ok = xs[:-1] < xs[1:]
    ok &= (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
    ok &= gain > 0
    if not ok.any():
        return None
    masked = np.where(ok, gain, -np.inf)
    top = masked.max()
    # gains equal up to rounding are ties; the first one has the smallest threshold
    i = int(np.argmax(masked >= top - TIE_TOL * max(1.0, abs(top))))
    thr = xs[i] + (xs[i + 1] - xs[i]) / 2.0
    if thr >= xs[i + 1]:
        # adjacent doubles: the midpoint rounds up onto the right value
        thr = xs[i]
    return SplitCandidate(int(feature), float(thr), float(gain[i]), i + 1, n - i - 1)


def local_best_split(columns: dict, rows, allowed_features, labels, task: str = CLASSIFICATION,
                     min_samples_leaf: int = 1, n_classes: int | None = None) -> SplitCandidate | None:
    """Best candidate over ``allowed_features`` for the node holding ``rows``.

    ``columns`` maps feature id to a full-length column; ``labels`` is the
    full label vector. Feature ties go to the smallest id.
    """
    rows = np.asarray(rows, dtype=np.int64)
    y = np.asarray(labels)[rows]
    best = None
    for f in sorted(allowed_features):
        if f not in columns:
            raise TreeError(f"unknown feature id {f}")
        cand = best_split_for_feature(np.asarray(columns[f])[rows], y, task,
                                      min_samples_leaf, n_classes, feature=f)
        if cand is not None and (best is None or cand.improvement > best.improvement):
            best = cand
    return best


def leaf_label(labels, task: str = CLASSIFICATION):
    y = np.asarray(labels)
    if y.size == 0:
        raise TreeError("leaf with no samples")
    if task == CLASSIFICATION:
        return int(np.argmax(np.bincount(y.astype(np.int64))))
    return float(np.mean(y.astype(np.float64)))


# -- tree model -----------------------------------------------------------

@dataclass
class TreeNode:
    id: int
    kind: str
    owner: int | None = None
    feature: int | None = None
    threshold: float | None = None
    label: int | float | None = None
    left: int | None = None
    right: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.kind == LEAF


@dataclass
class Tree:
    """A tree as a pre-order node list.

    ``party_rank`` is ``None`` for a complete tree and the owning party's
    rank for a partial tree.
    """

    nodes: list[TreeNode] = field(default_factory=list)
    party_rank: int | None = None

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def leaves(self) -> list[int]:
        return [n.id for n in self.nodes if n.kind == LEAF]

    def internal(self) -> list[int]:
        return [n.id for n in self.nodes if n.kind != LEAF]

    def owners(self) -> dict[int, int]:
        return {n.id: n.owner for n in self.nodes if n.kind != LEAF}

    def depth(self) -> int:
        """Number of levels; a single leaf has depth 1."""
        best, stack = 0, [(0, 1)]
        while stack:
            nid, d = stack.pop()
            node = self.nodes[nid]
            best = max(best, d)
            if node.kind != LEAF:
                stack.append((node.left, d + 1))
                stack.append((node.right, d + 1))
        return best

    def check(self):
        for i, n in enumerate(self.nodes):
            if n.id != i:
                raise TreeError(f"node at position {i} has id {n.id}")
            if n.kind == LEAF:
                if n.left is not None or n.right is not None:
                    raise TreeError(f"leaf {i} has children")
                if n.label is None:
                    raise TreeError(f"leaf {i} has no label")
            else:
                if n.left is None or n.right is None:
                    raise TreeError(f"internal node {i} lacks a child")
                if n.kind == OPAQUE and (n.feature is not None or n.threshold is not None):
                    raise TreeError(f"opaque node {i} carries split details")
        return self


class TreeBuilder:
    """Appends nodes in pre-order; the caller recurses left before right."""

    def __init__(self, party_rank=None):
        self.tree = Tree(party_rank=party_rank)

    def reserve(self) -> int:
        nid = len(self.tree.nodes)
        self.tree.nodes.append(TreeNode(nid, LEAF))
        return nid

    def leaf(self, nid: int, label):
        self.tree.nodes[nid] = TreeNode(nid, LEAF, label=label)

    def internal(self, nid: int, kind: str, left: int, right: int, owner=None,
                 feature=None, threshold=None):
        self.tree.nodes[nid] = TreeNode(nid, kind, owner=owner, feature=feature,
                                        threshold=threshold, left=left, right=right)


def same_shape(a: Tree, b: Tree) -> bool:
    if len(a.nodes) != len(b.nodes):
        return False
    for x, y in zip(a.nodes, b.nodes):
        if (x.kind == LEAF) != (y.kind == LEAF) or x.left != y.left or x.right != y.right:
            return False
    return True


def overlay(partials: list[Tree]) -> Tree:
    """Merge partial trees into the complete tree they were cut from."""
    if not partials:
        raise TreeError("nothing to overlay")
    ref = partials[0]
    for p in partials[1:]:
        if not same_shape(ref, p):
            raise TreeError(f"structural mismatch between party {ref.party_rank} and {p.party_rank}")
    nodes = []
    for i, base in enumerate(ref.nodes):
        if base.kind == LEAF:
            labels = {p.nodes[i].label for p in partials}
            if len(labels) != 1:
                raise TreeError(f"leaf {i} labels disagree across parties")
            nodes.append(replace(base))
            continue
        owned = [p for p in partials if p.nodes[i].kind == OWNED]
        if not owned:
            raise TreeError(f"node {i} has no owner")
        if len(owned) > 1:
            raise TreeError(f"node {i} has multiple owners: {[p.party_rank for p in owned]}")
        src = owned[0]
        n = src.nodes[i]
        nodes.append(TreeNode(i, OWNED, owner=src.party_rank, feature=n.feature,
                              threshold=n.threshold, left=n.left, right=n.right))
    return Tree(nodes)


def to_partial(complete: Tree, rank: int) -> Tree:
    """The view of ``complete`` that party ``rank`` would hold."""
    nodes = []
    for n in complete.nodes:
        if n.kind == LEAF:
            nodes.append(replace(n, owner=None))
        elif n.owner == rank:
            nodes.append(replace(n, kind=OWNED))
        else:
            nodes.append(TreeNode(n.id, OPAQUE, left=n.left, right=n.right))
    return Tree(nodes, party_rank=rank)


def route_complete(tree: Tree, X, feature_index: dict) -> np.ndarray:
    """Leaf id reached by each row of ``X`` in a complete tree.

    ``feature_index`` maps a feature id to its column in ``X``.
    """
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0], dtype=np.int64)

    def walk(nid, rows):
        node = tree.nodes[nid]
        if node.kind == LEAF:
            out[rows] = nid
            return
        go_left = X[rows, feature_index[node.feature]] <= node.threshold
        walk(node.left, rows[go_left])
        walk(node.right, rows[~go_left])

    if X.shape[0]:
        walk(0, np.arange(X.shape[0]))
    return out


# -- forests and model files ------------------------------------------------

@dataclass
class Forest:
    task: str
    m: int
    trees: list[Tree] = field(default_factory=list)
    party_rank: int | None = None
    fingerprint: str = ""

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def forest_to_dict(forest: Forest) -> dict:
    client = forest.party_rank is not None
    trees = []
    for t in forest.trees:
        rows = []
        for n in t.nodes:
            rec = {"id": n.id, "kind": n.kind}
            if not client:
                rec["owner"] = n.owner
            rec["feature"] = n.feature
            rec["threshold"] = n.threshold
            rec["label"] = n.label
            rec["left"] = n.left
            rec["right"] = n.right
            rows.append(rec)
        trees.append({"nodes": rows})
    out = {"version": MODEL_VERSION, "task": forest.task, "n_trees": forest.n_trees,
           "m": forest.m, "trees": trees}
    if client:
        out["party"] = forest.party_rank
    out["fingerprint"] = forest.fingerprint
    return out


def forest_to_json(forest: Forest) -> str:
    # one node per line keeps model diffs readable
    d = forest_to_dict(forest)
    head = {k: v for k, v in d.items() if k != "trees"}
    lines = []
    for t in d["trees"]:
        nodes = ",\n".join("   " + json.dumps(n) for n in t["nodes"])
        lines.append('  {"nodes": [\n' + nodes + "\n  ]}")
    parts = [f"{json.dumps(k)}: {json.dumps(head[k])}" for k in ("version", "task", "n_trees", "m")]
    parts.append('"trees": [\n' + ",\n".join(lines) + "\n ]")
    parts += [f"{json.dumps(k)}: {json.dumps(head[k])}" for k in head if k not in
              ("version", "task", "n_trees", "m")]
    return "{\n " + ",\n ".join(parts) + "\n}\n"


def forest_from_dict(d: dict) -> Forest:
    if d.get("version") != MODEL_VERSION:
        raise TreeError(f"unsupported model version {d.get('version')!r}")
    rank = d.get("party")
    trees = []
    for t in d["trees"]:
        nodes = [TreeNode(n["id"], n["kind"], n.get("owner"), n["feature"], n["threshold"],
                          n["label"], n["left"], n["right"]) for n in t["nodes"]]
        trees.append(Tree(nodes, party_rank=rank).check())
    forest = Forest(d["task"], d["m"], trees, rank, d.get("fingerprint", ""))
    if forest.n_trees != d["n_trees"]:
        raise TreeError("n_trees does not match the tree list")
    return forest


def forest_from_json(text: str) -> Forest:
    return forest_from_dict(json.loads(text))
