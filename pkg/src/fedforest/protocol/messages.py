"""The closed set of messages exchanged between the master and clients.

Sample ids on the wire are dense row indices into the canonical aligned
order. ``LocalBest`` deliberately has no feature or threshold field.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields


@dataclass(frozen=True)
class TrainInit:
    tree_id: int
    sample_ids: tuple = ()
    feature_ids: tuple = ()


@dataclass(frozen=True)
class LocalBest:
    tree_id: int
    node_id: int
    improvement: float | None = None  # None: no usable split at this party


@dataclass(frozen=True)
class WinnerNotify:
    tree_id: int
    node_id: int


@dataclass(frozen=True)
class SplitIndices:
    """Winner -> master only. Carries the split so the master can keep the complete tree."""

    tree_id: int
    node_id: int
    feature: int
    threshold: float
    left_ids: tuple = ()
    right_ids: tuple = ()


@dataclass(frozen=True)
class SplitBroadcast:
    tree_id: int
    node_id: int
    left_ids: tuple = ()
    right_ids: tuple = ()


@dataclass(frozen=True)
class MakeLeaf:
    tree_id: int
    node_id: int


@dataclass(frozen=True)
class TreeDone:
    tree_id: int


@dataclass(frozen=True)
class PredictInit:
    n_samples: int
    batched: bool = False


@dataclass(frozen=True)
class LeafAssignments:
    tree_id: int
    leaves: dict = field(default_factory=dict)  # leaf id -> tuple of row indices


@dataclass(frozen=True)
class ForestLeafAssignments:
    trees: tuple = ()  # of LeafAssignments


@dataclass(frozen=True)
class ClassicalRoute:
    tree_id: int
    node_id: int
    sample_ids: tuple = ()


@dataclass(frozen=True)
class ClassicalRouteReply:
    tree_id: int
    node_id: int
    left_ids: tuple = ()
    right_ids: tuple = ()


@dataclass(frozen=True)
class Shutdown:
    pass


MESSAGE_TYPES = (
    TrainInit, LocalBest, WinnerNotify, SplitIndices, SplitBroadcast, MakeLeaf, TreeDone,
    PredictInit, LeafAssignments, ForestLeafAssignments, ClassicalRoute, ClassicalRouteReply,
    Shutdown,
)

_ID_FIELDS = ("sample_ids", "left_ids", "right_ids")


def payload_ids(msg) -> int:
    """Number of sample indices a message carries."""
    if isinstance(msg, LeafAssignments):
        return sum(len(v) for v in msg.leaves.values())
    if isinstance(msg, ForestLeafAssignments):
        return sum(payload_ids(t) for t in msg.trees)
    return sum(len(getattr(msg, f.name)) for f in fields(msg) if f.name in _ID_FIELDS)
