from .comm import ClientComm, MasterComm, MessageStats, stats_jsonl
from .messages import (
    ClassicalRoute, ClassicalRouteReply, ForestLeafAssignments, LeafAssignments, LocalBest,
    MakeLeaf, PredictInit, Shutdown, SplitBroadcast, SplitIndices, TrainInit, TreeDone,
    WinnerNotify, MESSAGE_TYPES, payload_ids,
)
from .transport import (
    MASTER, Baton, ChannelClosed, Endpoint, FrameTransform, FreeRunning, TcpListener,
    inproc_endpoints, tcp_client_endpoint, tcp_endpoints,
)
from .wire import WireError, wire_decode, wire_encode


class ProtocolError(RuntimeError):
    """A party received a message that the protocol does not allow at that point."""


def expect(msg, cls, **fields):
    """Check a received message's type and context fields."""
    if not isinstance(msg, cls):
        raise ProtocolError(f"expected {cls.__name__}, got {type(msg).__name__}")
    for name, want in fields.items():
        got = getattr(msg, name)
        if got != want:
            raise ProtocolError(f"{cls.__name__}.{name} = {got}, expected {want}")
    return msg
