"""Binary framing for protocol messages.

Frame layout::

    u32 length (big-endian, counts tag + body) | u8 tag | body

Body encoding is canonical: ``u32`` for ids and counts, id lists as a
``u32`` count followed by ``u32`` items, floats as big-endian ``f64``,
booleans and presence flags as ``u8``. An absent improvement is a zero
flag with no float following it.
"""

from __future__ import annotations

import struct

import numpy as np

from . import messages as M

MAX_FRAME = 1 << 30
HEADER = struct.Struct(">I")

_U32 = struct.Struct(">I")
_F64 = struct.Struct(">d")
_U8 = struct.Struct(">B")

TAGS = {cls: i + 1 for i, cls in enumerate(M.MESSAGE_TYPES)}
CLASSES = {v: k for k, v in TAGS.items()}


class WireError(ValueError):
    pass


def _ids(buf: bytearray, ids):
    arr = np.asarray(ids, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() > 0xFFFFFFFF):
        raise WireError("id out of u32 range")
    buf += _U32.pack(arr.size)
    buf += arr.astype(">u4").tobytes()


def _u32(buf: bytearray, x):
    if not 0 <= int(x) <= 0xFFFFFFFF:
        raise WireError(f"value {x} out of u32 range")
    buf += _U32.pack(int(x))


def _encode_leaves(buf: bytearray, msg: M.LeafAssignments):
    _u32(buf, msg.tree_id)
    _u32(buf, len(msg.leaves))
    for leaf in sorted(msg.leaves):
        _u32(buf, leaf)
        _ids(buf, msg.leaves[leaf])


def _body(msg) -> bytearray:
    b = bytearray()
    if isinstance(msg, M.TrainInit):
        _u32(b, msg.tree_id); _ids(b, msg.sample_ids); _ids(b, msg.feature_ids)
    elif isinstance(msg, M.LocalBest):
        _u32(b, msg.tree_id); _u32(b, msg.node_id)
        if msg.improvement is None:
            b += _U8.pack(0)
        else:
            b += _U8.pack(1) + _F64.pack(msg.improvement)
    elif isinstance(msg, (M.WinnerNotify, M.MakeLeaf)):
        _u32(b, msg.tree_id); _u32(b, msg.node_id)
    elif isinstance(msg, M.SplitIndices):
        _u32(b, msg.tree_id); _u32(b, msg.node_id); _u32(b, msg.feature)
        b += _F64.pack(msg.threshold)
        _ids(b, msg.left_ids); _ids(b, msg.right_ids)
    elif isinstance(msg, (M.SplitBroadcast, M.ClassicalRouteReply)):
        _u32(b, msg.tree_id); _u32(b, msg.node_id)
        _ids(b, msg.left_ids); _ids(b, msg.right_ids)
    elif isinstance(msg, M.TreeDone):
        _u32(b, msg.tree_id)
    elif isinstance(msg, M.PredictInit):
        _u32(b, msg.n_samples); b += _U8.pack(1 if msg.batched else 0)
    elif isinstance(msg, M.LeafAssignments):
        _encode_leaves(b, msg)
    elif isinstance(msg, M.ForestLeafAssignments):
        _u32(b, len(msg.trees))
        for t in msg.trees:
            _encode_leaves(b, t)
    elif isinstance(msg, M.ClassicalRoute):
        _u32(b, msg.tree_id); _u32(b, msg.node_id); _ids(b, msg.sample_ids)
    elif isinstance(msg, M.Shutdown):
        pass
    else:
        raise WireError(f"not a protocol message: {type(msg).__name__}")
    return b


def wire_encode(msg) -> bytes:
    body = _body(msg)
    length = 1 + len(body)
    if length > MAX_FRAME:
        raise WireError(f"frame of {length} bytes exceeds limit {MAX_FRAME}")
    return HEADER.pack(length) + _U8.pack(TAGS[type(msg)]) + bytes(body)


class _Reader:
    def __init__(self, data: memoryview):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.data):
            raise WireError("truncated frame")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    def f64(self) -> float:
        return _F64.unpack(self.take(8))[0]

    def ids(self) -> tuple:
        n = self.u32()
        return tuple(np.frombuffer(self.take(4 * n), dtype=">u4").tolist())

    def leaves(self) -> M.LeafAssignments:
        tree_id, n = self.u32(), self.u32()
        leaves = {}
        for _ in range(n):
            leaf = self.u32()
            leaves[leaf] = self.ids()
        return M.LeafAssignments(tree_id, leaves)


def decode_payload(tag: int, body) -> object:
    cls = CLASSES.get(tag)
    if cls is None:
        raise WireError(f"unknown message tag 0x{tag:02X}")
    r = _Reader(memoryview(body))
    if cls is M.TrainInit:
        msg = cls(r.u32(), r.ids(), r.ids())
    elif cls is M.LocalBest:
        tree_id, node_id, flag = r.u32(), r.u32(), r.u8()
        if flag not in (0, 1):
            raise WireError(f"bad presence flag {flag}")
        msg = cls(tree_id, node_id, r.f64() if flag else None)
    elif cls in (M.WinnerNotify, M.MakeLeaf):
        msg = cls(r.u32(), r.u32())
    elif cls is M.SplitIndices:
        msg = cls(r.u32(), r.u32(), r.u32(), r.f64(), r.ids(), r.ids())
    elif cls in (M.SplitBroadcast, M.ClassicalRouteReply):
        msg = cls(r.u32(), r.u32(), r.ids(), r.ids())
    elif cls is M.TreeDone:
        msg = cls(r.u32())
    elif cls is M.PredictInit:
        n, flag = r.u32(), r.u8()
        if flag not in (0, 1):
            raise WireError(f"bad boolean {flag}")
        msg = cls(n, bool(flag))
    elif cls is M.LeafAssignments:
        msg = r.leaves()
    elif cls is M.ForestLeafAssignments:
        msg = cls(tuple(r.leaves() for _ in range(r.u32())))
    elif cls is M.ClassicalRoute:
        msg = cls(r.u32(), r.u32(), r.ids())
    else:
        msg = cls()
    if r.pos != len(r.data):
        raise WireError(f"{len(r.data) - r.pos} trailing bytes after {cls.__name__}")
    return msg


def wire_decode(frame: bytes):
    frame = bytes(frame)
    if len(frame) < HEADER.size + 1:
        raise WireError("truncated frame")
    (length,) = HEADER.unpack_from(frame)
    if length > MAX_FRAME:
        raise WireError(f"declared length {length} exceeds limit {MAX_FRAME}")
    if length == 0:
        raise WireError("zero-length frame has no tag")
    if len(frame) - HEADER.size < length:
        raise WireError("truncated frame")
    if len(frame) - HEADER.size > length:
        raise WireError("trailing bytes after frame")
    return decode_payload(frame[4], frame[5:])
