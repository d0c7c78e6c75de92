import struct

import pytest
from hypothesis import given, settings, strategies as st

from fedforest.protocol import (
    MESSAGE_TYPES, ClassicalRoute, ClassicalRouteReply, ForestLeafAssignments, LeafAssignments,
    LocalBest, MakeLeaf, PredictInit, Shutdown, SplitBroadcast, SplitIndices, TrainInit, TreeDone,
    WinnerNotify, WireError, payload_ids, wire_decode, wire_encode,
)

u32 = st.integers(0, 2**32 - 1)
ids = st.lists(st.integers(0, 2**32 - 1), max_size=20).map(tuple)
f64 = st.floats(allow_nan=False)
leaves = st.dictionaries(u32, ids, max_size=5)

messages = st.one_of(
    st.builds(TrainInit, u32, ids, ids),
    st.builds(LocalBest, u32, u32, st.none() | f64),
    st.builds(WinnerNotify, u32, u32),
    st.builds(SplitIndices, u32, u32, u32, f64, ids, ids),
    st.builds(SplitBroadcast, u32, u32, ids, ids),
    st.builds(MakeLeaf, u32, u32),
    st.builds(TreeDone, u32),
    st.builds(PredictInit, u32, st.booleans()),
    st.builds(LeafAssignments, u32, leaves),
    st.builds(ForestLeafAssignments,
              st.lists(st.builds(LeafAssignments, u32, leaves), max_size=3).map(tuple)),
    st.builds(ClassicalRoute, u32, u32, ids),
    st.builds(ClassicalRouteReply, u32, u32, ids, ids),
    st.just(Shutdown()),
)


def test_shutdown_frame():
    frame = wire_encode(Shutdown())
    assert len(frame) == 5
    assert frame == struct.pack(">IB", 1, MESSAGE_TYPES.index(Shutdown) + 1)
    assert wire_decode(frame) == Shutdown()


def test_tags_are_distinct():
    assert len({t for t in MESSAGE_TYPES}) == 13


@settings(max_examples=1000, deadline=None)
@given(messages)
def test_roundtrip(msg):
    frame = wire_encode(msg)
    assert struct.unpack(">I", frame[:4])[0] == len(frame) - 4
    back = wire_decode(frame)
    assert back == msg
    assert wire_encode(back) == frame


def test_local_best_absent_vs_zero():
    assert wire_decode(wire_encode(LocalBest(1, 2, None))).improvement is None
    assert wire_decode(wire_encode(LocalBest(1, 2, 0.0))).improvement == 0.0


def test_float_bits_preserved():
    x = 0.1 + 0.2
    assert wire_decode(wire_encode(SplitIndices(0, 0, 1, x, (), ()))).threshold == x


def test_unknown_tag():
    with pytest.raises(WireError, match="0xFF"):
        wire_decode(struct.pack(">IB", 1, 0xFF))


def test_truncated_and_trailing():
    frame = wire_encode(TrainInit(1, (1, 2, 3), (4,)))
    with pytest.raises(WireError):
        wire_decode(frame[:-1])
    with pytest.raises(WireError):
        wire_decode(frame[:3])
    bad = struct.pack(">I", len(frame) - 3) + frame[4:] + b"\x00"
    with pytest.raises(WireError):
        wire_decode(bad)


def test_bad_flag():
    frame = bytearray(wire_encode(PredictInit(3, True)))
    frame[-1] = 7
    with pytest.raises(WireError):
        wire_decode(bytes(frame))


def test_out_of_range_ids_rejected():
    with pytest.raises((WireError, struct.error, OverflowError)):
        wire_encode(TrainInit(0, (2**32,), ()))


def test_payload_ids():
    assert payload_ids(TrainInit(0, (1, 2, 3), (7, 8))) == 3
    assert payload_ids(SplitBroadcast(0, 0, (1,), (2, 3))) == 3
    assert payload_ids(LeafAssignments(0, {1: (1, 2), 4: (3,)})) == 3
    assert payload_ids(LocalBest(0, 0, 0.5)) == 0
