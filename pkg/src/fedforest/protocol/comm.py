"""Master-centric collectives and message accounting.

Every message in the federation passes through the master, so counting
at the master sees all traffic: each message sent or received there adds
one point-to-point count. A broadcast is M sends, a gather is M receives
collected in ascending rank order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .messages import Shutdown, payload_ids
from .transport import MASTER, ChannelClosed


@dataclass
class MessageStats:
    p2p: int = 0
    broadcasts: int = 0
    gathers: int = 0
    payload_ids: int = 0

    def copy(self) -> "MessageStats":
        return MessageStats(**asdict(self))

    def __sub__(self, other: "MessageStats") -> "MessageStats":
        return MessageStats(self.p2p - other.p2p, self.broadcasts - other.broadcasts,
                            self.gathers - other.gathers, self.payload_ids - other.payload_ids)

    def __add__(self, other: "MessageStats") -> "MessageStats":
        return MessageStats(self.p2p + other.p2p, self.broadcasts + other.broadcasts,
                            self.gathers + other.gathers, self.payload_ids + other.payload_ids)


def stats_jsonl(stats: dict) -> str:
    """``{phase: MessageStats}`` as JSON lines, in phase insertion order."""
    lines = []
    for phase, s in stats.items():
        lines.append(json.dumps({"phase": phase, "p2p": s.p2p, "broadcasts": s.broadcasts,
                                 "gathers": s.gathers, "payload_ids": s.payload_ids}))
    return "".join(line + "\n" for line in lines)


class MasterComm:
    def __init__(self, endpoint, m: int, phase: str = "train"):
        self.endpoint = endpoint
        self.m = m
        self.ranks = tuple(range(1, m + 1))
        self.stats: dict[str, MessageStats] = {}
        self.phase = phase
        self.shut = False

    @property
    def phase(self) -> str:
        return self._phase

    @phase.setter
    def phase(self, name: str):
        self._phase = name
        self.stats.setdefault(name, MessageStats())

    @property
    def current(self) -> MessageStats:
        return self.stats[self._phase]

    def send(self, dest: int, msg):
        if self.shut:
            raise ChannelClosed(dest, "send after shutdown")
        self.endpoint.send(dest, msg)
        self.current.p2p += 1
        self.current.payload_ids += payload_ids(msg)

    def recv(self, src: int):
        msg = self.endpoint.recv(src)
        self.current.p2p += 1
        self.current.payload_ids += payload_ids(msg)
        return msg

    def broadcast(self, msg):
        if self.shut:
            raise ChannelClosed(self.ranks[0], "broadcast after shutdown")
        for r in self.ranks:
            self.send(r, msg)
        self.current.broadcasts += 1

    def gather(self) -> list:
        out = [(r, self.recv(r)) for r in self.ranks]
        self.current.gathers += 1
        return out

    def shutdown(self):
        if not self.shut:
            self.broadcast(Shutdown())
            self.shut = True


class ClientComm:
    def __init__(self, endpoint):
        self.endpoint = endpoint
        self.rank = endpoint.rank

    def send(self, msg):
        self.endpoint.send(MASTER, msg)

    def recv(self):
        return self.endpoint.recv(MASTER)
