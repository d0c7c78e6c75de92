"""Point-to-point links between the master (rank 0) and clients (ranks 1..M).

Two link kinds share one contract (reliable, ordered per pair, blocking
receive): in-process queues and framed TCP streams on loopback. Both carry
exactly the bytes produced by :func:`wire_encode`, passed through an
optional :class:`FrameTransform` so channel encryption can be slotted in
without touching the protocol.
"""

from __future__ import annotations

import contextlib
import queue
import socket
import threading
import time

from .wire import HEADER, MAX_FRAME, WireError, decode_payload, wire_encode

MASTER = 0


class ChannelClosed(ConnectionError):
    def __init__(self, rank, detail="channel closed"):
        super().__init__(f"party {rank}: {detail}")
        self.rank = rank


class FrameTransform:
    """Identity byte transform applied to every frame payload (tag + body)."""

    def seal(self, payload: bytes) -> bytes:
        return payload

    def open(self, payload: bytes) -> bytes:
        return payload


class Baton:
    """Lets only one party thread run at a time.

    Parties hold the baton while computing and hand it back whenever they
    block on a receive, which serialises the whole federation onto a single
    thread of control.
    """

    def __init__(self):
        self._lock = threading.Lock()

    @contextlib.contextmanager
    def running(self):
        self._lock.acquire()
        try:
            yield
        finally:
            self._lock.release()

    @contextlib.contextmanager
    def blocking(self):
        self._lock.release()
        try:
            yield
        finally:
            self._lock.acquire()


class FreeRunning:
    def running(self):
        return contextlib.nullcontext()

    def blocking(self):
        return contextlib.nullcontext()


_CLOSED = object()


class QueueLink:
    """One direction-pair of an in-process channel."""

    def __init__(self, outbox: queue.Queue, inbox: queue.Queue, peer: int):
        self.outbox, self.inbox, self.peer = outbox, inbox, peer
        self.closed = False

    def send_bytes(self, payload: bytes):
        if self.closed:
            raise ChannelClosed(self.peer, "send on closed channel")
        self.outbox.put(payload)

    def recv_bytes(self, timeout=None) -> bytes:
        if self.closed:
            raise ChannelClosed(self.peer, "receive on closed channel")
        try:
            item = self.inbox.get(timeout=timeout)
        except queue.Empty:
            raise ChannelClosed(self.peer, "receive timed out") from None
        if item is _CLOSED:
            self.inbox.put(_CLOSED)
            raise ChannelClosed(self.peer)
        return item

    def close(self):
        if not self.closed:
            self.closed = True
            self.outbox.put(_CLOSED)


class SocketLink:
    def __init__(self, sock: socket.socket, peer: int):
        self.sock, self.peer = sock, peer
        self.closed = False

    def send_bytes(self, payload: bytes):
        if self.closed:
            raise ChannelClosed(self.peer, "send on closed channel")
        try:
            self.sock.sendall(HEADER.pack(len(payload)) + payload)
        except OSError as e:
            raise ChannelClosed(self.peer, f"send failed: {e}") from e

    def _read(self, n: int) -> bytes:
        chunks, got = [], 0
        while got < n:
            try:
                chunk = self.sock.recv(n - got)
            except socket.timeout:
                raise ChannelClosed(self.peer, "receive timed out") from None
            except OSError as e:
                raise ChannelClosed(self.peer, f"receive failed: {e}") from e
            if not chunk:
                raise ChannelClosed(self.peer)
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def recv_bytes(self, timeout=None) -> bytes:
        if self.closed:
            raise ChannelClosed(self.peer, "receive on closed channel")
        self.sock.settimeout(timeout)
        (length,) = HEADER.unpack(self._read(HEADER.size))
        if length > MAX_FRAME:
            raise WireError(f"declared length {length} exceeds limit {MAX_FRAME}")
        return self._read(length)

    def close(self):
        if not self.closed:
            self.closed = True
            with contextlib.suppress(OSError):
                self.sock.shutdown(socket.SHUT_RDWR)
            self.sock.close()


class Endpoint:
    """A party's set of links, with message (de)serialisation and tracing."""

    def __init__(self, rank: int, links: dict, transform=None, scheduler=None,
                 timeout=None, record=False):
        self.rank = rank
        self.links = links
        self.transform = transform or FrameTransform()
        self.scheduler = scheduler or FreeRunning()
        self.timeout = timeout
        self.trace = [] if record else None

    def _link(self, peer):
        try:
            return self.links[peer]
        except KeyError:
            raise ValueError(f"party {self.rank} has no link to party {peer}") from None

    def send(self, dest: int, msg):
        frame = wire_encode(msg)
        self._link(dest).send_bytes(self.transform.seal(frame[HEADER.size:]))
        if self.trace is not None:
            self.trace.append(("send", dest, msg))

    def recv(self, src: int):
        link = self._link(src)
        with self.scheduler.blocking():
            payload = link.recv_bytes(self.timeout)
        payload = self.transform.open(payload)
        if not payload:
            raise WireError("empty frame")
        msg = decode_payload(payload[0], payload[1:])
        if self.trace is not None:
            self.trace.append(("recv", src, msg))
        return msg

    def close(self):
        for link in self.links.values():
            link.close()


def inproc_endpoints(m: int, **kw) -> tuple[Endpoint, dict]:
    """Master endpoint plus ``{rank: endpoint}`` for ``m`` in-process clients."""
    master_links, clients = {}, {}
    for r in range(1, m + 1):
        down, up = queue.Queue(), queue.Queue()
        master_links[r] = QueueLink(down, up, r)
        clients[r] = Endpoint(r, {MASTER: QueueLink(up, down, MASTER)}, **kw)
    return Endpoint(MASTER, master_links, **kw), clients


class TcpListener:
    """Master side of the TCP transport; clients dial in and say their rank."""

    def __init__(self, m: int, host="127.0.0.1", port=0):
        self.m = m
        self.sock = socket.create_server((host, port))
        self.host, self.port = self.sock.getsockname()[:2]

    def accept(self, timeout=30.0, **kw) -> Endpoint:
        links = {}
        self.sock.settimeout(timeout)
        try:
            while len(links) < self.m:
                try:
                    conn, _ = self.sock.accept()
                except socket.timeout:
                    missing = sorted(set(range(1, self.m + 1)) - set(links))
                    raise ChannelClosed(missing[0], "never connected") from None
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                conn.settimeout(timeout)
                hello = conn.recv(1)
                if len(hello) != 1 or not 1 <= hello[0] <= self.m or hello[0] in links:
                    conn.close()
                    raise WireError(f"bad rank hello {hello!r}")
                links[hello[0]] = SocketLink(conn, hello[0])
        finally:
            self.sock.close()
        return Endpoint(MASTER, links, **kw)


def tcp_client_endpoint(rank: int, host: str, port: int, timeout=30.0, **kw) -> Endpoint:
    if not 1 <= rank <= 255:
        raise ValueError("client rank must fit in one byte")
    deadline = time.monotonic() + (timeout or 0)
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
            break
        except ConnectionRefusedError:
            # the master may not be listening yet
            if time.monotonic() >= deadline:
                raise ChannelClosed(MASTER, f"nothing listening on {host}:{port}") from None
            time.sleep(0.05)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    sock.sendall(bytes([rank]))
    return Endpoint(rank, {MASTER: SocketLink(sock, MASTER)}, **kw)


def tcp_endpoints(m: int, host="127.0.0.1", port=0, timeout=30.0, **kw) -> tuple[Endpoint, dict]:
    """Loopback TCP endpoints for a master and ``m`` clients in one process."""
    listener = TcpListener(m, host, port)
    clients = {r: tcp_client_endpoint(r, listener.host, listener.port, timeout, **kw)
               for r in range(1, m + 1)}
    return listener.accept(timeout, **kw), clients
