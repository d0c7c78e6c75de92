import threading

import pytest

from fedforest.federation import run_parties
from fedforest.protocol import (
    Baton, ChannelClosed, ClientComm, FrameTransform, LocalBest, MasterComm, Shutdown,
    SplitBroadcast, TrainInit, TreeDone, inproc_endpoints, stats_jsonl, tcp_endpoints,
)


@pytest.fixture(params=["inproc", "tcp"])
def endpoints(request):
    make = inproc_endpoints if request.param == "inproc" else tcp_endpoints
    master, clients = make(2, timeout=5)
    yield master, clients
    master.close()
    for ep in clients.values():
        ep.close()


def test_fifo_order(endpoints):
    master, clients = endpoints
    for i in range(50):
        master.send(1, TreeDone(i))
    assert [clients[1].recv(0).tree_id for _ in range(50)] == list(range(50))
    clients[2].send(0, LocalBest(0, 0, None))
    assert master.recv(2) == LocalBest(0, 0, None)


def test_closed_channel(endpoints):
    master, clients = endpoints
    clients[1].close()
    with pytest.raises(ChannelClosed) as info:
        master.recv(1)
    assert info.value.rank == 1


def test_recv_timeout_raises_channel_closed():
    master, clients = inproc_endpoints(1, timeout=0.05)
    with pytest.raises(ChannelClosed):
        master.recv(1)


def test_comm_accounting():
    master, clients = inproc_endpoints(3)
    comm = MasterComm(master, 3)
    comm.send(2, TrainInit(0, (1, 2, 3), (5,)))
    comm.broadcast(SplitBroadcast(0, 0, (1,), (2, 3)))
    for r, ep in clients.items():
        ep.send(0, LocalBest(0, 0, float(r)))
    got = comm.gather()
    assert [r for r, _ in got] == [1, 2, 3]
    s = comm.stats["train"]
    assert (s.p2p, s.broadcasts, s.gathers, s.payload_ids) == (1 + 3 + 3, 1, 1, 3 + 9)
    comm.phase = "teardown"
    comm.shutdown()
    assert comm.stats["train"].p2p == 7 and comm.stats["teardown"].broadcasts == 1
    for ep in clients.values():
        comm_c = ClientComm(ep)
        while not isinstance(comm_c.recv(), Shutdown):
            pass
    with pytest.raises(ChannelClosed):
        comm.send(1, TreeDone(0))
    assert stats_jsonl(comm.stats).splitlines()[0].startswith('{"phase": "train"')


class XorTransform(FrameTransform):
    def seal(self, payload):
        return bytes(b ^ 0x5A for b in payload)

    def open(self, payload):
        return bytes(b ^ 0x5A for b in payload)


@pytest.mark.parametrize("transport", ["inproc", "tcp"])
def test_frame_transform_is_applied(transport):
    def master(ep):
        ep.send(1, TrainInit(0, (1, 2), (3,)))
        return ep.recv(1)

    def client(rank, ep):
        msg = ep.recv(0)
        ep.send(0, LocalBest(msg.tree_id, 0, 0.25))

    out, _, _ = run_parties(1, master, client, transport, transform=XorTransform(), timeout=5)
    assert out == LocalBest(0, 0, 0.25)


def test_dead_client_surfaces_its_error():
    def master(ep):
        comm = MasterComm(ep, 2)
        return comm.gather()

    def client(rank, ep):
        if rank == 2:
            raise RuntimeError("client 2 crashed")
        ep.send(0, LocalBest(0, 0, None))

    with pytest.raises(RuntimeError, match="client 2 crashed"):
        run_parties(2, master, client, timeout=5)


def test_baton_serialises_parties():
    baton = Baton()
    inside, overlaps = [0], [0]

    def work():
        for _ in range(200):
            with baton.running():
                inside[0] += 1
                if inside[0] > 1:
                    overlaps[0] += 1
                inside[0] -= 1

    threads = [threading.Thread(target=work) for _ in range(4)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert overlaps[0] == 0


def test_deterministic_schedule_runs_protocol():
    def master(ep):
        for r in (1, 2, 3):
            ep.send(r, TreeDone(0))
        return [ep.recv(r) for r in (1, 2, 3)]

    def client(rank, ep):
        ep.send(0, ep.recv(0))

    out, _, traces = run_parties(3, master, client, deterministic=True, record=True, timeout=5)
    assert out == [TreeDone(0)] * 3
    assert [d for d, _, _ in traces[0]] == ["send"] * 3 + ["recv"] * 3


def test_gather_order_and_single_party_broadcast():
    master, clients = inproc_endpoints(2)
    comm = MasterComm(master, 2)
    clients[2].send(0, LocalBest(0, 0, 0.5))
    clients[1].send(0, LocalBest(0, 0, 0.3))
    assert [(r, m.improvement) for r, m in comm.gather()] == [(1, 0.3), (2, 0.5)]

    master1, clients1 = inproc_endpoints(1)
    comm1 = MasterComm(master1, 1)
    comm1.broadcast(TreeDone(3))
    assert clients1[1].recv(0) == TreeDone(3)
    assert (comm1.current.p2p, comm1.current.broadcasts) == (1, 1)
    comm1.shutdown()
    with pytest.raises(ChannelClosed):
        comm1.broadcast(TreeDone(4))


def test_gather_names_dead_client():
    master, clients = inproc_endpoints(2, timeout=5)
    clients[1].send(0, LocalBest(0, 0, None))
    clients[2].close()
    with pytest.raises(ChannelClosed) as info:
        MasterComm(master, 2).gather()
    assert info.value.rank == 2 and "party 2" in str(info.value)
