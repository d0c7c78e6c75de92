"""Run a master and M clients together in one process.

Each party gets its own thread and endpoint. With ``deterministic=True``
the parties share a baton so only one of them executes at any moment;
the protocol is deterministic either way, so traces and models do not
depend on the scheduling mode or the transport.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .dataset import ClientShard, check_shards
from .prediction import (
    CLASSICAL, INTERSECT, PredictionReport, client_predict_loop, master_predict_classical,
    master_predict_intersect,
)
from .protocol import (
    Baton, ChannelClosed, ClientComm, FreeRunning, MasterComm, inproc_endpoints,
    tcp_endpoints,
)
from .training import ConfigError, TrainConfig, client_train_loop, master_train
from .tree import Forest

TRANSPORTS = ("inproc", "tcp")
DEFAULT_TIMEOUT = 120.0


def make_endpoints(m: int, transport: str = "inproc", **kw):
    if transport == "inproc":
        return inproc_endpoints(m, **kw)
    if transport == "tcp":
        return tcp_endpoints(m, timeout=kw.pop("timeout", DEFAULT_TIMEOUT), **kw)
    raise ValueError(f"unknown transport {transport!r}")


def run_parties(m: int, master_fn, client_fn, transport="inproc", deterministic=False,
                timeout=DEFAULT_TIMEOUT, record=False, transform=None):
    """Run ``master_fn(endpoint)`` here and ``client_fn(rank, endpoint)`` in threads.

    Returns ``(master_result, {rank: client_result}, {rank: trace})`` where
    rank 0 is the master. A failing party closes its links so its peers
    fail fast instead of waiting forever.
    """
    scheduler = Baton() if deterministic else FreeRunning()
    master_ep, client_eps = make_endpoints(m, transport, timeout=timeout, record=record,
                                           scheduler=scheduler, transform=transform)
    results, errors = {}, {}

    def client_main(rank, ep):
        with scheduler.running():
            try:
                results[rank] = client_fn(rank, ep)
            except BaseException as e:  # noqa: BLE001 - re-raised by the master thread
                errors[rank] = e
            finally:
                ep.close()

    threads = [threading.Thread(target=client_main, args=(r, ep), name=f"party-{r}", daemon=True)
               for r, ep in client_eps.items()]
    for th in threads:
        th.start()
    try:
        with scheduler.running():
            master_result = master_fn(master_ep)
    except BaseException as e:
        master_ep.close()
        for th in threads:
            th.join(timeout)
        real = [err for err in errors.values() if not isinstance(err, ChannelClosed)]
        if isinstance(e, ChannelClosed) and real:
            raise real[0] from e
        raise
    for th in threads:
        th.join(timeout)
    master_ep.close()
    if errors:
        rank = min(errors)
        raise errors[rank]
    traces = {}
    if record:
        traces[0] = master_ep.trace
        traces.update({r: ep.trace for r, ep in client_eps.items()})
    return master_result, results, traces


@dataclass
class TrainResult:
    forest: Forest
    partials: dict
    stats: dict
    per_tree: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)


def train_federated(shards: list[ClientShard], config: TrainConfig, master_view: dict,
                    transport="inproc", deterministic=False, record=False,
                    timeout=DEFAULT_TIMEOUT) -> TrainResult:
    """Train a vertically federated random forest with one thread per party.

    The master's label copy comes from party 1, the label provider.
    """
    check_shards(shards, master_view)
    if len(shards) != config.m:
        raise ConfigError(f"config expects m={config.m} parties, got {len(shards)} shards")
    by_rank = {s.party_rank: s for s in shards}
    labels = np.asarray(by_rank[1].labels)

    def master(ep):
        comm = MasterComm(ep, config.m, phase="train")
        forest, per_tree = master_train(comm, config, labels, master_view)
        comm.phase = "teardown"
        comm.shutdown()
        return forest, per_tree, comm.stats

    def client(rank, ep):
        return client_train_loop(ClientComm(ep), by_rank[rank], config)

    (forest, per_tree, stats), partials, traces = run_parties(
        config.m, master, client, transport, deterministic, timeout, record)
    return TrainResult(forest, partials, stats, per_tree, traces)


def predict_federated(forest: Forest, partials: dict, test_shards: list[ClientShard],
                      method=INTERSECT, batched=False, transport="inproc", deterministic=False,
                      record=False, timeout=DEFAULT_TIMEOUT):
    """Federated prediction over held-out shards; returns a :class:`PredictionReport`."""
    by_rank = {s.party_rank: s for s in test_shards}
    n = test_shards[0].n_samples if test_shards else 0
    m = forest.m

    def master(ep):
        comm = MasterComm(ep, m, phase="predict")
        if method == INTERSECT:
            report = master_predict_intersect(comm, forest, n, batched)
        elif method == CLASSICAL:
            report = master_predict_classical(comm, forest, n)
        else:
            raise ValueError(f"unknown prediction method {method!r}")
        comm.phase = "teardown"
        comm.shutdown()
        report.stats = comm.stats["predict"]
        return report

    def client(rank, ep):
        client_predict_loop(ClientComm(ep), partials[rank], by_rank[rank].features, n)

    report, _, traces = run_parties(m, master, client, transport, deterministic, timeout, record)
    if record:
        report.traces = traces
    return report
