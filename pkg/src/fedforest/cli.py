"""``ff`` command line: partition, train, predict, verify, bench.

Exit codes: 0 success, 1 usage, 2 data error, 3 protocol error,
4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from .dataset import (
    DataError, encode_features, load_csv, read_master_view, read_shard_csv, read_shard_dir,
    split_rows, subset_shards, vertical_partition, write_shard_dir,
)
from .experiments import METRICS_HEADER, SWEEPS, run_bench, run_verify
from .federation import DEFAULT_TIMEOUT, TRANSPORTS, predict_federated, train_federated
from .prediction import (
    INTERSECT, METHODS, client_predict_loop, master_predict_classical,
    master_predict_intersect,
)
from .protocol import (
    ChannelClosed, ClientComm, MasterComm, ProtocolError, TcpListener, WireError, stats_jsonl,
    tcp_client_endpoint,
)
from .training import ConfigError, TrainConfig, client_train_loop, master_train
from .tree import TreeError, forest_from_json, forest_to_json

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PROTOCOL, EXIT_VERIFY = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--transport", choices=TRANSPORTS, default="inproc")
    common.add_argument("--config", type=Path, help="key = value TrainConfig file")

    p = _Parser(prog="ff", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("partition", parents=[common], help="split a CSV into party shards")
    s.add_argument("--input", type=Path, required=True)
    s.add_argument("--label", required=True)
    s.add_argument("--m", type=_positive, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--test-fraction", type=float, default=0.0,
                   help="hold out this share of rows as party_<r>/test.csv")
    s.add_argument("--salt", default="", help="salt for id hashing")

    def party_flags(s):
        s.add_argument("--deterministic-schedule", action="store_true",
                       help="run all parties one at a time")
        s.add_argument("--role", choices=("all", "master", "client"), default="all")
        s.add_argument("--rank", type=_positive, help="client rank for --role client")
        s.add_argument("--host", default="127.0.0.1")
        s.add_argument("--port", type=int, default=0)
        s.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)

    s = sub.add_parser("train", parents=[common], help="train federated random forests")
    s.add_argument("--shards", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    party_flags(s)

    s = sub.add_parser("predict", parents=[common], help="federated prediction")
    s.add_argument("--models", type=Path, required=True)
    s.add_argument("--shards", type=Path, required=True)
    s.add_argument("--split", default="test", help="shard file to predict (test or data)")
    s.add_argument("--method", choices=METHODS, default=INTERSECT)
    s.add_argument("--rounds", choices=("one-per-tree", "one-per-forest"), default="one-per-tree")
    s.add_argument("--out", type=Path, required=True)
    party_flags(s)

    s = sub.add_parser("verify", parents=[common], help="federated vs centralized equivalence")
    s.add_argument("--input", type=Path, required=True)
    s.add_argument("--label", required=True)
    s.add_argument("--repeats", type=_positive, default=1)
    s.add_argument("--m", type=_positive, default=None)
    s.add_argument("--test-fraction", type=float, default=0.3)
    s.add_argument("--independent-seeds", action="store_true")

    s = sub.add_parser("bench", parents=[common], help="message-count sweeps")
    s.add_argument("--input", type=Path, required=True)
    s.add_argument("--label", required=True)
    s.add_argument("--sweep", choices=sorted(SWEEPS), required=True)
    s.add_argument("--values", help="comma-separated sweep values")
    s.add_argument("--m", type=_positive, default=None)
    s.add_argument("--test-fraction", type=float, default=0.3)
    s.add_argument("--out", type=Path, help="metrics CSV (stdout if omitted)")
    return p


def _config(args, **overrides) -> TrainConfig:
    overrides["seed"] = args.seed
    if args.config:
        return TrainConfig.from_file(args.config, **overrides)
    return TrainConfig(**{k: v for k, v in overrides.items() if v is not None})


# -- partition --------------------------------------------------------------

def cmd_partition(args):
    table = load_csv(args.input, args.label)
    seed = 0 if args.seed is None else args.seed
    shards, view = encode_features(vertical_partition(table, args.m, seed, args.salt))
    test = None
    if args.test_fraction > 0:
        tr, te = split_rows(shards[0].n_samples, args.test_fraction, seed)
        shards, test = subset_shards(shards, tr), subset_shards(shards, te)
    write_shard_dir(args.out, shards, view, test)
    print(f"wrote {args.m} party shards ({shards[0].n_samples} rows) to {args.out}")


# -- train ------------------------------------------------------------------

def _write_models(out: Path, forest=None, partials=None):
    out.mkdir(parents=True, exist_ok=True)
    if forest is not None:
        (out / "master.model.json").write_text(forest_to_json(forest))
    for rank, pf in (partials or {}).items():
        (out / f"party_{rank}.model.json").write_text(forest_to_json(pf))


def cmd_train(args):
    view = read_master_view(args.shards / "master.view")
    config = _config(args, m=None if args.config else len(view))
    if config.m != len(view):
        raise ConfigError(f"config m={config.m} but the shard directory has {len(view)} parties")
    t0 = time.perf_counter()
    if args.role == "all":
        shards, view = read_shard_dir(args.shards)
        res = train_federated(shards, config, view, args.transport, args.deterministic_schedule,
                              timeout=args.timeout)
        _write_models(args.out, res.forest, res.partials)
        stats = res.stats
    elif args.role == "master":
        labels = read_shard_csv(args.shards / "party_1" / "data.csv", 1).labels
        listener = TcpListener(config.m, args.host, args.port)
        print(f"master listening on {listener.host}:{listener.port}", flush=True)
        comm = MasterComm(listener.accept(args.timeout), config.m)
        forest, _ = master_train(comm, config, labels, view)
        comm.phase = "teardown"
        comm.shutdown()
        comm.endpoint.close()
        _write_models(args.out, forest)
        stats = comm.stats
    else:
        shard = _client_shard(args, "data")
        ep = tcp_client_endpoint(args.rank, args.host, args.port, args.timeout)
        forest = client_train_loop(ClientComm(ep), shard, config)
        ep.close()
        _write_models(args.out, partials={args.rank: forest})
        return
    wall = (time.perf_counter() - t0) * 1e3
    (args.out / "train.stats.jsonl").write_text(stats_jsonl({"train": stats["train"]}))
    print(f"trained {config.n_trees} trees over {config.m} parties in {wall:.1f} ms")


def _client_shard(args, split):
    if args.rank is None:
        raise UsageError("--role client requires --rank")
    pdir = args.shards / f"party_{args.rank}"
    return read_shard_csv(pdir / f"{split}.csv", args.rank)


# -- predict ----------------------------------------------------------------

def _write_predictions(path: Path, preds):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_index", "prediction"])
        for i, p in enumerate(preds):
            w.writerow([i, p.item() if hasattr(p, "item") else p])


def cmd_predict(args):
    master_forest = None
    if args.role in ("all", "master"):
        master_forest = forest_from_json((args.models / "master.model.json").read_text())
    batched = args.rounds == "one-per-forest"
    if args.role == "all":
        shards, _ = read_shard_dir(args.shards, args.split)
        partials = {s.party_rank: forest_from_json(
            (args.models / f"party_{s.party_rank}.model.json").read_text()) for s in shards}
        for pf in partials.values():
            if pf.fingerprint != master_forest.fingerprint:
                raise DataError("party model does not belong to the master model")
        report = predict_federated(master_forest, partials, shards, args.method, batched,
                                   args.transport, args.deterministic_schedule, timeout=args.timeout)
    elif args.role == "master":
        view = read_master_view(args.shards / "master.view")
        first = read_shard_csv(args.shards / f"party_{min(view)}" / f"{args.split}.csv", min(view))
        listener = TcpListener(master_forest.m, args.host, args.port)
        print(f"master listening on {listener.host}:{listener.port}", flush=True)
        comm = MasterComm(listener.accept(args.timeout), master_forest.m, phase="predict")
        if args.method == INTERSECT:
            report = master_predict_intersect(comm, master_forest, first.n_samples, batched)
        else:
            report = master_predict_classical(comm, master_forest, first.n_samples)
        comm.phase = "teardown"
        comm.shutdown()
        comm.endpoint.close()
        report.stats = comm.stats["predict"]
    else:
        shard = _client_shard(args, args.split)
        forest = forest_from_json((args.models / f"party_{args.rank}.model.json").read_text())
        ep = tcp_client_endpoint(args.rank, args.host, args.port, args.timeout)
        client_predict_loop(ClientComm(ep), forest, shard.features, shard.n_samples)
        ep.close()
        return
    args.out.mkdir(parents=True, exist_ok=True)
    _write_predictions(args.out / "predictions.csv", report.predictions)
    (args.out / "predict.stats.jsonl").write_text(stats_jsonl({"predict": report.stats}))
    print(f"{len(report.predictions)} predictions via {args.method}: "
          f"{report.stats.gathers} gathers, {report.stats.p2p} messages")


# -- verify / bench -----------------------------------------------------------

def _table_config(args):
    return load_csv(args.input, args.label), _config(args, m=args.m)


def cmd_verify(args):
    table, config = _table_config(args)
    records, summary = run_verify(table, config, args.repeats, args.test_fraction,
                                  args.independent_seeds, args.transport)
    for r in records:
        print(json.dumps(r))
    print(json.dumps({"summary": summary}))
    if not args.independent_seeds and not summary["all_structural_equal"]:
        return EXIT_VERIFY
    if not all(r["prediction_equal"] for r in records) and not args.independent_seeds:
        return EXIT_VERIFY
    return EXIT_OK


def cmd_bench(args):
    table, config = _table_config(args)
    values = None
    if args.values:
        values = [float(v) if "." in v else int(v) for v in args.values.split(",")]
    rows = run_bench(table, args.sweep, config, values, args.test_fraction, args.transport)
    fh = args.out.open("w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=METRICS_HEADER, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()


COMMANDS = {"partition": cmd_partition, "train": cmd_train, "predict": cmd_predict,
            "verify": cmd_verify, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args) or EXIT_OK
    except UsageError as e:
        print(f"ff: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConfigError, TreeError, FileNotFoundError) as e:
        print(f"ff: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ProtocolError, ChannelClosed, WireError) as e:
        print(f"ff: protocol error: {e}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
