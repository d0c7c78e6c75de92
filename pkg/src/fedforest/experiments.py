"""Verification repeats and benchmark sweeps on a single pooled table."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .dataset import RawTable, encode_features, split_rows, stack_columns, subset_shards, vertical_partition
from .federation import predict_federated, train_federated
from .oracle import assert_equivalent, centralized_train, score
from .prediction import CLASSICAL, INTERSECT
from .stats import two_sample_ztest
from .training import TrainConfig

METRICS_HEADER = ("phase", "n_trees", "max_depth", "m", "test_fraction", "method", "p2p",
                  "broadcasts", "gathers", "payload_ids", "wall_ms", "metric")

SWEEPS = {
    "estimators": ("n_trees", (8, 16, 24, 32)),
    "depth": ("max_depth", (4, 8, 12, 16)),
    "test_fraction": ("test_fraction", (0.1, 0.2, 0.3, 0.4)),
    "parties": ("m", (1, 2, 3, 4, 5, 6, 7, 8)),
}


def federate(table: RawTable, m: int, seed: int, salt: str = ""):
    """Partition ``table`` over ``m`` parties and encode the features."""
    return encode_features(vertical_partition(table, m, seed, salt))


@dataclass
class Split:
    train: list
    test: list
    view: dict


def federated_split(table: RawTable, m: int, test_fraction: float, partition_seed: int,
                    split_seed: int) -> Split:
    shards, view = federate(table, m, partition_seed)
    tr, te = split_rows(shards[0].n_samples, test_fraction, split_seed)
    return Split(subset_shards(shards, tr), subset_shards(shards, te), view)


def verify_repeat(table: RawTable, config: TrainConfig, repeat: int, test_fraction=0.3,
                  independent=False, transport="inproc") -> dict:
    """One federated-vs-centralized comparison.

    In shared-seed mode both sides use ``config.seed + repeat``; with
    ``independent`` the centralized forest gets a different seed, so only
    the scores are comparable.
    """
    base = config.seed + 2 * repeat if independent else config.seed + repeat
    fed_cfg = replace(config, seed=base)
    cen_cfg = replace(config, seed=base + 1) if independent else fed_cfg
    sp = federated_split(table, config.m, test_fraction, config.seed, config.seed + 7919 * (repeat + 1))
    res = train_federated(sp.train, fed_cfg, sp.view, transport=transport)
    Xtr, fids = stack_columns(sp.train)
    cen = centralized_train(Xtr, fids, sp.train[0].labels, cen_cfg, sp.view)
    Xte, _ = stack_columns(sp.test)
    y_te = sp.test[0].labels
    fed_pred = predict_federated(res.forest, res.partials, sp.test, INTERSECT, transport=transport)
    if independent:
        cen_scored = replace(cen, fingerprint=res.forest.fingerprint)
        report = assert_equivalent(res.forest, cen_scored, Xte, fids, y_te)
    else:
        report = assert_equivalent(res.forest, cen, Xte, fids, y_te)
    out = report.to_dict()
    out["accuracy_federated"] = score(config.task, y_te, fed_pred.predictions)
    out.update(repeat=repeat, seed_federated=fed_cfg.seed, seed_centralized=cen_cfg.seed)
    return out


def run_verify(table: RawTable, config: TrainConfig, repeats: int, test_fraction=0.3,
               independent=False, transport="inproc"):
    """Returns ``(per_repeat_records, summary)``."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    records = [verify_repeat(table, config, r, test_fraction, independent, transport)
               for r in range(repeats)]
    fed = np.array([r["accuracy_federated"] for r in records])
    cen = np.array([r["accuracy_centralized"] for r in records])
    summary = {
        "repeats": repeats,
        "mode": "independent-seeds" if independent else "shared-seed",
        "metric": records[0]["metric"],
        "federated_mean": float(fed.mean()), "federated_std": float(fed.std(ddof=1)) if repeats > 1 else 0.0,
        "centralized_mean": float(cen.mean()), "centralized_std": float(cen.std(ddof=1)) if repeats > 1 else 0.0,
        "all_structural_equal": all(r["structural_equal"] for r in records),
    }
    if independent and repeats > 1:
        z, p = two_sample_ztest(fed, cen)
        summary.update(z=z, p_value=p)
    return records, summary


def bench_point(table: RawTable, config: TrainConfig, test_fraction: float, transport="inproc"):
    """Train once and predict with both methods; returns metrics rows (dicts)."""
    sp = federated_split(table, config.m, test_fraction, config.seed, config.seed + 1)
    t0 = time.perf_counter()
    res = train_federated(sp.train, config, sp.view, transport=transport)
    wall = (time.perf_counter() - t0) * 1e3
    y_te = sp.test[0].labels
    common = {"n_trees": config.n_trees, "max_depth": config.max_depth, "m": config.m,
              "test_fraction": test_fraction}
    s = res.stats["train"]
    rows = [dict(phase="train", method="-", p2p=s.p2p, broadcasts=s.broadcasts, gathers=s.gathers,
                 payload_ids=s.payload_ids, wall_ms=round(wall, 3), metric="", **common)]
    for method in (INTERSECT, CLASSICAL):
        t0 = time.perf_counter()
        rep = predict_federated(res.forest, res.partials, sp.test, method, transport=transport)
        wall = (time.perf_counter() - t0) * 1e3
        s = rep.stats
        rows.append(dict(phase="predict", method=method, p2p=s.p2p, broadcasts=s.broadcasts,
                         gathers=s.gathers, payload_ids=s.payload_ids, wall_ms=round(wall, 3),
                         metric=score(config.task, y_te, rep.predictions), **common))
    return rows


def run_bench(table: RawTable, sweep: str, config: TrainConfig, values=None, test_fraction=0.3,
              transport="inproc"):
    """Sweep one knob, holding the rest of ``config`` fixed."""
    if sweep not in SWEEPS:
        raise ValueError(f"unknown sweep {sweep!r}; choose from {sorted(SWEEPS)}")
    knob, default = SWEEPS[sweep]
    rows = []
    for v in values or default:
        if knob == "test_fraction":
            rows += bench_point(table, config, float(v), transport)
        else:
            if knob == "m" and int(v) > table.n_features:
                continue
            rows += bench_point(table, replace(config, **{knob: type(getattr(config, knob))(v)}),
                                test_fraction, transport)
    return rows
