"""Tabular ingestion and simulated vertical partitioning.

A single table is split column-wise into ``m`` party shards. Every shard
keeps the full (plaintext) label vector and the same hashed sample ids in
one canonical order, which is ascending digest order.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class RawTable:
    column_names: list[str]
    rows: np.ndarray
    labels: np.ndarray | None = None
    label_column: str | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise DataError("rows must be a 2-d array")
        if self.rows.shape[1] != len(self.column_names):
            raise DataError(
                f"row width {self.rows.shape[1]} != column count {len(self.column_names)}")
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("column names must be unique")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if len(self.labels) != len(self.rows):
                raise DataError("label count does not match row count")

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]


@dataclass
class ClientShard:
    """One party's vertical slice of the data.

    ``features`` maps a feature key to its column. Before
    :func:`encode_features` the keys are the original column names; after,
    they are opaque integer ids and the names live only in ``name_map``.
    """

    party_rank: int
    sample_ids: list[str]
    features: dict
    labels: np.ndarray
    name_map: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.sample_ids)
        for key, col in self.features.items():
            if len(col) != n:
                raise DataError(f"feature {key!r} has {len(col)} values, expected {n}")
        if len(self.labels) != n:
            raise DataError(f"label vector has {len(self.labels)} values, expected {n}")

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    def feature_ids(self) -> list:
        return sorted(self.features)


def load_csv(path, label_column: str) -> RawTable:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: missing header row") from None
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header")
        values = []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}")
            parsed = []
            for name, cell in zip(header, row):
                try:
                    x = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell {cell!r} at row {row_no}, column {name!r}") from None
                if not math.isfinite(x):
                    raise DataError(f"{path}: non-finite cell at row {row_no}, column {name!r}")
                parsed.append(x)
            values.append(parsed)
    if not values:
        raise DataError(f"{path}: no rows")
    data = np.array(values, dtype=np.float64)
    li = header.index(label_column)
    names = [h for i, h in enumerate(header) if i != li]
    return RawTable(names, np.delete(data, li, axis=1), data[:, li], label_column)


def hash_ids(raw_ids, salt: str) -> list[str]:
    """Salted SHA-256 digests of the raw ids, as 64-char lowercase hex."""
    raw_ids = list(raw_ids)
    if not raw_ids:
        raise DataError("no ids to hash")
    if len(set(raw_ids)) != len(raw_ids):
        raise DataError("duplicate raw ids")
    prefix = salt.encode("utf-8") + b"\x00"
    return [hashlib.sha256(prefix + str(r).encode("utf-8")).hexdigest() for r in raw_ids]


def _take(shard: ClientShard, rows: np.ndarray) -> ClientShard:
    return replace(
        shard,
        sample_ids=[shard.sample_ids[i] for i in rows],
        features={k: np.asarray(v)[rows] for k, v in shard.features.items()},
        labels=np.asarray(shard.labels)[rows],
    )


def align_shards(shards: list[ClientShard]) -> list[ClientShard]:
    if not shards:
        raise DataError("no shards to align")
    common = set(shards[0].sample_ids)
    for s in shards[1:]:
        common &= set(s.sample_ids)
    if not common:
        raise DataError("no common samples")
    order = sorted(common)
    out = []
    for s in shards:
        pos = {sid: i for i, sid in enumerate(s.sample_ids)}
        out.append(_take(s, np.array([pos[sid] for sid in order], dtype=np.int64)))
    return out


def vertical_partition(table: RawTable, m: int, seed: int, salt: str = "",
                       raw_ids=None) -> list[ClientShard]:
    """Randomly deal the feature columns of ``table`` out to ``m`` parties.

    Each party gets at least one column. Row ids (row numbers unless
    ``raw_ids`` is given) are hashed with ``salt`` and the returned shards
    are already aligned.
    """
    if m < 1:
        raise DataError("party count must be >= 1")
    if m > table.n_features:
        raise DataError(f"cannot split {table.n_features} features over {m} parties")
    if table.labels is None:
        raise DataError("table has no labels")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(table.n_features)
    owner = np.empty(table.n_features, dtype=np.int64)
    owner[perm[:m]] = np.arange(m)
    owner[perm[m:]] = rng.integers(0, m, size=table.n_features - m)
    if raw_ids is None:
        raw_ids = [str(i) for i in range(table.n_samples)]
    ids = hash_ids(raw_ids, salt)
    shards = []
    for r in range(m):
        cols = np.flatnonzero(owner == r)
        shards.append(ClientShard(
            party_rank=r + 1,
            sample_ids=list(ids),
            features={table.column_names[c]: table.rows[:, c].copy() for c in cols},
            labels=np.array(table.labels, copy=True),
        ))
    return align_shards(shards)


def encode_features(shards: list[ClientShard], seed: int | None = None):
    """Replace feature names by globally unique opaque integer ids.

    With ``seed=None`` ids are handed out sequentially in rank order;
    otherwise they are a seeded permutation of ``0..F-1``.

    Returns ``(encoded_shards, master_view)`` where ``master_view`` maps a
    party rank to the tuple of ids it holds. Names never leave the shard.
    """
    ordered = sorted(shards, key=lambda s: s.party_rank)
    total = sum(len(s.features) for s in ordered)
    ids = np.arange(total)
    if seed is not None:
        ids = np.random.default_rng(seed).permutation(total)
    out, view, nxt = [], {}, 0
    for s in ordered:
        feats, names = {}, {}
        for name in s.features:
            fid = int(ids[nxt])
            nxt += 1
            feats[fid] = np.asarray(s.features[name], dtype=np.float64)
            names[fid] = str(name)
        out.append(replace(s, features=feats, name_map=names))
        view[s.party_rank] = tuple(sorted(feats))
    return out, view


def subset_shards(shards: list[ClientShard], rows) -> list[ClientShard]:
    """Restrict every shard to the same canonical row indices."""
    rows = np.asarray(rows, dtype=np.int64)
    return [_take(s, rows) for s in shards]


def split_rows(n_samples: int, test_fraction: float, seed: int):
    """Seeded train/test split of ``range(n_samples)``; both parts sorted."""
    if not 0.0 <= test_fraction < 1.0:
        raise DataError("test fraction must lie in [0, 1)")
    n_test = int(round(test_fraction * n_samples))
    perm = np.random.default_rng(seed).permutation(n_samples)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def stack_columns(shards: list[ClientShard]):
    """Column union of aligned, encoded shards.

    Returns ``(X, feature_ids)`` with columns ordered by ascending id.
    """
    cols = {}
    for s in shards:
        cols.update(s.features)
    fids = sorted(cols)
    n = shards[0].n_samples
    X = np.empty((n, len(fids)), dtype=np.float64)
    for j, f in enumerate(fids):
        X[:, j] = cols[f]
    return X, fids


# -- shard directory layout ---------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def write_shard_csv(path: Path, shard: ClientShard):
    fids = shard.feature_ids()
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", *[str(f) for f in fids], "label"])
        for i, sid in enumerate(shard.sample_ids):
            w.writerow([sid, *[_fmt(shard.features[f][i]) for f in fids], _fmt(shard.labels[i])])


def read_shard_csv(path: Path, rank: int, name_map=None) -> ClientShard:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "sample_id" or header[-1] != "label":
            raise DataError(f"{path}: unexpected header")
        fids = [int(h) for h in header[1:-1]]
        ids, vals = [], []
        for row in reader:
            ids.append(row[0])
            vals.append([float(c) for c in row[1:]])
    data = np.array(vals, dtype=np.float64).reshape(len(ids), len(fids) + 1)
    return ClientShard(
        party_rank=rank,
        sample_ids=ids,
        features={f: data[:, j].copy() for j, f in enumerate(fids)},
        labels=data[:, -1].copy(),
        name_map=dict(name_map or {}),
    )


def write_shard_dir(out_dir, shards: list[ClientShard], master_view: dict,
                    test_shards: list[ClientShard] | None = None):
    """Write ``party_<r>/data.csv``, ``party_<r>/features.map`` and ``master.view``.

    Held-out rows, when given, go to ``party_<r>/test.csv``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tests = {s.party_rank: s for s in (test_shards or [])}
    for s in shards:
        pdir = out / f"party_{s.party_rank}"
        pdir.mkdir(exist_ok=True)
        write_shard_csv(pdir / "data.csv", s)
        with (pdir / "features.map").open("w", encoding="utf-8") as fh:
            for fid in sorted(s.name_map):
                fh.write(f"{fid}\t{s.name_map[fid]}\n")
        if s.party_rank in tests:
            write_shard_csv(pdir / "test.csv", tests[s.party_rank])
    with (out / "master.view").open("w", encoding="utf-8") as fh:
        for rank in sorted(master_view):
            fh.write(f"{rank}\t{','.join(str(f) for f in master_view[rank])}\n")


def read_master_view(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    view = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rank, _, ids = line.partition("\t")
        view[int(rank)] = tuple(int(x) for x in ids.split(",") if x)
    return view


def read_features_map(path) -> dict:
    names = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line:
            fid, _, name = line.partition("\t")
            names[int(fid)] = name
    return names


def read_shard_dir(shard_dir, split: str = "data"):
    """Load every party shard (``split`` is ``data`` or ``test``) plus the master view."""
    root = Path(shard_dir)
    view = read_master_view(root / "master.view")
    shards = []
    for rank in sorted(view):
        pdir = root / f"party_{rank}"
        names = read_features_map(pdir / "features.map") if (pdir / "features.map").exists() else {}
        shards.append(read_shard_csv(pdir / f"{split}.csv", rank, names))
    check_shards(shards, view)
    return shards, view


def check_shards(shards: list[ClientShard], master_view: dict | None = None):
    """Raise :class:`DataError` unless the shards are aligned with disjoint features."""
    if not shards:
        raise DataError("no shards")
    ref = shards[0].sample_ids
    seen = set()
    for s in shards:
        if s.sample_ids != ref:
            raise DataError(f"party {s.party_rank} is not aligned with party {shards[0].party_rank}")
        fs = set(s.features)
        if fs & seen:
            raise DataError(f"party {s.party_rank} shares feature ids with another party")
        seen |= fs
        if master_view is not None and tuple(sorted(fs)) != tuple(master_view.get(s.party_rank, ())):
            raise DataError(f"party {s.party_rank} features disagree with master view")
