"""File formats: ranking and covariate CSVs, JSON configs and result documents.

Rankings CSV
    Header row of entity names, optionally preceded by a ``ranker`` column.
    One row per ranker; each cell is a positive integer rank or empty for an
    unranked entity. Ranks in a partial row only need to be distinct and at
    most ``n``; their relative order is what counts.

Covariates CSV
    Header ``entity,<name>,...``; one row per entity, matched by name.

Quoting follows the ``csv`` module's minimal rule: a field is quoted only
when it contains a comma, a quote or a line break, and embedded quotes are
doubled. Lines end with ``\\n``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rankings import PartialRanking

SCHEMA_VERSION = "1.0"


class FormatError(ValueError):
    """Malformed or inconsistent input file."""


@dataclass
class RankingTable:
    names: list
    lists: list  # PartialRanking per ranker
    rankers: list | None = None

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def m(self) -> int:
        return len(self.lists)

    @property
    def is_partial(self) -> bool:
        return any(not p.is_full for p in self.lists)

    def full_matrix(self) -> np.ndarray:
        if self.is_partial:
            raise FormatError("table contains partial lists")
        return np.stack([p.to_ranking() for p in self.lists])


def _parse_int(cell: str, where: str) -> int:
    try:
        v = float(cell)
    except ValueError:
        raise FormatError(f"{where}: rank {cell!r} is not an integer") from None
    if not v.is_integer():
        raise FormatError(f"{where}: rank {cell!r} is not an integer")
    return int(v)


def load_rankings(path) -> RankingTable:
    with open(path, newline="") as fh:
        # a row of empty cells is a ranker who ranked nothing; only blank lines go
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise FormatError(f"{path}: empty rankings file")
    header = [h.strip() for h in rows[0]]
    label_col = header[0].lower() == "ranker"
    names = header[1:] if label_col else header
    if len(set(names)) != len(names):
        raise FormatError(f"{path}: duplicate entity names in header")
    n = len(names)
    if n == 0:
        raise FormatError(f"{path}: no entities in header")
    lists, rankers = [], []
    for li, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FormatError(f"{path}: line {li} has {len(row)} cells, expected {len(header)}")
        if label_col:
            rankers.append(row[0].strip())
            row = row[1:]
        pos = {}
        for i, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                continue
            r = _parse_int(cell, f"{path}: line {li}, entity {names[i]!r}")
            if not 1 <= r <= n:
                raise FormatError(f"{path}: line {li}: rank {r} for {names[i]!r} outside 1..{n}")
            pos[i] = r
        vals = list(pos.values())
        if len(set(vals)) != len(vals):
            dup = sorted({v for v in vals if vals.count(v) > 1})
            raise FormatError(f"{path}: line {li}: duplicate rank(s) {dup}")
        order = sorted(pos, key=pos.__getitem__)
        lists.append(PartialRanking(n, {e: k for k, e in enumerate(order, start=1)}))
    if not lists:
        raise FormatError(f"{path}: no ranking rows")
    return RankingTable(names=names, lists=lists, rankers=rankers if label_col else None)


def write_rankings(path, table: RankingTable) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = list(table.names)
        if table.rankers is not None:
            head = ["ranker"] + head
        w.writerow(head)
        for k, p in enumerate(table.lists):
            row = [str(p.positions[i]) if i in p.positions else "" for i in range(table.n)]
            if table.rankers is not None:
                row = [table.rankers[k]] + row
            w.writerow(row)
    return path


def table_from_matrix(P, names=None) -> RankingTable:
    P = np.atleast_2d(np.asarray(P))
    names = names or [f"E{i + 1}" for i in range(P.shape[1])]
    return RankingTable(list(names), [PartialRanking.from_full(r) for r in P])


@dataclass
class CovariateTable:
    X: np.ndarray
    columns: list
    center: np.ndarray | None = None
    scale: np.ndarray | None = None


def load_covariates(path, entity_names, standardize: bool = True) -> CovariateTable:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows or len(rows[0]) < 2:
        raise FormatError(f"{path}: need a header 'entity,<covariate>,...'")
    cols = [c.strip() for c in rows[0][1:]]
    by_name = {}
    for li, row in enumerate(rows[1:], start=2):
        if len(row) != len(cols) + 1:
            raise FormatError(f"{path}: line {li} has {len(row)} cells, expected {len(cols) + 1}")
        name = row[0].strip()
        if name in by_name:
            raise FormatError(f"{path}: entity {name!r} listed twice")
        try:
            by_name[name] = [float(c) for c in row[1:]]
        except ValueError:
            raise FormatError(f"{path}: line {li}: non-numeric covariate value") from None
    missing = [e for e in entity_names if e not in by_name]
    if missing:
        raise FormatError(f"{path}: no covariate row for entity {missing[0]!r}"
                          + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    extra = sorted(set(by_name) - set(entity_names))
    if extra:
        raise FormatError(f"{path}: covariate row for unknown entity {extra[0]!r}")
    X = np.array([by_name[e] for e in entity_names], dtype=float)
    if not np.all(np.isfinite(X)):
        raise FormatError(f"{path}: covariates must be finite")
    if not standardize:
        return CovariateTable(X, cols)
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    flat = np.flatnonzero(scale == 0)
    if flat.size:
        raise FormatError(f"{path}: covariate {cols[flat[0]]!r} has zero variance; "
                          "cannot standardize")
    return CovariateTable((X - center) / scale, cols, center, scale)


# ---------------------------------------------------------------- JSON

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj, path) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from None


def result_document(kind: str, config: dict, seed, payload: dict, diagnostics: dict,
                    wall_time: float | None = None) -> dict:
    """Versioned result document; only ``run.wall_time_s`` varies between reruns."""
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "run": {"config": config, "seed": seed, "wall_time_s": wall_time},
        "result": payload,
        "diagnostics": diagnostics,
    }


def write_samples(path, samples) -> Path:
    """Flat table of kept chain states."""
    path = Path(path)
    m = samples.gamma.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "phi"] + [f"gamma_{k + 1}" for k in range(m)]
                   + ["labels", "log_post"])
        for s in range(len(samples)):
            w.writerow([int(samples.iterations[s]), repr(float(samples.phi[s]))]
                       + [repr(float(g)) for g in samples.gamma[s]]
                       + [",".join(str(int(v)) for v in samples.labels[s]),
                          repr(float(samples.log_post[s]))])
    return path
