"""CSV / JSON artifacts exchanged between pipeline stages."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import NOISE, Dataset, Partition, PropertyTags
from .evaluation import EvaluationRecord, Reject
from .supervised import RankedPartitionSet

TAG_COLUMNS = ("k_star", "dimensions", "overlap", "imbalance", "has_noise", "compactness_level", "distribution")
RECORD_COLUMNS = ("dataset", "scenario", "source", "index", "top_pick_hit", "rho_all", "rho_under", "rho_over",
                  "range", "n_partitions") + TAG_COLUMNS


class ArtifactMissing(FileNotFoundError):
    """A stage input that an earlier stage should have produced is absent."""


def require(path: Path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise ArtifactMissing(f"missing {what}: {path} (run the producing stage first)")
    return path


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path: Path, rows: Iterable[dict], columns: Sequence[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def read_rows(path: Path) -> list[dict]:
    with require(path, "table").open(newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- datasets

def write_dataset(ds: Dataset, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [f"x{j}" for j in range(ds.dim)] + ["label"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for x, lab in zip(ds.points.tolist(), ds.truth.labels.tolist()):
            w.writerow([repr(v) for v in x] + [lab])


def read_dataset(path: Path, meta: PropertyTags | None = None, id: str | None = None) -> Dataset:
    path = require(path, "dataset")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "label":
            raise ValueError(f"{path}: last column must be 'label'")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    try:
        points = np.array([[float(v) for v in r[:-1]] for r in rows])
        labels = np.array([int(r[-1]) for r in rows])
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    if np.any(labels < NOISE):
        raise ValueError(f"{path}: labels must be >= 0 or {NOISE} for noise")
    return Dataset.create(points, labels, meta, id or path.stem)


def write_data_manifest(entries: list[dict], path: Path) -> None:
    Path(path).write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n")


def load_datasets(data_dir: Path) -> list[Dataset]:
    """Datasets listed in <data_dir>/manifest.json, in manifest order."""
    data_dir = Path(data_dir)
    entries = json.loads(require(data_dir / "manifest.json", "dataset manifest").read_text())
    return [read_dataset(data_dir / e["file"], PropertyTags.from_dict(e["tags"]), e["id"]) for e in entries]


# -------------------------------------------------------------- partitions

def _partition_dict(p: Partition) -> dict:
    d = {"source": p.source, "k": p.k, "labels": p.labels.tolist()}
    for key, val in p.extra.items():
        d[key] = val.item() if isinstance(val, np.generic) else val
    return d


def _partition_from(d: dict) -> Partition:
    extra = {k: v for k, v in d.items() if k not in ("labels", "source", "k")}
    p = Partition.from_labels(d["labels"], d.get("source", ""), **extra)
    if "k" in d and int(d["k"]) != p.k:
        raise ValueError(f"partition {p.source!r} declares k={d['k']} but has {p.k} clusters")
    return p


def write_partitions(partitions: Sequence[Partition], path: Path, reference_ranks=None) -> None:
    items = []
    for i, p in enumerate(partitions):
        d = _partition_dict(p)
        if reference_ranks is not None:
            d["reference_rank"] = int(reference_ranks[i])
        items.append(d)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(items) + "\n")


def read_partitions(path: Path) -> list[Partition]:
    items = json.loads(require(path, "partitions").read_text())
    if not isinstance(items, list):
        raise ValueError(f"{path}: expected a JSON array of partitions")
    return [_partition_from(d) for d in items]


def write_ranked_sets(sets: dict[str, RankedPartitionSet], path: Path) -> None:
    out = {}
    for variant, rs in sets.items():
        parts = []
        for p, r in zip(rs.partitions, rs.reference_ranks):
            d = _partition_dict(p)
            d["reference_rank"] = int(r)
            parts.append(d)
        out[variant] = {"variant": variant, "notes": rs.notes, "partitions": parts}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(out) + "\n")


def read_ranked_sets(path: Path) -> dict[str, RankedPartitionSet]:
    raw = json.loads(require(path, "ranked partition sets").read_text())
    out = {}
    for variant, body in raw.items():
        items = body["partitions"]
        ranks = [int(d["reference_rank"]) for d in items]
        parts = [_partition_from({k: v for k, v in d.items() if k != "reference_rank"}) for d in items]
        out[variant] = RankedPartitionSet(parts, np.array(ranks), variant, body.get("notes", {}))
    return out


# ----------------------------------------------------------------- records

def record_row(r: EvaluationRecord) -> dict:
    row = {c: getattr(r, c) for c in RECORD_COLUMNS if c not in TAG_COLUMNS}
    row.update({c: r.tags.get(c) for c in TAG_COLUMNS})
    return row


def write_records(records: Sequence[EvaluationRecord], path: Path) -> None:
    write_rows(path, (record_row(r) for r in records), RECORD_COLUMNS)


def _opt_float(s: str):
    return None if s == "" else float(s)


def read_records(path: Path) -> list[EvaluationRecord]:
    out = []
    for row in read_rows(path):
        tags = {}
        for c in TAG_COLUMNS:
            if row.get(c, "") != "":
                tags[c] = row[c]
        if tags:
            tags = PropertyTags.from_dict(tags).as_dict()
        out.append(EvaluationRecord(
            dataset=row["dataset"], scenario=int(row["scenario"]), source=row["source"], index=row["index"],
            top_pick_hit=row["top_pick_hit"] == "true", rho_all=_opt_float(row["rho_all"]),
            rho_under=_opt_float(row["rho_under"]), rho_over=_opt_float(row["rho_over"]),
            range=float(row["range"]), n_partitions=int(row["n_partitions"]), tags=tags))
    return out


def write_rejects(rejects: Sequence[Reject], path: Path) -> None:
    cols = ("dataset", "scenario", "source", "reason", "max_ari")
    write_rows(path, ({c: getattr(r, c) for c in cols} for r in rejects), cols)
