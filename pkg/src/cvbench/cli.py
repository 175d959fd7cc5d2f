"""Command line entry point: `cvbench <command> ...`."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .clustering import ALGORITHMS, SweepSpec, compute_k_max, sweep_varied_k
from .external import EXTERNAL_IDS, aggregate_external_ranks
from .internal import INDEX_IDS, IndexContext, compute_many
from .pipeline import (BUILTIN_SUITES, PipelineError, load_suite, run_pipeline, stage_cluster, stage_eval,
                       stage_generate, stage_stats)
from .supervised import ConstructionSkipped, procedure1_varied, procedure2_varied, procedure_fixed_k

log = logging.getLogger("cvbench")


def _suite(args):
    return load_suite(args.config or args.suite, args.seed)


def cmd_generate(args) -> int:
    datasets = stage_generate(_suite(args), Path(args.out), args.jobs)
    print(f"wrote {len(datasets)} datasets to {Path(args.out) / 'data'}")
    return 0


def cmd_cluster(args) -> int:
    data = Path(args.data) if args.data else None
    if data is not None and data.is_file():
        return _cluster_file(args, data)
    config = _suite(args)
    out = Path(args.out)
    if data is not None and data.resolve() != (out / "data").resolve():
        # cluster a data directory that lives elsewhere
        io.require(data / "manifest.json", "dataset manifest")
        (out / "data").mkdir(parents=True, exist_ok=True)
        for f in data.iterdir():
            (out / "data" / f.name).write_bytes(f.read_bytes())
    stage_cluster(config, out, tuple(args.scenario), args.jobs)
    print(f"wrote partitions for scenario(s) {', '.join(map(str, args.scenario))} under {out / 'partitions'}")
    return 0


def _cluster_file(args, path: Path) -> int:
    """Varied-k sweep of a single dataset CSV into one partition JSON."""
    ds = io.read_dataset(path)
    k_max = compute_k_max(ds.truth.k_star) if args.kmax == "auto" else int(args.kmax)
    algos = ALGORITHMS if args.algos == "all" else tuple(a.strip() for a in args.algos.split(","))
    spec = SweepSpec(k_max=min(k_max, ds.n - 1), k_min=args.kmin, algorithms=algos, seed=args.seed or 0)
    parts = [p for ps in sweep_varied_k(ds, spec).values() for p in ps]
    if args.import_path:
        imported = io.read_partitions(Path(args.import_path))
        bad = [p.source for p in imported if p.labels.size != ds.n]
        if bad:
            raise ValueError(f"imported partitions do not match the dataset size {ds.n}: {bad[:3]}")
        parts += imported
    io.write_partitions(parts, Path(args.out))
    print(f"wrote {len(parts)} partitions to {args.out}")
    return 0


def cmd_index(args) -> int:
    ds = io.read_dataset(Path(args.data))
    parts = io.read_partitions(Path(args.partitions))
    indexes = INDEX_IDS if args.indexes == "all" else tuple(s.strip() for s in args.indexes.split(","))
    unknown = set(indexes) - set(INDEX_IDS)
    if unknown:
        raise ValueError(f"unknown indexes {sorted(unknown)}")
    ctx = IndexContext(ds)
    rows = []
    for p in parts:
        scores = compute_many(indexes, ds, p, ctx)
        for i in indexes:
            s = scores[i]
            rows.append({"dataset": ds.id, "source": p.source, "k": p.k, "index": i,
                         "raw": None if s is None else s.raw, "adjusted": None if s is None else s.adjusted})
    io.write_rows(Path(args.out), rows, ("dataset", "source", "k", "index", "raw", "adjusted"))
    return 0


# NID is written as the similarity 1 - NID, like the ranking uses it
_EXTERNAL_COLUMNS = tuple("one_minus_nid" if i == "nid" else i for i in EXTERNAL_IDS)


def cmd_external(args) -> int:
    ds = io.read_dataset(Path(args.data))
    parts = io.read_partitions(Path(args.partitions))
    ranks, table = aggregate_external_ranks(ds.truth.labels, parts)
    rows = []
    for p, r, scores in zip(parts, ranks, table):
        row = {"source": p.source, "k": p.k, "aggregated_rank": r}
        row.update(dict(zip(_EXTERNAL_COLUMNS, scores)))
        rows.append(row)
    io.write_rows(Path(args.out), rows, ("source", "k") + _EXTERNAL_COLUMNS + ("aggregated_rank",))
    return 0


def cmd_scenario3_gen(args) -> int:
    ds = io.read_dataset(Path(args.data))
    try:
        if args.mode == "varied":
            rs = (procedure1_varied if args.variant == "p1" else procedure2_varied)(ds)
        else:
            rs = procedure_fixed_k(ds, args.variant, args.target_k, args.runs)
    except ConstructionSkipped as exc:
        print(f"skipped: {exc}", file=sys.stderr)
        return 3
    io.write_partitions(rs.partitions, Path(args.out), rs.reference_ranks)
    return 0


def cmd_eval(args) -> int:
    config = _suite(args)
    res = stage_eval(config, Path(args.out), args.scenario, args.jobs, data_dir=Path(args.data) if args.data else None,
                     partitions_dir=Path(args.partitions) if args.partitions else None)
    print(f"scenario {args.scenario}: {len(res.records)} records, {len(res.rejects)} rejected collections")
    return 0


def cmd_stats(args) -> int:
    out = Path(args.out)
    rows = stage_stats(out.parent, [Path(args.records)], out)
    print(f"wrote {len(rows)} test results to {out}")
    return 0


def cmd_run(args) -> int:
    manifest = run_pipeline(_suite(args), Path(args.out), args.jobs)
    print(json.dumps(manifest.counts, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="suite seed (overrides the config)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes per stage")
    common.add_argument("--out", default="out", help="output directory or file")
    common.add_argument("-v", "--verbose", action="store_true")

    suite = argparse.ArgumentParser(add_help=False)
    suite.add_argument("--suite", default="desk-small", help=f"built-in suite ({', '.join(BUILTIN_SUITES)}) or file")
    suite.add_argument("--config", default=None, help="key = value suite config file (overrides --suite)")

    p = argparse.ArgumentParser(prog="cvbench", description="Internal clustering validity benchmark")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("generate", parents=[common, suite], help="generate synthetic datasets")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("cluster", parents=[common, suite], help="candidate partitions for scenarios 1 and 2")
    s.add_argument("--data", default=None, help="dataset CSV, or dataset directory (default <out>/data)")
    s.add_argument("--scenario", type=int, nargs="+", choices=(1, 2), default=[1, 2],
                   help="directory mode: which scenario candidates to build")
    s.add_argument("--algos", default="all", help="file mode: comma separated algorithms")
    s.add_argument("--kmin", type=int, default=2, help="file mode: smallest k")
    s.add_argument("--kmax", default="auto", help="file mode: largest k, or 'auto' for max(25, 1.75 k*)")
    s.add_argument("--import", dest="import_path", default=None, help="file mode: partition JSON to append")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("index", parents=[common], help="internal index scores for a partition file")
    s.add_argument("--data", required=True)
    s.add_argument("--partitions", required=True)
    s.add_argument("--indexes", default="all", help="'all' or comma separated ids")
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("external", parents=[common], help="external scores and aggregated ranks")
    s.add_argument("--data", required=True)
    s.add_argument("--partitions", required=True)
    s.set_defaults(func=cmd_external)

    s = sub.add_parser("scenario3-gen", parents=[common], help="ranked partitions by merging or splitting")
    s.add_argument("--data", required=True)
    s.add_argument("--variant", choices=("p1", "p2"), required=True)
    s.add_argument("--mode", choices=("varied", "fixed"), default="varied")
    s.add_argument("--runs", type=int, default=5)
    s.add_argument("--target-k", type=int, default=None)
    s.set_defaults(func=cmd_scenario3_gen)

    s = sub.add_parser("eval", parents=[common, suite], help="evaluate one scenario")
    s.add_argument("--scenario", type=int, choices=(1, 2, 3), required=True)
    s.add_argument("--data", default=None, help="dataset directory (default <out>/data)")
    s.add_argument("--partitions", default=None, help="partition directory (default <out>/partitions/s<N>)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("stats", parents=[common], help="significance tests over evaluation records")
    s.add_argument("--records", required=True)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("run", parents=[common, suite], help="full pipeline")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
